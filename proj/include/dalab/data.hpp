#ifndef DALAB_DATA_HPP
#define DALAB_DATA_HPP

#include <string>
#include <vector>

#include "dalab/model.hpp"
#include "dalab/tensor.hpp"

namespace dalab {

struct Dataset {
  Tensor x;                 // (n, ...) real inputs; empty for text datasets
  std::vector<int> tokens;  // n * seq_len index rows
  int64_t seq_len = 0;
  std::vector<int> labels;
  int64_t classes = 0;
  std::string split_tag = "train";
  std::string provenance;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  bool is_text() const { return seq_len > 0; }

  Batch batch(const std::vector<int64_t>& indices) const;
  Dataset take(const std::vector<int64_t>& indices, const std::string& tag) const;
};

// IDX format: big-endian magic 0x00000803 (images) / 0x00000801 (labels),
// big-endian dimension sizes, raw bytes. Pixels are scaled to [0,1].
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);
void write_mnist_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path);

Dataset gen_two_moons(int64_t n, double noise, uint64_t seed);

// Random token rows over [3, vocab) with two marker tokens planted at random
// positions: marker 1 before marker 2 labels the row 1, the reverse order
// labels it 0. The label is a token-order interaction, so a sequence model
// has to track state to learn it.
Dataset gen_text_synthetic(int64_t vocab, int64_t length, int64_t n, uint64_t seed);

// Generic CSV dataset: header `label,f0,f1,...` (real features) or
// `label,t0,t1,...` (token indices), one sample per row.
Dataset load_csv_dataset(const std::string& path);
void write_csv_dataset(const Dataset& ds, const std::string& path);

struct SplitResult {
  Dataset train, val, test;
};

// Deterministic shuffled partition; fractions must sum to 1.
SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test, uint64_t seed);

// Prefix of the seeded shuffle, so subsample(k1) is contained in
// subsample(k2) whenever k1 <= k2.
Dataset subsample(const Dataset& ds, int64_t k, uint64_t seed);

}  // namespace dalab

#endif
