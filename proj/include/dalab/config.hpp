#ifndef DALAB_CONFIG_HPP
#define DALAB_CONFIG_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dalab/data.hpp"
#include "dalab/model.hpp"
#include "dalab/train.hpp"

namespace dalab {

// Raised on any malformed experiment config; the message carries the
// offending field path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string kind;  // mnist_idx | csv | two_moons | text_synthetic
  std::string images_path, labels_path;            // mnist_idx train files
  std::string test_images_path, test_labels_path;  // optional held-out files
  std::string csv_path;
  int64_t n = 1000;  // generator sample count
  double noise = 0.25;
  int64_t vocab = 200, length = 16;
  uint64_t gen_seed = 0;
  int64_t subset = 0;  // optional nested-subsample size applied to the train pool
  double val_fraction = 0.1, test_fraction = 0.2;
  uint64_t split_seed = 0;

  void validate() const;
};

struct ExperimentConfig {
  std::string schema;
  ModelSpec model;
  DatasetSpec dataset;
  TrainConfig train;
  std::string out_dir = "out";
  std::vector<uint64_t> seeds;

  void validate() const;
};

// Parses and validates the versioned JSON experiment config. All attack
// hyperparameters (method, eps, p, K, targets) must be explicit whenever the
// regularizer is "attack"; there are no silent defaults for them.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin);

// Deterministic train/val/test realization of a DatasetSpec.
SplitResult load_dataset(const DatasetSpec& spec);

// FNV-1a over the raw config bytes, hex-encoded; keys run manifests.
std::string content_hash(const std::string& bytes);

extern const char* kToolVersion;

// Run manifest: everything needed to reproduce the command bit-exactly
// (config hash + seed + tool version), plus wall time and produced files.
void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_text, uint64_t seed, double wall_seconds,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::pair<std::string, double>>& metrics = {});

}  // namespace dalab

#endif
