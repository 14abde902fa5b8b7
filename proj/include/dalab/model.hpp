#ifndef DALAB_MODEL_HPP
#define DALAB_MODEL_HPP

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dalab/rng.hpp"
#include "dalab/tape.hpp"
#include "dalab/tensor.hpp"

namespace dalab {

struct ModelSpec {
  std::string arch;  // mlp | cnn_lenet_lite | rnn_text
  int64_t classes = 2;
  // mlp
  int64_t in_dim = 2;
  int64_t hidden = 32;
  // cnn_lenet_lite
  int64_t channels = 1;
  int64_t height = 28;
  int64_t width = 28;
  // rnn_text
  int64_t vocab = 2000;
  int64_t embed_dim = 32;
  int64_t rnn_hidden = 32;

  uint64_t init_seed = 0;

  void validate() const;
};

// Ordered name -> tensor map of trainable parameters, plus the subset of
// names currently selected as attack targets.
struct ParameterSet {
  std::vector<std::string> order;
  std::map<std::string, Tensor> entries;
  std::set<std::string> attackable;

  void add(const std::string& name, Tensor t, bool attack_default);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return entries.count(name) != 0; }
  void zero_grads();
  int64_t count() const;

  std::map<std::string, std::vector<double>> grads() const;
  std::map<std::string, std::vector<double>> values() const;
  void set_values(const std::map<std::string, std::vector<double>>& v);
};

// One minibatch. Image/feature batches carry x; text batches carry token
// index rows (sample-major, seq_len per row) with x left empty.
struct Batch {
  Tensor x;
  std::vector<int> tokens;
  int64_t seq_len = 0;
  std::vector<int> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  bool is_text() const { return seq_len > 0; }
};

// Additive overlays applied during a forward pass without mutating the
// stored parameters. The reserved pseudo-target "input" perturbs the raw
// batch for image models and the embedding output (time-major (B*T, E)
// layout) for rnn_text.
struct Overlays {
  Tensor* input = nullptr;
  std::map<std::string, Tensor*> weights;
};

struct ForwardOpts {
  double dropout_rate = 0.0;
  bool training = false;
  Rng* rng = nullptr;
};

class Model {
 public:
  virtual ~Model() = default;

  const ModelSpec& spec() const { return spec_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  virtual Shape input_overlay_shape(const Batch& batch) const = 0;
  virtual ValId logits(Tape& tape, const Batch& batch, const Overlays* ov = nullptr,
                       const ForwardOpts& opts = {}) = 0;
  // Mean cross-entropy over the batch; toy models may override directly.
  virtual ValId loss(Tape& tape, const Batch& batch, const Overlays* ov = nullptr,
                     const ForwardOpts& opts = {});

 protected:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
  // Parameter leaf with its overlay (if any) added on the tape.
  ValId weight(Tape& tape, const Overlays* ov, const std::string& name);

  ModelSpec spec_;
  ParameterSet params_;
};

// Deterministic build: identical spec (including init_seed) gives
// bit-identical parameters.
std::unique_ptr<Model> build_model(const ModelSpec& spec);

// Bit-exact JSON checkpoint (spec + little-endian f64 payloads).
void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

}  // namespace dalab

#endif
