#include "dalab/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dalab {

using nlohmann::json;

void ModelSpec::validate() const {
  if (arch != "mlp" && arch != "cnn_lenet_lite" && arch != "rnn_text")
    throw std::invalid_argument("unknown architecture: " + arch);
  if (classes < 2) throw std::invalid_argument("class count must be >= 2");
  if (in_dim <= 0 || hidden <= 0 || channels <= 0 || height <= 0 || width <= 0 || vocab <= 0 ||
      embed_dim <= 0 || rnn_hidden <= 0)
    throw std::invalid_argument("model sizes must be positive");
}

void ParameterSet::add(const std::string& name, Tensor t, bool attack_default) {
  if (entries.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
  t.requires_grad = true;
  order.push_back(name);
  entries.emplace(name, std::move(t));
  if (attack_default) attackable.insert(name);
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = entries.find(name);
  if (it == entries.end()) throw std::invalid_argument("unknown parameter " + name);
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw std::invalid_argument("unknown parameter " + name);
  return it->second;
}

void ParameterSet::zero_grads() {
  for (auto& name : order) entries[name].zero_grad();
}

int64_t ParameterSet::count() const {
  int64_t n = 0;
  for (auto& kv : entries) n += kv.second.numel();
  return n;
}

std::map<std::string, std::vector<double>> ParameterSet::grads() const {
  std::map<std::string, std::vector<double>> out;
  for (auto& kv : entries) {
    out[kv.first] = kv.second.grad.empty() ? std::vector<double>(kv.second.data.size(), 0.0)
                                           : kv.second.grad;
  }
  return out;
}

std::map<std::string, std::vector<double>> ParameterSet::values() const {
  std::map<std::string, std::vector<double>> out;
  for (auto& kv : entries) out[kv.first] = kv.second.data;
  return out;
}

void ParameterSet::set_values(const std::map<std::string, std::vector<double>>& v) {
  for (auto& kv : v) at(kv.first).data = kv.second;
}

ValId Model::weight(Tape& tape, const Overlays* ov, const std::string& name) {
  ValId w = tape.leaf(params_.at(name));
  if (ov) {
    auto it = ov->weights.find(name);
    if (it != ov->weights.end()) {
      if (it->second->shape != params_.at(name).shape)
        throw ShapeError("overlay for " + name + " has shape " + shape_str(it->second->shape) +
                         ", parameter has " + shape_str(params_.at(name).shape));
      w = tape.add(w, tape.leaf(*it->second));
    }
  }
  return w;
}

ValId Model::loss(Tape& tape, const Batch& batch, const Overlays* ov, const ForwardOpts& opts) {
  return tape.softmax_cross_entropy(logits(tape, batch, ov, opts), batch.labels);
}

namespace {

Tensor uniform_init(Shape shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

// Input used by an image-model forward: the raw batch plus the optional
// "input" overlay.
ValId image_input(Tape& tape, const Batch& batch, const Overlays* ov) {
  ValId x = tape.constant(batch.x);
  if (ov && ov->input) {
    if (ov->input->shape != batch.x.shape)
      throw ShapeError("input overlay shape " + shape_str(ov->input->shape) +
                       " does not match batch " + shape_str(batch.x.shape));
    x = tape.add(x, tape.leaf(*ov->input));
  }
  return x;
}

class MlpModel : public Model {
 public:
  explicit MlpModel(ModelSpec spec) : Model(std::move(spec)) {
    Rng rng(spec_.init_seed);
    params_.add("fc1.w", uniform_init({spec_.in_dim, spec_.hidden}, spec_.in_dim, rng), true);
    params_.add("fc1.b", uniform_init({spec_.hidden}, spec_.in_dim, rng), false);
    params_.add("fc2.w", uniform_init({spec_.hidden, spec_.classes}, spec_.hidden, rng), true);
    params_.add("fc2.b", uniform_init({spec_.classes}, spec_.hidden, rng), false);
  }

  Shape input_overlay_shape(const Batch& batch) const override { return batch.x.shape; }

  ValId logits(Tape& tape, const Batch& batch, const Overlays* ov,
               const ForwardOpts& opts) override {
    ValId x = image_input(tape, batch, ov);
    ValId h = tape.relu(tape.add(tape.matmul(x, weight(tape, ov, "fc1.w")),
                                 weight(tape, ov, "fc1.b")));
    if (opts.dropout_rate > 0.0)
      h = tape.dropout(h, opts.dropout_rate, *opts.rng, opts.training);
    return tape.add(tape.matmul(h, weight(tape, ov, "fc2.w")), weight(tape, ov, "fc2.b"));
  }
};

class LenetLiteModel : public Model {
 public:
  explicit LenetLiteModel(ModelSpec spec) : Model(std::move(spec)) {
    Rng rng(spec_.init_seed);
    const int64_t C = spec_.channels;
    params_.add("conv1.w", uniform_init({6, C, 5, 5}, C * 25, rng), true);
    params_.add("conv1.b", uniform_init({6}, C * 25, rng), false);
    params_.add("conv2.w", uniform_init({16, 6, 5, 5}, 6 * 25, rng), true);
    params_.add("conv2.b", uniform_init({16}, 6 * 25, rng), false);
    const int64_t flat = flat_dim();
    params_.add("fc1.w", uniform_init({flat, 64}, flat, rng), true);
    params_.add("fc1.b", uniform_init({64}, flat, rng), false);
    params_.add("fc2.w", uniform_init({64, spec_.classes}, 64, rng), true);
    params_.add("fc2.b", uniform_init({spec_.classes}, 64, rng), false);
  }

  int64_t flat_dim() const {
    const int64_t h = ((spec_.height - 5 + 1) / 2 - 5 + 1) / 2;
    const int64_t w = ((spec_.width - 5 + 1) / 2 - 5 + 1) / 2;
    if (h <= 0 || w <= 0)
      throw std::invalid_argument("cnn_lenet_lite input too small: " +
                                  std::to_string(spec_.height) + "x" + std::to_string(spec_.width));
    return 16 * h * w;
  }

  Shape input_overlay_shape(const Batch& batch) const override { return batch.x.shape; }

  ValId logits(Tape& tape, const Batch& batch, const Overlays* ov,
               const ForwardOpts& opts) override {
    ValId x = image_input(tape, batch, ov);
    ValId c1 = tape.relu(tape.add(tape.conv2d(x, weight(tape, ov, "conv1.w"), 1),
                                  weight(tape, ov, "conv1.b")));
    ValId p1 = tape.maxpool2d(c1, 2);
    ValId c2 = tape.relu(tape.add(tape.conv2d(p1, weight(tape, ov, "conv2.w"), 1),
                                  weight(tape, ov, "conv2.b")));
    ValId p2 = tape.maxpool2d(c2, 2);
    ValId h = tape.relu(tape.add(tape.matmul(tape.flatten(p2), weight(tape, ov, "fc1.w")),
                                 weight(tape, ov, "fc1.b")));
    if (opts.dropout_rate > 0.0)
      h = tape.dropout(h, opts.dropout_rate, *opts.rng, opts.training);
    return tape.add(tape.matmul(h, weight(tape, ov, "fc2.w")), weight(tape, ov, "fc2.b"));
  }
};

class RnnTextModel : public Model {
 public:
  explicit RnnTextModel(ModelSpec spec) : Model(std::move(spec)) {
    Rng rng(spec_.init_seed);
    const int64_t E = spec_.embed_dim, H = spec_.rnn_hidden;
    params_.add("embedding", uniform_init({spec_.vocab, E}, E, rng), true);
    params_.add("rnn.ih.w", uniform_init({E, H}, E, rng), true);
    params_.add("rnn.hh.w", uniform_init({H, H}, H, rng), true);
    params_.add("rnn.b", uniform_init({H}, H, rng), false);
    params_.add("fc.w", uniform_init({H, spec_.classes}, H, rng), true);
    params_.add("fc.b", uniform_init({spec_.classes}, H, rng), false);
  }

  Shape input_overlay_shape(const Batch& batch) const override {
    return {batch.size() * batch.seq_len, spec_.embed_dim};
  }

  ValId logits(Tape& tape, const Batch& batch, const Overlays* ov,
               const ForwardOpts& opts) override {
    if (!batch.is_text()) throw std::invalid_argument("rnn_text requires a token batch");
    const int64_t B = batch.size(), T = batch.seq_len;
    // time-major flattening so each step is a contiguous row block
    std::vector<int> idx(static_cast<size_t>(B * T));
    for (int64_t t = 0; t < T; ++t)
      for (int64_t b = 0; b < B; ++b)
        idx[static_cast<size_t>(t * B + b)] = batch.tokens[static_cast<size_t>(b * T + t)];

    ValId emb = tape.embed_lookup(weight(tape, ov, "embedding"), idx);
    if (ov && ov->input) {
      if (ov->input->shape != input_overlay_shape(batch))
        throw ShapeError("input overlay shape " + shape_str(ov->input->shape) +
                         " does not match embedded batch " +
                         shape_str(input_overlay_shape(batch)));
      emb = tape.add(emb, tape.leaf(*ov->input));
    }

    ValId wih = weight(tape, ov, "rnn.ih.w");
    ValId whh = weight(tape, ov, "rnn.hh.w");
    ValId bias = weight(tape, ov, "rnn.b");
    ValId h = tape.constant(Tensor({B, spec_.rnn_hidden}));
    for (int64_t t = 0; t < T; ++t) {
      ValId xt = tape.row_block(emb, t * B, B);
      h = tape.tanh_(tape.add(tape.add(tape.matmul(xt, wih), tape.matmul(h, whh)), bias));
    }
    if (opts.dropout_rate > 0.0)
      h = tape.dropout(h, opts.dropout_rate, *opts.rng, opts.training);
    return tape.add(tape.matmul(h, weight(tape, ov, "fc.w")), weight(tape, ov, "fc.b"));
  }
};

}  // namespace

std::unique_ptr<Model> build_model(const ModelSpec& spec) {
  spec.validate();
  if (spec.arch == "mlp") return std::make_unique<MlpModel>(spec);
  if (spec.arch == "cnn_lenet_lite") return std::make_unique<LenetLiteModel>(spec);
  return std::make_unique<RnnTextModel>(spec);
}

namespace {

std::string doubles_to_hex(const std::vector<double>& v) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(v.size() * 16);
  for (double d : v) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int byte = 0; byte < 8; ++byte) {  // little-endian byte order
      const uint8_t b = static_cast<uint8_t>(bits >> (8 * byte));
      out.push_back(digits[b >> 4]);
      out.push_back(digits[b & 0xf]);
    }
  }
  return out;
}

std::vector<double> hex_to_doubles(const std::string& s) {
  if (s.size() % 16 != 0) throw std::runtime_error("corrupt checkpoint payload");
  auto nib = [](char c) -> uint64_t {
    if (c >= '0' && c <= '9') return static_cast<uint64_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<uint64_t>(c - 'a' + 10);
    throw std::runtime_error("corrupt checkpoint payload");
  };
  std::vector<double> out(s.size() / 16);
  for (size_t i = 0; i < out.size(); ++i) {
    uint64_t bits = 0;
    for (int byte = 0; byte < 8; ++byte) {
      const uint64_t hi = nib(s[i * 16 + static_cast<size_t>(byte) * 2]);
      const uint64_t lo = nib(s[i * 16 + static_cast<size_t>(byte) * 2 + 1]);
      bits |= ((hi << 4) | lo) << (8 * byte);
    }
    std::memcpy(&out[i], &bits, 8);
  }
  return out;
}

json spec_to_json(const ModelSpec& s) {
  return json{{"arch", s.arch},         {"classes", s.classes},     {"in_dim", s.in_dim},
              {"hidden", s.hidden},     {"channels", s.channels},   {"height", s.height},
              {"width", s.width},       {"vocab", s.vocab},         {"embed_dim", s.embed_dim},
              {"rnn_hidden", s.rnn_hidden}, {"init_seed", s.init_seed}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.arch = j.at("arch").get<std::string>();
  s.classes = j.at("classes").get<int64_t>();
  s.in_dim = j.at("in_dim").get<int64_t>();
  s.hidden = j.at("hidden").get<int64_t>();
  s.channels = j.at("channels").get<int64_t>();
  s.height = j.at("height").get<int64_t>();
  s.width = j.at("width").get<int64_t>();
  s.vocab = j.at("vocab").get<int64_t>();
  s.embed_dim = j.at("embed_dim").get<int64_t>();
  s.rnn_hidden = j.at("rnn_hidden").get<int64_t>();
  s.init_seed = j.at("init_seed").get<uint64_t>();
  return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  json j;
  j["schema"] = 1;
  j["model_spec"] = spec_to_json(model.spec());
  json params = json::array();
  for (const std::string& name : model.params().order) {
    const Tensor& t = model.params().at(name);
    params.push_back(json{{"name", name}, {"shape", t.shape}, {"data", doubles_to_hex(t.data)}});
  }
  j["params"] = params;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << j.dump(1) << "\n";
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  json j = json::parse(in);
  auto model = build_model(spec_from_json(j.at("model_spec")));
  for (const json& p : j.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    Tensor& t = model->params().at(name);
    Shape shape = p.at("shape").get<Shape>();
    if (shape != t.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": file " +
                               shape_str(shape) + " vs model " + shape_str(t.shape));
    t.data = hex_to_doubles(p.at("data").get<std::string>());
    if (static_cast<int64_t>(t.data.size()) != numel_of(shape))
      throw std::runtime_error("checkpoint payload size mismatch for " + name);
  }
  return model;
}

}  // namespace dalab
