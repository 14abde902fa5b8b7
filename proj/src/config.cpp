#include "dalab/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dalab {

using nlohmann::json;

const char* kToolVersion = "dalab 1.0.0";

namespace {

const json& member(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "." + key + ": missing required field");
  return *it;
}

double num(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
  return v.get<double>();
}

int64_t integer(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
  return v.get<int64_t>();
}

std::string str(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

template <typename T>
T opt(const json& j, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

ModelSpec parse_model(const json& j) {
  ModelSpec m;
  m.arch = str(j, "arch", "model");
  m.classes = integer(j, "classes", "model");
  m.in_dim = opt<int64_t>(j, "in_dim", m.in_dim);
  m.hidden = opt<int64_t>(j, "hidden", m.hidden);
  m.channels = opt<int64_t>(j, "channels", m.channels);
  m.height = opt<int64_t>(j, "height", m.height);
  m.width = opt<int64_t>(j, "width", m.width);
  m.vocab = opt<int64_t>(j, "vocab", m.vocab);
  m.embed_dim = opt<int64_t>(j, "embed_dim", m.embed_dim);
  m.rnn_hidden = opt<int64_t>(j, "rnn_hidden", m.rnn_hidden);
  m.init_seed = opt<uint64_t>(j, "init_seed", m.init_seed);
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

DatasetSpec parse_dataset(const json& j) {
  DatasetSpec d;
  d.kind = str(j, "kind", "dataset");
  d.images_path = opt<std::string>(j, "images", "");
  d.labels_path = opt<std::string>(j, "labels", "");
  d.test_images_path = opt<std::string>(j, "test_images", "");
  d.test_labels_path = opt<std::string>(j, "test_labels", "");
  d.csv_path = opt<std::string>(j, "csv", "");
  d.n = opt<int64_t>(j, "n", d.n);
  d.noise = opt<double>(j, "noise", d.noise);
  d.vocab = opt<int64_t>(j, "vocab", d.vocab);
  d.length = opt<int64_t>(j, "length", d.length);
  d.gen_seed = opt<uint64_t>(j, "gen_seed", d.gen_seed);
  d.subset = opt<int64_t>(j, "subset", d.subset);
  d.val_fraction = opt<double>(j, "val_fraction", d.val_fraction);
  d.test_fraction = opt<double>(j, "test_fraction", d.test_fraction);
  d.split_seed = opt<uint64_t>(j, "split_seed", d.split_seed);
  d.validate();
  return d;
}

AttackConfig parse_attack(const json& j) {
  // every attack hyperparameter is mandatory here: a config that turns the
  // attack regularizer on must spell out eps, p, and K
  AttackConfig a;
  a.method = str(j, "method", "attack");
  a.eps_x = num(j, "eps_x", "attack");
  a.eps_theta = num(j, "eps_theta", "attack");
  a.p_x = num(j, "p_x", "attack");
  a.p_theta = num(j, "p_theta", "attack");
  a.K = integer(j, "K", "attack");
  if (a.method == "pgd") {
    a.pgd_radius = num(j, "pgd_radius", "attack");
    a.pgd_step_size = num(j, "pgd_step_size", "attack");
  }
  const json& t = member(j, "targets", "attack");
  if (!t.is_array() || t.empty())
    throw ConfigError("attack.targets: expected a non-empty array of target names");
  for (const auto& v : t) {
    if (!v.is_string()) throw ConfigError("attack.targets: entries must be strings");
    a.targets.push_back(v.get<std::string>());
  }
  try {
    a.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  return a;
}

TrainConfig parse_train(const json& j) {
  TrainConfig t;
  t.epochs = integer(j, "epochs", "train");
  t.batch_size = integer(j, "batch_size", "train");
  t.lr = num(j, "lr", "train");
  t.optimizer = opt<std::string>(j, "optimizer", t.optimizer);
  t.beta1 = opt<double>(j, "beta1", t.beta1);
  t.beta2 = opt<double>(j, "beta2", t.beta2);
  t.adam_eps = opt<double>(j, "adam_eps", t.adam_eps);
  t.regularizer = opt<std::string>(j, "regularizer", t.regularizer);
  t.lambda = opt<double>(j, "lambda", t.lambda);
  t.dropout_rate = opt<double>(j, "dropout_rate", t.dropout_rate);
  t.eval_every = opt<int64_t>(j, "eval_every", t.eval_every);
  t.patience = opt<int64_t>(j, "patience", t.patience);
  if (t.regularizer == "attack") t.attack = parse_attack(member(j, "attack", "train"));
  try {
    t.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return t;
}

}  // namespace

void DatasetSpec::validate() const {
  if (kind != "mnist_idx" && kind != "csv" && kind != "two_moons" && kind != "text_synthetic")
    throw ConfigError("dataset.kind: unknown kind '" + kind + "'");
  if (kind == "mnist_idx" && (images_path.empty() || labels_path.empty()))
    throw ConfigError("dataset: mnist_idx requires images and labels paths");
  if (kind == "mnist_idx" && test_images_path.empty() != test_labels_path.empty())
    throw ConfigError("dataset: test_images and test_labels must be given together");
  if (kind == "csv" && csv_path.empty()) throw ConfigError("dataset.csv: missing path");
  if ((kind == "two_moons" || kind == "text_synthetic") && n < 4)
    throw ConfigError("dataset.n: generator needs at least 4 samples");
  if (kind == "two_moons" && noise < 0.0) throw ConfigError("dataset.noise: must be >= 0");
  if (kind == "text_synthetic" && (vocab < 5 || length < 2))
    throw ConfigError("dataset: text_synthetic needs vocab >= 5 and length >= 2");
  if (subset < 0) throw ConfigError("dataset.subset: must be >= 0");
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0)
    throw ConfigError("dataset: val_fraction + test_fraction must lie in [0, 1)");
}

void ExperimentConfig::validate() const {
  if (schema != "dalab.experiment.v1")
    throw ConfigError("schema: expected 'dalab.experiment.v1', got '" + schema + "'");
  if (seeds.empty()) throw ConfigError("seeds: must list at least one seed");
  dataset.validate();
  try {
    model.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.schema = str(j, "schema", "config");
    cfg.model = parse_model(member(j, "model", "config"));
    cfg.dataset = parse_dataset(member(j, "dataset", "config"));
    cfg.train = parse_train(member(j, "train", "config"));
    cfg.out_dir = opt<std::string>(j, "out_dir", cfg.out_dir);
    if (j.contains("seeds")) {
      const json& s = j.at("seeds");
      if (!s.is_array()) throw ConfigError("seeds: expected an array");
      for (const auto& v : s) cfg.seeds.push_back(v.get<uint64_t>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), path);
}

SplitResult load_dataset(const DatasetSpec& spec) {
  spec.validate();
  SplitResult out;
  if (spec.kind == "mnist_idx" && !spec.test_images_path.empty()) {
    // dedicated held-out files: split the training pool into train/val only
    Dataset pool = load_mnist_idx(spec.images_path, spec.labels_path);
    if (spec.subset > 0) pool = subsample(pool, spec.subset, spec.split_seed);
    const double fv = spec.val_fraction;
    SplitResult tv = split(pool, 1.0 - fv, 0.0, fv, spec.split_seed);
    out.train = std::move(tv.train);
    out.val = std::move(tv.test);
    out.val.split_tag = "val";
    out.test = load_mnist_idx(spec.test_images_path, spec.test_labels_path);
    out.test.split_tag = "test";
    return out;
  }

  Dataset full;
  if (spec.kind == "mnist_idx") {
    full = load_mnist_idx(spec.images_path, spec.labels_path);
  } else if (spec.kind == "csv") {
    full = load_csv_dataset(spec.csv_path);
  } else if (spec.kind == "two_moons") {
    full = gen_two_moons(spec.n, spec.noise, spec.gen_seed);
  } else {
    full = gen_text_synthetic(spec.vocab, spec.length, spec.n, spec.gen_seed);
  }
  if (spec.subset > 0) full = subsample(full, spec.subset, spec.split_seed);
  out = split(full, 1.0 - spec.val_fraction - spec.test_fraction, spec.val_fraction,
              spec.test_fraction, spec.split_seed);
  return out;
}

std::string content_hash(const std::string& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_text, uint64_t seed, double wall_seconds,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::pair<std::string, double>>& metrics) {
  json j;
  j["schema"] = "dalab.manifest.v1";
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["config_hash"] = content_hash(config_text);
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  j["outputs"] = outputs;
  for (const auto& kv : metrics) j["metrics"][kv.first] = kv.second;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << '\n';
}

}  // namespace dalab
