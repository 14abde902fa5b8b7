#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dalab/analysis.hpp"
#include "dalab/config.hpp"
#include "dalab/gradcheck.hpp"
#include "dalab/train.hpp"

namespace fs = std::filesystem;
using namespace dalab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int workers = 0;
};

ExperimentConfig load_cfg(const CommonOpts& o, std::string& text) {
  text = read_file(o.config_path);
  ExperimentConfig cfg = parse_experiment_config(text, o.config_path);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

int cmd_train(const CommonOpts& o, int64_t seed_override) {
  std::string text;
  ExperimentConfig cfg = load_cfg(o, text);
  std::vector<uint64_t> seeds = cfg.seeds;
  if (seed_override >= 0) seeds = {static_cast<uint64_t>(seed_override)};

  SplitResult data = load_dataset(cfg.dataset);
  for (uint64_t seed : seeds) {
    const double t0 = now_seconds();
    ModelSpec ms = cfg.model;
    ms.init_seed = seed;
    auto model = build_model(ms);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainResult res = train(*model, data.train, data.val, data.test, tc);

    const std::string tag = "_s" + std::to_string(seed);
    const std::string metrics_path = cfg.out_dir + "/metrics" + tag + ".csv";
    const std::string ckpt_path = cfg.out_dir + "/checkpoint" + tag + ".json";
    write_metrics_csv(res.metrics, metrics_path);
    save_checkpoint(*model, ckpt_path);
    write_manifest(cfg.out_dir + "/manifest" + tag + ".json", "train", text, seed,
                   now_seconds() - t0, {metrics_path, ckpt_path},
                   {{"best_val_acc", res.best_val_acc},
                    {"best_epoch", static_cast<double>(res.best_epoch)},
                    {"test_loss", res.test_loss},
                    {"test_acc", res.test_acc},
                    {"fb_count", static_cast<double>(res.fb_count)}});
    std::printf("seed %llu: best_val_acc=%.4f test_acc=%.4f fb_count=%lld\n",
                static_cast<unsigned long long>(seed), res.best_val_acc, res.test_acc,
                static_cast<long long>(res.fb_count));
  }
  return kExitOk;
}

int cmd_sweep(const CommonOpts& o, const std::string& grid_path) {
  std::string text;
  ExperimentConfig cfg = load_cfg(o, text);
  if (cfg.train.regularizer != "attack")
    throw ConfigError("sweep requires train.regularizer = attack (with explicit targets)");

  const std::string grid_text = read_file(grid_path);
  nlohmann::json g;
  try {
    g = nlohmann::json::parse(grid_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(grid_path + ": " + e.what());
  }
  if (!g.contains("epsilons") || !g.contains("ps") || !g.contains("ks"))
    throw ConfigError(grid_path + ": grid file needs epsilons, ps, and ks arrays");
  auto epsilons = g.at("epsilons").get<std::vector<double>>();
  auto ps = g.at("ps").get<std::vector<double>>();
  auto ks = g.at("ks").get<std::vector<int64_t>>();

  const double t0 = now_seconds();
  SplitResult data = load_dataset(cfg.dataset);
  auto rows = sweep(cfg.model, data.train, data.val, data.test, cfg.train, epsilons, ps, ks,
                    cfg.seeds);
  const std::string csv = cfg.out_dir + "/sweep.csv";
  write_sweep_csv(rows, csv);
  write_manifest(cfg.out_dir + "/sweep_manifest.json", "sweep", text + grid_text, cfg.seeds[0],
                 now_seconds() - t0, {csv});
  std::printf("%zu sweep rows -> %s\n", rows.size(), csv.c_str());
  return kExitOk;
}

int cmd_scaling(const CommonOpts& o, const std::string& sizes_arg) {
  std::string text;
  ExperimentConfig cfg = load_cfg(o, text);
  std::vector<int64_t> sizes;
  std::stringstream ss(sizes_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      sizes.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("--sizes: '" + item + "' is not an integer");
    }
  }
  if (sizes.empty()) throw ConfigError("--sizes: expected a comma-separated list");

  const double t0 = now_seconds();
  SplitResult data = load_dataset(cfg.dataset);
  auto rows = scaling_study(cfg.model, data.train, data.val, data.test, cfg.train, sizes,
                            cfg.seeds);
  const std::string csv = cfg.out_dir + "/scaling.csv";
  write_scaling_csv(rows, csv);
  write_manifest(cfg.out_dir + "/scaling_manifest.json", "scaling", text, cfg.seeds[0],
                 now_seconds() - t0, {csv});
  for (const auto& r : rows)
    std::printf("size %lld: standard=%.4f dropattack=%.4f improvement=%+.4f\n",
                static_cast<long long>(r.size), r.standard_acc, r.dropattack_acc, r.improvement);
  return kExitOk;
}

int cmd_landscape(const CommonOpts& o, const std::string& ckpt_path, double range, int64_t res,
                  uint64_t dir_seed) {
  std::string text;
  ExperimentConfig cfg = load_cfg(o, text);
  if (res < 1 || res % 2 == 0) throw ConfigError("--res: resolution must be odd and >= 1");
  if (!(range > 0.0)) throw ConfigError("--range: must be > 0");
  if (!fs::exists(ckpt_path)) throw ConfigError("checkpoint file not found: " + ckpt_path);

  const double t0 = now_seconds();
  auto model = load_checkpoint(ckpt_path);
  SplitResult data = load_dataset(cfg.dataset);

  LandscapeGridSpec gs;
  gs.delta_min = -range;
  gs.delta_max = range;
  gs.eta_min = -range;
  gs.eta_max = range;
  gs.delta_res = res;
  gs.eta_res = res;
  gs.batch_size = cfg.train.batch_size;
  LandscapeGrid grid = scan_landscape(*model, data.test, gs, dir_seed);

  const std::string csv = cfg.out_dir + "/landscape.csv";
  const std::string meta = cfg.out_dir + "/landscape_meta.json";
  write_landscape_csv(grid, csv);
  write_landscape_meta(grid, ckpt_path, data.test.split_tag, meta);
  write_manifest(cfg.out_dir + "/landscape_manifest.json", "landscape", text, dir_seed,
                 now_seconds() - t0, {csv, meta},
                 {{"center_loss", grid.center_loss}, {"sharpness", sharpness(grid)}});
  std::printf("center_loss=%.6f sharpness=%.6f -> %s\n", grid.center_loss, sharpness(grid),
              csv.c_str());
  return kExitOk;
}

int cmd_verify_theory(const CommonOpts& o) {
  std::string text;
  ExperimentConfig cfg = load_cfg(o, text);
  if (cfg.train.regularizer != "attack")
    throw ConfigError("verify-theory requires train.regularizer = attack (with explicit targets)");

  const double t0 = now_seconds();
  const uint64_t seed = cfg.seeds[0];
  ModelSpec ms = cfg.model;
  ms.init_seed = seed;
  auto model = build_model(ms);
  SplitResult data = load_dataset(cfg.dataset);
  const int64_t bs = std::min<int64_t>(cfg.train.batch_size, data.train.size());
  std::vector<int64_t> idx(static_cast<size_t>(bs));
  for (int64_t i = 0; i < bs; ++i) idx[static_cast<size_t>(i)] = i;
  Batch batch = data.train.batch(idx);

  std::vector<double> eps_grid;
  for (double e = 1e-4; e < 1.5e-1; e *= 2.0) eps_grid.push_back(e);
  Rng rng(seed);
  EquivalenceReport rep = verify_first_order(*model, batch, cfg.train.attack, eps_grid, rng);

  const std::string csv = cfg.out_dir + "/equivalence.csv";
  write_equivalence_csv(rep, csv);
  write_manifest(cfg.out_dir + "/equivalence_manifest.json", "verify-theory", text, seed,
                 now_seconds() - t0, {csv}, {{"slope", rep.slope}});
  std::printf("log-log gap slope: %.4f (quadratic residual expects ~2) -> %s\n", rep.slope,
              csv.c_str());
  return kExitOk;
}

int cmd_gradcheck() {
  struct Row {
    std::string name;
    double err;
  };
  std::vector<Row> rows;
  Rng rng(7);

  auto random_tensor = [&](const Shape& s) {
    Tensor t(s);
    for (double& v : t.data) v = rng.normal() * 0.5;
    return t;
  };

  {
    Tensor p = random_tensor({4, 3});
    rows.push_back({"tanh+sum", gradcheck(
                                    [](Tape& t, Tensor& x) {
                                      ValId a = t.leaf(x);
                                      return t.sum(t.tanh_(a));
                                    },
                                    p, 1e-5)});
    rows.push_back({"sigmoid+sum", gradcheck(
                                       [](Tape& t, Tensor& x) {
                                         ValId a = t.leaf(x);
                                         return t.sum(t.sigmoid(a));
                                       },
                                       p, 1e-5)});
    for (double& v : p.data) v += (v >= 0 ? 0.5 : -0.5);  // keep clear of the relu kink
    rows.push_back({"relu+sum", gradcheck(
                                    [](Tape& t, Tensor& x) {
                                      ValId a = t.leaf(x);
                                      return t.sum(t.relu(a));
                                    },
                                    p, 1e-5)});
  }
  {
    Tensor p = random_tensor({3, 5});
    Tensor w = random_tensor({5, 2});
    rows.push_back({"matmul+ce", gradcheck(
                                     [&w](Tape& t, Tensor& x) {
                                       ValId a = t.matmul(t.leaf(x), t.constant(w));
                                       return t.softmax_cross_entropy(a, {0, 1, 1});
                                     },
                                     p, 1e-5)});
  }
  {
    Tensor p = random_tensor({2, 1, 6, 6});
    Tensor k = random_tensor({3, 1, 3, 3});
    rows.push_back({"conv2d+pool", gradcheck(
                                       [&k](Tape& t, Tensor& x) {
                                         ValId c = t.conv2d(t.leaf(x), t.constant(k), 1);
                                         return t.sum(t.maxpool2d(t.tanh_(c), 2));
                                       },
                                       p, 1e-5)});
  }

  bool ok = true;
  std::printf("%-14s %s\n", "op", "max_rel_err");
  for (const Row& r : rows) {
    std::printf("%-14s %.3e\n", r.name.c_str(), r.err);
    ok = ok && r.err < 1e-4;
  }
  std::printf(ok ? "all ops < 1e-4\n" : "FAILURE: gradcheck above 1e-4\n");
  return ok ? kExitOk : 1;
}

int cmd_data_gen(const std::string& kind, const std::string& out_path, int64_t n, double noise,
                 int64_t vocab, int64_t length, uint64_t seed) {
  Dataset ds;
  if (kind == "two-moons") {
    ds = gen_two_moons(n, noise, seed);
  } else if (kind == "text") {
    ds = gen_text_synthetic(vocab, length, n, seed);
  } else {
    throw ConfigError("--kind: expected two-moons or text, got '" + kind + "'");
  }
  const fs::path parent = fs::path(out_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_csv_dataset(ds, out_path);
  std::ostringstream cmd;
  cmd << "data gen --kind " << kind << " --n " << n;
  write_manifest(out_path + ".manifest.json", cmd.str(), ds.provenance, seed, 0.0, {out_path});
  std::printf("wrote %lld samples to %s\n", static_cast<long long>(ds.size()), out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dropattack_lab: masked-perturbation adversarial training experiments"};
  app.require_subcommand(1);

  CommonOpts common;
  int64_t seed_override = -1;
  std::string grid_path, sizes_arg, ckpt_path;
  double range = 1.0;
  int64_t res = 101;
  uint64_t dir_seed = 0;
  std::string gen_kind, gen_out;
  int64_t gen_n = 1000, gen_vocab = 200, gen_length = 16;
  double gen_noise = 0.25;
  uint64_t gen_seed = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", common.config_path, "experiment config JSON")->required();
    sub->add_option("--out", common.out_dir, "output directory (overrides config)");
    sub->add_option("--workers", common.workers, "cap the parallel worker pool");
  };

  CLI::App* trn = app.add_subcommand("train", "train one model per seed");
  add_common(trn, true);
  trn->add_option("--seed", seed_override, "run a single seed instead of the config list");

  CLI::App* swp = app.add_subcommand("sweep", "epsilon/p/K grid sweep");
  add_common(swp, true);
  swp->add_option("--grid", grid_path, "grid JSON with epsilons, ps, ks")->required();

  CLI::App* scl = app.add_subcommand("scaling", "paired standard-vs-attack study on nested subsets");
  add_common(scl, true);
  scl->add_option("--sizes", sizes_arg, "comma-separated training-set sizes")->required();

  CLI::App* lnd = app.add_subcommand("landscape", "loss-landscape scan around a checkpoint");
  add_common(lnd, true);
  lnd->add_option("--checkpoint", ckpt_path, "checkpoint JSON")->required();
  lnd->add_option("--range", range, "scan delta/eta in [-range, range]");
  lnd->add_option("--res", res, "odd grid resolution per axis");
  lnd->add_option("--dir-seed", dir_seed, "direction draw seed");

  CLI::App* vfy = app.add_subcommand("verify-theory", "first-order surrogate gap measurement");
  add_common(vfy, true);

  app.add_subcommand("gradcheck", "finite-difference check of every forward op");

  CLI::App* dat = app.add_subcommand("data", "dataset utilities");
  CLI::App* gen = dat->add_subcommand("gen", "generate a synthetic dataset CSV");
  gen->add_option("--kind", gen_kind, "two-moons | text")->required();
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--n", gen_n, "sample count");
  gen->add_option("--noise", gen_noise, "two-moons Gaussian noise");
  gen->add_option("--vocab", gen_vocab, "text vocabulary size");
  gen->add_option("--length", gen_length, "text sequence length");
  gen->add_option("--seed", gen_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage/diagnostic
    return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
  }

  if (common.workers > 0) omp_set_num_threads(common.workers);

  try {
    if (trn->parsed()) return cmd_train(common, seed_override);
    if (swp->parsed()) return cmd_sweep(common, grid_path);
    if (scl->parsed()) return cmd_scaling(common, sizes_arg);
    if (lnd->parsed()) return cmd_landscape(common, ckpt_path, range, res, dir_seed);
    if (vfy->parsed()) return cmd_verify_theory(common);
    if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
    if (dat->parsed())
      return cmd_data_gen(gen_kind, gen_out, gen_n, gen_noise, gen_vocab, gen_length, gen_seed);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NonFiniteError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
