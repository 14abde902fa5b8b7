#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dalab/gradcheck.hpp"
#include "dalab/train.hpp"

using namespace dalab;

namespace {

ModelSpec mlp_spec(uint64_t seed = 7) {
  ModelSpec s;
  s.arch = "mlp";
  s.classes = 2;
  s.in_dim = 2;
  s.hidden = 8;
  s.init_seed = seed;
  return s;
}

struct Splits {
  Dataset train, val, test;
};

Splits moons_splits(int64_t n = 120) {
  Dataset full = gen_two_moons(n, 0.2, 99);
  SplitResult r = split(full, 0.6, 0.2, 0.2, 4);
  return {r.train, r.val, r.test};
}

TrainConfig quick_cfg() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.optimizer = "sgd";
  cfg.regularizer = "none";
  cfg.eval_every = 1;
  cfg.seed = 1;
  return cfg;
}

AttackConfig moon_attack() {
  AttackConfig a;
  a.method = "dropattack";
  a.eps_x = 0.5;
  a.eps_theta = 0.5;
  a.p_x = 0.7;
  a.p_theta = 0.7;
  a.K = 1;
  a.targets = {"input", "fc1.w"};
  return a;
}

}  // namespace

TEST_CASE("one Adam step matches the closed-form update to 1e-12") {
  ParameterSet params;
  Tensor w({2}, {1.0, -2.0});
  w.requires_grad = true;
  params.add("w", std::move(w), true);

  TrainConfig cfg = quick_cfg();
  cfg.optimizer = "adam";
  cfg.lr = 0.001;
  Optimizer opt(cfg, params);
  const std::vector<double> g{0.3, -0.7};
  opt.step(params, {{"w", g}});

  for (int i = 0; i < 2; ++i) {
    const double m = (1 - 0.9) * g[static_cast<size_t>(i)];
    const double v = (1 - 0.999) * g[static_cast<size_t>(i)] * g[static_cast<size_t>(i)];
    const double mhat = m / (1 - 0.9);
    const double vhat = v / (1 - 0.999);
    const double expect = (i == 0 ? 1.0 : -2.0) - 0.001 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::fabs(params.at("w").data[static_cast<size_t>(i)] - expect) < 1e-12);
  }
}

TEST_CASE("sgd step is literal gradient descent") {
  ParameterSet params;
  Tensor w({2}, {1.0, 1.0});
  params.add("w", std::move(w), true);
  TrainConfig cfg = quick_cfg();
  cfg.lr = 0.1;
  Optimizer opt(cfg, params);
  opt.step(params, {{"w", {2.0, -4.0}}});
  CHECK(params.at("w").data == std::vector<double>{0.8, 1.4});
}

TEST_CASE("zero epochs leaves parameters unchanged with empty metrics") {
  auto model = build_model(mlp_spec());
  auto before = model->params().values();
  Splits s = moons_splits();
  TrainConfig cfg = quick_cfg();
  cfg.epochs = 0;
  TrainResult res = train(*model, s.train, s.val, s.test, cfg);
  CHECK(res.metrics.empty());
  CHECK(model->params().values() == before);
  CHECK(res.fb_count == 0);
}

TEST_CASE("same config and seed reproduce identical metrics") {
  Splits s = moons_splits();
  TrainConfig cfg = quick_cfg();
  auto m1 = build_model(mlp_spec());
  auto m2 = build_model(mlp_spec());
  TrainResult a = train(*m1, s.train, s.val, s.test, cfg);
  TrainResult b = train(*m2, s.train, s.val, s.test, cfg);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].train_loss == b.metrics[i].train_loss);
    CHECK(a.metrics[i].val_acc == b.metrics[i].val_acc);
    CHECK(a.metrics[i].fb_count == b.metrics[i].fb_count);
  }
  CHECK(m1->params().values() == m2->params().values());
}

TEST_CASE("fb_count per batch: 2 standard, 4 dropattack, 2+2K dropattack_k") {
  Splits s = moons_splits(64);  // train split = 38 samples
  TrainConfig cfg = quick_cfg();
  cfg.epochs = 1;
  cfg.batch_size = 19;
  const int64_t batches = 2;

  auto m = build_model(mlp_spec());
  CHECK(train(*m, s.train, s.val, s.test, cfg).fb_count == 2 * batches);

  cfg.regularizer = "attack";
  cfg.attack = moon_attack();
  auto m2 = build_model(mlp_spec());
  CHECK(train(*m2, s.train, s.val, s.test, cfg).fb_count == 4 * batches);

  cfg.attack.method = "dropattack_k";
  cfg.attack.K = 3;
  auto m3 = build_model(mlp_spec());
  CHECK(train(*m3, s.train, s.val, s.test, cfg).fb_count == (2 + 2 * 3) * batches);
}

TEST_CASE("attack with p=0 equals plain descent at triple learning rate") {
  Splits s = moons_splits(80);
  TrainConfig atk = quick_cfg();
  atk.epochs = 1;  // 10 optimizer steps at batch 5 over 48 train samples
  atk.batch_size = 5;
  atk.lr = 0.01;
  atk.regularizer = "attack";
  atk.attack = moon_attack();
  atk.attack.p_x = 0.0;
  atk.attack.p_theta = 0.0;

  TrainConfig plain = quick_cfg();
  plain.epochs = 1;
  plain.batch_size = 5;
  plain.lr = 0.03;

  auto ma = build_model(mlp_spec());
  auto mp = build_model(mlp_spec());
  train(*ma, s.train, s.val, s.test, atk);
  train(*mp, s.train, s.val, s.test, plain);
  for (const std::string& name : ma->params().order) {
    const auto& a = ma->params().at(name).data;
    const auto& p = mp->params().at(name).data;
    for (size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - p[i]) < 1e-10);
  }
}

TEST_CASE("penalty terms: values and gradients") {
  ParameterSet params;
  Tensor w({1}, {2.0});
  w.requires_grad = true;
  params.add("fc.w", std::move(w), true);
  Tensor b({1}, {5.0});
  b.requires_grad = true;
  params.add("fc.b", std::move(b), false);  // biases excluded from the penalty

  {
    Tape t;
    CHECK(t.scalar_value(penalty_term(t, params, "l2", 0.25)) == doctest::Approx(1.0));  // 4λ
    Tape t0;
    CHECK(t0.scalar_value(penalty_term(t0, params, "l2", 0.0)) == 0.0);
    Tape t1;
    CHECK(t1.scalar_value(penalty_term(t1, params, "l1", 0.5)) == doctest::Approx(1.0));
  }
  {
    // d(λ w^2)/dw = 2λw
    params.zero_grads();
    Tape t;
    t.backward(penalty_term(t, params, "l2", 0.25));
    CHECK(params.at("fc.w").grad[0] == doctest::Approx(2 * 0.25 * 2.0).epsilon(1e-12));
    for (double g : params.at("fc.b").grad) CHECK(g == 0.0);  // biases untouched
    Tensor p({3}, {0.5, -1.5, 2.0});
    CHECK(gradcheck(
              [](Tape& tape, Tensor& x) {
                ValId w = tape.leaf(x);
                return tape.scale(tape.sum(tape.mul(w, w)), 0.3);
              },
              p, 1e-6) < 1e-7);
  }
}

TEST_CASE("best-epoch selection returns the best validation parameters") {
  Splits s = moons_splits(200);
  TrainConfig cfg = quick_cfg();
  cfg.epochs = 25;
  cfg.optimizer = "adam";
  cfg.lr = 0.02;
  auto m = build_model(mlp_spec());
  TrainResult res = train(*m, s.train, s.val, s.test, cfg);
  double final_val = res.metrics.back().val_acc;
  CHECK(res.best_val_acc >= final_val);
  EvalResult va = evaluate(*m, s.val, cfg.batch_size);
  CHECK(va.acc == doctest::Approx(res.best_val_acc));
}

TEST_CASE("metrics CSV has the pinned header and row count") {
  std::vector<MetricsRecord> recs(2);
  recs[0].epoch = 1;
  recs[0].train_loss = 0.5;
  recs[0].seconds = 1.234567;
  recs[0].fb_count = 10;
  recs[1].epoch = 2;
  recs[1].fb_count = 20;
  const std::string path = "/tmp/dalab_metrics.csv";
  write_metrics_csv(recs, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_loss,train_acc,val_loss,val_acc,seconds,fb_count");
  std::getline(in, line);
  CHECK(line.rfind("1,0.5,", 0) == 0);
  CHECK(line.find("1.235,10") != std::string::npos);  // seconds at %.3f
  CHECK(std::getline(in, line));
  CHECK_FALSE(std::getline(in, line));
  std::filesystem::remove(path);
}

TEST_CASE("sweep emits one row per grid cell with p=0 constant across eps") {
  Splits s = moons_splits(80);
  TrainConfig base = quick_cfg();
  base.epochs = 2;
  base.regularizer = "attack";
  base.attack = moon_attack();
  auto rows = sweep(mlp_spec(), s.train, s.val, s.test, base, {0.1, 1.0}, {0.0, 0.5}, {1},
                    {1, 2});
  REQUIRE(rows.size() == 4);
  // rows ordered eps-major; p=0 cells identical for every eps
  double p0_first = -1;
  for (const SweepRow& r : rows) {
    CHECK(r.seed_count == 2);
    if (r.p == 0.0) {
      if (p0_first < 0)
        p0_first = r.mean_test_acc;
      else
        CHECK(r.mean_test_acc == p0_first);
    }
  }
}

TEST_CASE("scaling study reports paired improvement") {
  Splits s = moons_splits(150);
  TrainConfig base = quick_cfg();
  base.epochs = 2;
  base.attack = moon_attack();
  auto rows = scaling_study(mlp_spec(), s.train, s.val, s.test, base, {20, 60}, {1, 2});
  REQUIRE(rows.size() == 2);
  for (const ScalingRow& r : rows)
    CHECK(r.improvement == doctest::Approx(r.dropattack_acc - r.standard_acc).epsilon(1e-15));
  CHECK_THROWS_AS(scaling_study(mlp_spec(), s.train, s.val, s.test, base, {100000}, {1}),
                  std::invalid_argument);
}

TEST_CASE("config validation rejects bad fields") {
  TrainConfig cfg = quick_cfg();
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = quick_cfg();
  cfg.optimizer = "rmsprop";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = quick_cfg();
  cfg.regularizer = "attack";  // invalid nested attack (no targets is fine, but eps<0 is not)
  cfg.attack = moon_attack();
  cfg.attack.eps_x = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
