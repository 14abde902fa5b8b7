#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dalab/analysis.hpp"
#include "dalab/train.hpp"
#include "quadratic_toy.hpp"

using namespace dalab;

namespace {

AttackConfig dual_cfg(double p_x, double p_theta, const std::vector<std::string>& targets) {
  AttackConfig cfg;
  cfg.method = "dropattack";
  cfg.p_x = p_x;
  cfg.p_theta = p_theta;
  cfg.K = 1;
  cfg.targets = targets;
  return cfg;
}

ModelSpec small_mlp(uint64_t seed) {
  ModelSpec s;
  s.arch = "mlp";
  s.classes = 2;
  s.in_dim = 2;
  s.hidden = 8;
  s.init_seed = seed;
  return s;
}

Batch moon_batch(int64_t n) {
  Dataset ds = gen_two_moons(n, 0.2, 5);
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  return ds.batch(idx);
}

}  // namespace

TEST_CASE("quadratic toy: gap equals the hand-computed 5e-5") {
  // L = 1/2 (theta x - y)^2 with theta=1, x=2, y=0; masks all ones (p=1);
  // input-only attack at eps=0.01. Second-order term: 1/2 eps^2 theta^2.
  QuadraticToy toy(1.0, 0.0);
  Batch b = QuadraticToy::point(2.0);
  Rng rng(1);
  EquivalenceReport rep =
      verify_first_order(toy, b, dual_cfg(1.0, 1.0, {"input"}), {0.01}, rng);
  CHECK(std::fabs(rep.gap[0] - 5e-5) < 1e-12);
}

TEST_CASE("masks all zero give gap exactly 0 for every eps") {
  auto model = build_model(small_mlp(3));
  Batch b = moon_batch(16);
  Rng rng(2);
  EquivalenceReport rep = verify_first_order(
      *model, b, dual_cfg(0.0, 0.0, {"input", "fc1.w"}), {1e-4, 1e-3, 1e-2, 1e-1}, rng);
  for (double g : rep.gap) CHECK(g == 0.0);
}

TEST_CASE("p=1 input-only surrogate penalty equals eps * full gradient norm") {
  auto model = build_model(small_mlp(4));
  Batch b = moon_batch(12);
  Rng rng(3);
  const double eps = 1e-3;
  EquivalenceReport rep = verify_first_order(*model, b, dual_cfg(1.0, 1.0, {"input"}), {eps}, rng);

  // independently recompute the clean loss and input-gradient norm
  Tensor overlay(model->input_overlay_shape(b));
  overlay.requires_grad = true;
  Overlays ov;
  ov.input = &overlay;
  Tape t;
  ValId loss = model->loss(t, b, &ov);
  t.backward(loss);
  double gnorm = 0;
  for (double v : overlay.grad) gnorm += v * v;
  gnorm = std::sqrt(gnorm);
  CHECK(rep.surrogate[0] ==
        doctest::Approx(2 * t.scalar_value(loss) + eps * gnorm).epsilon(1e-12));
}

TEST_CASE("halving eps shrinks the gap about 4x; slope near 2 over random MLPs") {
  std::vector<double> grid;
  for (double e = 1e-4; e < 1.5e-1; e *= 2) grid.push_back(e);
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    auto model = build_model(small_mlp(seed));
    Batch b = moon_batch(16);
    Rng rng(seed);
    EquivalenceReport rep =
        verify_first_order(*model, b, dual_cfg(0.7, 0.7, {"input", "fc1.w", "fc2.w"}), grid, rng);
    CHECK(rep.slope > 1.8);
    CHECK(rep.slope < 2.2);
    // spot-check the 4x contraction between the two smallest eps
    if (rep.gap[0] > 0 && rep.gap[1] > 0) {
      const double ratio = rep.gap[1] / rep.gap[0];
      CHECK(ratio > 2.5);
      CHECK(ratio < 6.0);
    }
  }
}

TEST_CASE("degenerate zero-gradient point is rejected") {
  // theta=0, y=0 makes the loss identically flat at x=0
  QuadraticToy toy(0.0, 0.0);
  Batch b = QuadraticToy::point(0.0);
  Rng rng(4);
  CHECK_THROWS_AS(verify_first_order(toy, b, dual_cfg(1, 1, {"input", "theta"}), {1e-3}, rng),
                  std::invalid_argument);
}

TEST_CASE("eps grid must be positive and non-empty") {
  QuadraticToy toy(1.0, 0.0);
  Batch b = QuadraticToy::point(2.0);
  Rng rng(5);
  CHECK_THROWS_AS(verify_first_order(toy, b, dual_cfg(1, 1, {"input"}), {}, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(verify_first_order(toy, b, dual_cfg(1, 1, {"input"}), {0.0, 0.1}, rng),
                  std::invalid_argument);
}

TEST_CASE("1x1 landscape grid reproduces the checkpoint loss exactly") {
  auto model = build_model(small_mlp(6));
  Dataset ds = gen_two_moons(40, 0.2, 7);
  LandscapeGridSpec spec;
  spec.delta_res = 1;
  spec.eta_res = 1;
  spec.batch_size = 16;
  LandscapeGrid grid = scan_landscape(*model, ds, spec, 1);
  CHECK(grid.loss.size() == 1);
  CHECK(grid.loss[0] == grid.center_loss);
  EvalResult ev = evaluate(*model, ds, 16);
  CHECK(std::fabs(grid.center_loss - ev.loss) < 1e-12);
}

TEST_CASE("direction tensors are rescaled to the parameter norms") {
  // rebuild the directions exactly as scan_landscape draws them
  auto model = build_model(small_mlp(8));
  const uint64_t seed = 17;
  Rng rng(seed);
  for (int pass = 0; pass < 2; ++pass) {
    for (const std::string& name : model->params().order) {
      const Tensor& p = model->params().at(name);
      std::vector<double> d(p.data.size());
      for (double& v : d) v = rng.normal();
      double dn = 0;
      for (double v : d) dn += v * v;
      dn = std::sqrt(dn);
      const double pn = p.l2_norm();
      if (dn > 0) {
        double rescaled = 0;
        for (double v : d) rescaled += (v * pn / dn) * (v * pn / dn);
        CHECK(std::fabs(std::sqrt(rescaled) - pn) < 1e-10);
      }
    }
  }
}

TEST_CASE("scan_landscape is pure and deterministic") {
  auto model = build_model(small_mlp(9));
  auto before = model->params().values();
  Dataset ds = gen_two_moons(30, 0.2, 8);
  LandscapeGridSpec spec;
  spec.delta_res = 3;
  spec.eta_res = 3;
  spec.batch_size = 16;
  LandscapeGrid a = scan_landscape(*model, ds, spec, 2);
  LandscapeGrid b = scan_landscape(*model, ds, spec, 2);
  CHECK(a.loss == b.loss);
  CHECK(model->params().values() == before);
}

TEST_CASE("swapping the directions transposes the grid") {
  auto model = build_model(small_mlp(10));
  Dataset ds = gen_two_moons(30, 0.2, 9);
  LandscapeGridSpec spec;
  spec.delta_res = 5;
  spec.eta_res = 5;
  spec.batch_size = 16;
  LandscapeGrid g = scan_landscape(*model, ds, spec, 3, false);
  LandscapeGrid gt = scan_landscape(*model, ds, spec, 3, true);
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 5; ++j)
      // the two scans add the direction terms in opposite order, so allow ulps
      CHECK(g.at(i, j) == doctest::Approx(gt.at(j, i)).epsilon(1e-12));
}

TEST_CASE("sharpness: constant grid 0, paraboloid 4/3, flagged cells excluded") {
  LandscapeGrid grid;
  grid.spec.delta_res = 3;
  grid.spec.eta_res = 3;
  grid.delta_coords = {-1, 0, 1};
  grid.eta_coords = {-1, 0, 1};
  grid.loss.assign(9, 2.5);
  grid.flagged.assign(9, 0);
  CHECK(sharpness(grid) == 0.0);

  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      const double d = grid.delta_coords[static_cast<size_t>(i)];
      const double e = grid.eta_coords[static_cast<size_t>(j)];
      grid.loss[static_cast<size_t>(i * 3 + j)] = d * d + e * e;
    }
  CHECK(sharpness(grid) == doctest::Approx(12.0 / 9.0).epsilon(1e-15));

  grid.flagged[0] = 1;  // drop one corner: mean over 8 cells of {excess}
  int64_t excluded = 0;
  CHECK(sharpness(grid, &excluded) == doctest::Approx(10.0 / 8.0).epsilon(1e-15));
  CHECK(excluded == 1);
}

TEST_CASE("central window mean") {
  LandscapeGrid grid;
  grid.spec.delta_res = 5;
  grid.spec.eta_res = 5;
  grid.loss.resize(25);
  grid.flagged.assign(25, 0);
  for (int i = 0; i < 25; ++i) grid.loss[static_cast<size_t>(i)] = i;
  // central 3x3 of the 5x5 index grid: rows 1..3, cols 1..3
  double expect = 0;
  for (int r = 1; r <= 3; ++r)
    for (int c = 1; c <= 3; ++c) expect += r * 5 + c;
  CHECK(central_window_mean(grid, 3) == doctest::Approx(expect / 9.0));
  CHECK_THROWS_AS(central_window_mean(grid, 4), std::invalid_argument);
  CHECK_THROWS_AS(central_window_mean(grid, 7), std::invalid_argument);
}

TEST_CASE("landscape and equivalence CSV writers use the pinned headers") {
  LandscapeGrid grid;
  grid.spec.delta_res = 1;
  grid.spec.eta_res = 1;
  grid.delta_coords = {0.0};
  grid.eta_coords = {0.0};
  grid.loss = {0.5};
  grid.flagged = {0};
  const std::string p1 = "/tmp/dalab_land.csv";
  write_landscape_csv(grid, p1);
  std::ifstream in(p1);
  std::string line;
  std::getline(in, line);
  CHECK(line == "delta,eta,loss");
  std::getline(in, line);
  CHECK(line == "0,0,0.5");

  EquivalenceReport rep;
  rep.eps_grid = {0.125};
  rep.gap = {0.25};
  rep.surrogate = {1.5};
  rep.adversarial = {1.75};
  const std::string p2 = "/tmp/dalab_eq.csv";
  write_equivalence_csv(rep, p2);
  std::ifstream in2(p2);
  std::getline(in2, line);
  CHECK(line == "epsilon,gap,surrogate,adversarial");
  std::getline(in2, line);
  CHECK(line == "0.125,0.25,1.5,1.75");
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("even or non-positive resolutions are rejected") {
  auto model = build_model(small_mlp(11));
  Dataset ds = gen_two_moons(10, 0.2, 1);
  LandscapeGridSpec spec;
  spec.delta_res = 4;
  CHECK_THROWS_AS(scan_landscape(*model, ds, spec, 1), std::invalid_argument);
}
