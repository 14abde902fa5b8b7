#include <doctest.h>

#include <cmath>

#include "dalab/gradcheck.hpp"
#include "dalab/rng.hpp"

using namespace dalab;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (double& v : t.data) v = rng.normal() * scale;
  return t;
}

// keep relu/maxpool inputs clear of their kinks: margin > 10 * step
void push_from_zero(Tensor& t, double margin) {
  for (double& v : t.data)
    if (std::fabs(v) < margin) v = v >= 0 ? margin : -margin;
}

}  // namespace

TEST_CASE("half squared norm checks below 1e-7") {
  Rng rng(1);
  Tensor p = random_tensor({5, 3}, rng);
  double err = gradcheck(
      [](Tape& t, Tensor& x) {
        ValId v = t.leaf(x);
        return t.scale(t.sum(t.mul(v, v)), 0.5);
      },
      p, 1e-6);
  CHECK(err < 1e-7);
}

TEST_CASE("conv2d + relu + cross-entropy on random 4x1x8x8 input") {
  Rng rng(2);
  Tensor p = random_tensor({4, 1, 8, 8}, rng);
  Tensor k = random_tensor({2, 1, 3, 3}, rng, 0.5);
  double err = gradcheck(
      [&k](Tape& t, Tensor& x) {
        ValId c = t.relu(t.conv2d(t.leaf(x), t.constant(k), 1));
        ValId f = t.flatten(c);
        Tensor w({72, 3});
        Rng wr(3);
        for (double& v : w.data) v = wr.normal() * 0.1;
        ValId logits = t.matmul(f, t.constant(w));
        return t.softmax_cross_entropy(logits, {0, 1, 2, 0});
      },
      p, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("step must be positive") {
  Tensor p({2}, {1, 2});
  auto f = [](Tape& t, Tensor& x) { return t.sum(t.leaf(x)); };
  CHECK_THROWS_AS(gradcheck(f, p, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gradcheck(f, p, -1e-5), std::invalid_argument);
}

TEST_CASE("every forward op passes gradcheck over 20 seeds") {
  const double step = 1e-5;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    {
      Tensor p = random_tensor({3, 4}, rng);
      Tensor w = random_tensor({4, 2}, rng);
      CHECK(gradcheck([&w](Tape& t, Tensor& x) { return t.sum(t.matmul(t.leaf(x), t.constant(w))); },
                      p, step) < 1e-4);
      CHECK(gradcheck([](Tape& t, Tensor& x) { ValId v = t.leaf(x); return t.sum(t.mul(v, v)); },
                      p, step) < 1e-4);
      CHECK(gradcheck([](Tape& t, Tensor& x) { return t.sum(t.tanh_(t.leaf(x))); }, p, step) < 1e-4);
      CHECK(gradcheck([](Tape& t, Tensor& x) { return t.sum(t.sigmoid(t.leaf(x))); }, p, step) <
            1e-4);
      Tensor b = random_tensor({4}, rng);
      CHECK(gradcheck([&b](Tape& t, Tensor& x) {
              return t.sum(t.add(t.leaf(x), t.constant(b)));
            }, p, step) < 1e-4);

      Tensor pk = p;
      push_from_zero(pk, 10 * step * 2);
      CHECK(gradcheck([](Tape& t, Tensor& x) { return t.sum(t.relu(t.leaf(x))); }, pk, step) <
            1e-4);
      CHECK(gradcheck([](Tape& t, Tensor& x) { return t.sum(t.abs_(t.leaf(x))); }, pk, step) <
            1e-4);
    }
    {
      Tensor x = random_tensor({2, 2, 6, 6}, rng);
      Tensor k = random_tensor({3, 2, 3, 3}, rng, 0.4);
      CHECK(gradcheck([&k](Tape& t, Tensor& xx) {
              return t.sum(t.conv2d(t.leaf(xx), t.constant(k), 1));
            }, x, step) < 1e-4);
      CHECK(gradcheck([&x](Tape& t, Tensor& kk) {
              return t.sum(t.conv2d(t.constant(x), t.leaf(kk), 1));
            }, k, step) < 1e-4);
      // distinct window entries keep the argmax stable under the probe step
      Tensor xp = random_tensor({1, 1, 4, 4}, rng, 3.0);
      CHECK(gradcheck([](Tape& t, Tensor& xx) { return t.sum(t.maxpool2d(t.leaf(xx), 2)); }, xp,
                      step) < 1e-4);
    }
    {
      Tensor logits = random_tensor({3, 4}, rng);
      CHECK(gradcheck([](Tape& t, Tensor& l) {
              return t.softmax_cross_entropy(t.leaf(l), {1, 3, 0});
            }, logits, step) < 1e-4);
      Tensor table = random_tensor({5, 3}, rng);
      CHECK(gradcheck([](Tape& t, Tensor& tb) {
              return t.sum(t.embed_lookup(t.leaf(tb), {0, 4, 2, 4}));
            }, table, step) < 1e-4);
      Tensor f = random_tensor({2, 3, 2}, rng);
      CHECK(gradcheck([](Tape& t, Tensor& x) { return t.sum(t.flatten(t.leaf(x))); }, f, step) <
            1e-4);
    }
  }
}
