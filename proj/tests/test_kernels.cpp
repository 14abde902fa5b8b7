#include <doctest.h>

#include <vector>

#include "dalab/kernels.hpp"
#include "dalab/rng.hpp"

using namespace dalab;

namespace {
std::vector<double> randvec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}
}  // namespace

TEST_CASE("matmul forward and grads: OpenMP matches serial bit-for-bit") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const int64_t m = 7, k = 13, n = 9;
    auto a = randvec(m * k, rng), b = randvec(k * n, rng), gc = randvec(m * n, rng);
    std::vector<double> c1(m * n, 0), c2(m * n, 0);
    kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
    kernels::serial::matmul(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(c1 == c2);

    std::vector<double> ga1(m * k, 0.5), ga2(m * k, 0.5);
    kernels::matmul_grad_a(gc.data(), b.data(), ga1.data(), m, k, n);
    kernels::serial::matmul_grad_a(gc.data(), b.data(), ga2.data(), m, k, n);
    CHECK(ga1 == ga2);

    std::vector<double> gb1(k * n, -0.25), gb2(k * n, -0.25);
    kernels::matmul_grad_b(a.data(), gc.data(), gb1.data(), m, k, n);
    kernels::serial::matmul_grad_b(a.data(), gc.data(), gb2.data(), m, k, n);
    CHECK(gb1 == gb2);
  }
}

TEST_CASE("conv2d forward and grads: OpenMP matches serial bit-for-bit") {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    const int64_t B = 3, C = 2, H = 9, W = 8, O = 4, K = 3, stride = 1;
    const int64_t OH = (H - K) / stride + 1, OW = (W - K) / stride + 1;
    auto x = randvec(B * C * H * W, rng);
    auto w = randvec(O * C * K * K, rng);
    auto gy = randvec(B * O * OH * OW, rng);

    std::vector<double> y1(B * O * OH * OW, 0), y2 = y1;
    kernels::conv2d(x.data(), w.data(), y1.data(), B, C, H, W, O, K, stride);
    kernels::serial::conv2d(x.data(), w.data(), y2.data(), B, C, H, W, O, K, stride);
    CHECK(y1 == y2);

    std::vector<double> gx1(x.size(), 0.125), gx2 = gx1;
    kernels::conv2d_grad_x(gy.data(), w.data(), gx1.data(), B, C, H, W, O, K, stride);
    kernels::serial::conv2d_grad_x(gy.data(), w.data(), gx2.data(), B, C, H, W, O, K, stride);
    CHECK(gx1 == gx2);

    std::vector<double> gw1(w.size(), -1.0), gw2 = gw1;
    kernels::conv2d_grad_w(x.data(), gy.data(), gw1.data(), B, C, H, W, O, K, stride);
    kernels::serial::conv2d_grad_w(x.data(), gy.data(), gw2.data(), B, C, H, W, O, K, stride);
    CHECK(gw1 == gw2);
  }
}

TEST_CASE("maxpool2d: OpenMP matches serial including argmax") {
  Rng rng(4);
  const int64_t B = 2, C = 3, H = 8, W = 6, window = 2;
  const int64_t n_out = B * C * (H / window) * (W / window);
  auto x = randvec(B * C * H * W, rng);
  auto gy = randvec(n_out, rng);

  std::vector<double> y1(n_out, 0), y2 = y1;
  std::vector<int64_t> am1(n_out, -1), am2 = am1;
  kernels::maxpool2d(x.data(), y1.data(), am1.data(), B, C, H, W, window);
  kernels::serial::maxpool2d(x.data(), y2.data(), am2.data(), B, C, H, W, window);
  CHECK(y1 == y2);
  CHECK(am1 == am2);

  std::vector<double> gx1(x.size(), 0), gx2 = gx1;
  kernels::maxpool2d_grad(gy.data(), am1.data(), gx1.data(), n_out);
  kernels::serial::maxpool2d_grad(gy.data(), am2.data(), gx2.data(), n_out);
  CHECK(gx1 == gx2);
}

TEST_CASE("grad kernels accumulate instead of overwrite") {
  const int64_t m = 2, k = 2, n = 2;
  std::vector<double> a{1, 0, 0, 1}, gc{1, 1, 1, 1};
  std::vector<double> gb(4, 10.0);
  kernels::matmul_grad_b(a.data(), gc.data(), gb.data(), m, k, n);
  for (double v : gb) CHECK(v == doctest::Approx(11.0));
}
