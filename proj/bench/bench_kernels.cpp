// Timing comparison of the OpenMP kernels against their serial reference
// versions, plus a correctness spot-check (the two must agree bitwise).
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
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

double time_ms(const std::function<void()>& f, int reps) {
  f();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-22s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
              omp_ms, serial_ms / omp_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  Rng rng(1);

  {
    const int64_t m = 256, k = 256, n = 256;
    auto a = randvec(static_cast<size_t>(m * k), rng);
    auto b = randvec(static_cast<size_t>(k * n), rng);
    std::vector<double> c1(static_cast<size_t>(m * n)), c2(c1.size());
    double ts = time_ms([&] { kernels::serial::matmul(a.data(), b.data(), c1.data(), m, k, n); }, 5);
    double tp = time_ms([&] { kernels::matmul(a.data(), b.data(), c2.data(), m, k, n); }, 5);
    report("matmul 256^3", ts, tp, c1 == c2);

    std::vector<double> g1(a.size(), 0.0), g2(a.size(), 0.0);
    auto gc = randvec(c1.size(), rng);
    ts = time_ms([&] { kernels::serial::matmul_grad_a(gc.data(), b.data(), g1.data(), m, k, n); },
                 5);
    tp = time_ms([&] { kernels::matmul_grad_a(gc.data(), b.data(), g2.data(), m, k, n); }, 5);
    report("matmul_grad_a 256^3", ts, tp, g1 == g2);
  }

  {
    const int64_t B = 16, C = 6, H = 28, W = 28, O = 16, K = 5;
    auto x = randvec(static_cast<size_t>(B * C * H * W), rng);
    auto w = randvec(static_cast<size_t>(O * C * K * K), rng);
    const int64_t OH = H - K + 1, OW = W - K + 1;
    std::vector<double> y1(static_cast<size_t>(B * O * OH * OW)), y2(y1.size());
    double ts = time_ms(
        [&] { kernels::serial::conv2d(x.data(), w.data(), y1.data(), B, C, H, W, O, K, 1); }, 5);
    double tp =
        time_ms([&] { kernels::conv2d(x.data(), w.data(), y2.data(), B, C, H, W, O, K, 1); }, 5);
    report("conv2d 16x6x28x28", ts, tp, y1 == y2);

    auto gy = randvec(y1.size(), rng);
    std::vector<double> gw1(w.size(), 0.0), gw2(w.size(), 0.0);
    ts = time_ms(
        [&] { kernels::serial::conv2d_grad_w(x.data(), gy.data(), gw1.data(), B, C, H, W, O, K, 1); },
        5);
    tp = time_ms(
        [&] { kernels::conv2d_grad_w(x.data(), gy.data(), gw2.data(), B, C, H, W, O, K, 1); }, 5);
    report("conv2d_grad_w", ts, tp, gw1 == gw2);
  }

  {
    const int64_t B = 64, C = 16, H = 24, W = 24, win = 2;
    auto x = randvec(static_cast<size_t>(B * C * H * W), rng);
    const size_t nout = static_cast<size_t>(B * C * (H / win) * (W / win));
    std::vector<double> y1(nout), y2(nout);
    std::vector<int64_t> am1(nout), am2(nout);
    double ts = time_ms(
        [&] { kernels::serial::maxpool2d(x.data(), y1.data(), am1.data(), B, C, H, W, win); }, 20);
    double tp =
        time_ms([&] { kernels::maxpool2d(x.data(), y2.data(), am2.data(), B, C, H, W, win); }, 20);
    report("maxpool2d 64x16x24x24", ts, tp, y1 == y2 && am1 == am2);
  }
  return 0;
}
