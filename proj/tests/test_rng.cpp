#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dalab/rng.hpp"

using namespace dalab;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("normal moments are sane") {
  Rng r(11);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::fabs(s / n) < 0.02);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("bernoulli endpoints are exact") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    CHECK_FALSE(r.bernoulli(0.0));
    CHECK(r.bernoulli(1.0));
  }
}

TEST_CASE("shuffle is a permutation and seed-deterministic") {
  std::vector<int> v(257);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 257);
  CHECK(v != std::vector<int>(s.begin(), s.end()));  // actually shuffled
}

TEST_CASE("fork streams are decorrelated from the parent and each other") {
  Rng parent(9);
  Rng c1 = parent.fork(1);
  Rng c2 = parent.fork(2);
  int same12 = 0, samep1 = 0;
  Rng p2(9);
  for (int i = 0; i < 100; ++i) {
    uint64_t a = c1.next_u64(), b = c2.next_u64(), p = p2.next_u64();
    same12 += a == b;
    samep1 += a == p;
  }
  CHECK(same12 == 0);
  CHECK(samep1 == 0);
  // forking does not advance the parent
  Rng q(9);
  CHECK(parent.next_u64() == q.next_u64());
}
