#include "neat/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

using neat::CounterRng;
using neat::derive_seed;
using neat::mix64;

TEST_SUITE("rng") {
  TEST_CASE("mix64 matches the SplitMix64 reference output") {
    // First three outputs of the reference splitmix64 generator seeded with 0.
    std::uint64_t state = 0;
    std::vector<std::uint64_t> got;
    for (int i = 0; i < 3; ++i) {
      state += neat::kGolden;
      got.push_back(mix64(state));
    }
    CHECK(got[0] == 0xE220A8397B1DCDAFull);
    CHECK(got[1] == 0x6E789E6AA1B965F4ull);
    CHECK(got[2] == 0x06C45D188009454Full);

    CounterRng rng(0);
    CHECK(rng() == got[0]);
    CHECK(rng() == got[1]);
    CHECK(rng.counter() == 2);
  }

  TEST_CASE("a stream is a pure function of key and counter") {
    CounterRng a(42);
    for (int i = 0; i < 10; ++i) a();
    CounterRng b(42, 10);
    CHECK(a() == b());
    CHECK(CounterRng(42)() != CounterRng(43)());
  }

  TEST_CASE("derive_seed separates streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t parent : {0ull, 1ull, 2ull}) {
      for (std::uint64_t stream = 0; stream < 100; ++stream) seen.insert(derive_seed(parent, stream));
    }
    CHECK(seen.size() == 300);
    CHECK(derive_seed(5, 9) == derive_seed(5, 9));
  }

  TEST_CASE("uniform stays in [0, 1) with mean near one half") {
    CounterRng rng(7);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    // Standard error of the mean is 1/sqrt(12 n) ~ 9e-4.
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.005));
  }

  TEST_CASE("below is in range and roughly uniform") {
    CounterRng rng(8);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
      const auto r = rng.below(7);
      REQUIRE(r < 7);
      ++counts[r];
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
    CHECK(chi2 < 22.46);  // chi-square(6) at p = 0.001
    CHECK(rng.below(0) == 0);
    CHECK(rng.below(1) == 0);
  }

  TEST_CASE("normal has unit moments") {
    CounterRng rng(9);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal();
      sum += x;
      sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.01));
  }

  TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<int> a(50);
    std::iota(a.begin(), a.end(), 0);
    std::vector<int> b(a);
    CounterRng(3).shuffle(a.begin(), a.end());
    CounterRng(3).shuffle(b.begin(), b.end());
    CHECK(a == b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    std::vector<int> identity(50);
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(a != identity);
  }
}
