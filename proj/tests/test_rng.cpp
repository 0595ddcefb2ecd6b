#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "clfa/rng.hpp"

using clfa::Rng;

TEST_CASE("same seed gives the same stream", "[rng]") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams", "[rng]") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  REQUIRE(same == 0);
}

TEST_CASE("serialize round trip resumes the stream exactly", "[rng]") {
  Rng a(7);
  for (int i = 0; i < 17; ++i) a.next_u64();
  const std::string state = a.serialize();

  Rng b = Rng::deserialize(state);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform stays inside its bounds", "[rng]") {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double v = r.uniform(-2.5, 4.0);
    REQUIRE(v >= -2.5);
    REQUIRE(v < 4.0);
  }
}

TEST_CASE("uniform mean matches the interval midpoint", "[rng]") {
  Rng r(11);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += r.uniform(0.0, 1.0);
  REQUIRE(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("index covers every bucket roughly evenly", "[rng]") {
  Rng r(5);
  const std::size_t k = 16;
  std::vector<int> counts(k, 0);
  const int n = 160000;
  for (int i = 0; i < n; ++i) ++counts[r.index(k)];
  for (std::size_t b = 0; b < k; ++b) {
    // expectation 10000 per bucket; 5 sigma is about +-500
    REQUIRE(counts[b] > 9500);
    REQUIRE(counts[b] < 10500);
  }
}

TEST_CASE("index rejects an empty range", "[rng]") {
  Rng r(1);
  REQUIRE_THROWS_AS(r.index(0), clfa::ArgumentError);
}

TEST_CASE("int_in is inclusive on both ends", "[rng]") {
  Rng r(9);
  std::set<int> seen;
  for (int i = 0; i < 1000; ++i) {
    const int v = r.int_in(-2, 2);
    REQUIRE(v >= -2);
    REQUIRE(v <= 2);
    seen.insert(v);
  }
  REQUIRE(seen.size() == 5);
}

TEST_CASE("normal draws have standard moments", "[rng]") {
  Rng r(13);
  const int n = 200000;
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s1 += v;
    s2 += v * v;
  }
  REQUIRE(std::abs(s1 / n) < 0.01);
  REQUIRE(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("fork leaves the parent deterministic", "[rng]") {
  Rng a(21), b(21);
  Rng child = a.fork();
  (void)child;
  b.fork();
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("forked child differs from the parent stream", "[rng]") {
  Rng a(33);
  Rng child = a.fork();
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == child.next_u64()) ++same;
  REQUIRE(same == 0);
}
