#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "dne/rng.hpp"

using namespace dne;

TEST_CASE("splitmix64 stream matches the reference value") {
  SplitMix64 sm(0);
  REQUIRE(sm.next() == 0xE220A8397B1DCDAFull);
}

TEST_CASE("splitmix64_mix is the standard finalizer") {
  // first stream output == mix of the seed itself
  REQUIRE(splitmix64_mix(0) == 0xE220A8397B1DCDAFull);
  REQUIRE(splitmix64_mix(1) != splitmix64_mix(2));
}

TEST_CASE("derive_child_seed is pure and stable") {
  const std::uint64_t a = derive_child_seed(42, 7, 3);
  REQUIRE(a == derive_child_seed(42, 7, 3));
  REQUIRE(a != derive_child_seed(42, 7, 4));
  REQUIRE(a != derive_child_seed(42, 8, 3));
  REQUIRE(a != derive_child_seed(43, 7, 3));
}

TEST_CASE("derive_child_seed collision sweep over random (seed, generation)") {
  SplitMix64 sm(0xC0FFEE);
  for (int i = 0; i < 1'000'000; ++i) {
    const std::uint64_t s = sm.next();
    const std::uint64_t g = sm.next();
    REQUIRE(derive_child_seed(s, g, 0) != derive_child_seed(s, g, 1));
  }
}

TEST_CASE("child seeds within one generation are distinct") {
  std::unordered_set<std::uint64_t> seen;
  for (std::uint64_t g = 0; g < 100; ++g)
    for (std::uint64_t i = 0; i < 40; ++i)
      seen.insert(derive_child_seed(1234, g, i));
  REQUIRE(seen.size() == 100 * 40);
}

TEST_CASE("box_muller closed form") {
  // z1 = sqrt(-2 ln 0.5) * cos(pi/2) = 0
  const GaussPair p = box_muller(0.5, 0.25);
  REQUIRE(std::abs(p.z0) < 1e-6);
  REQUIRE(p.z1 == Catch::Approx(std::sqrt(-2.0 * std::log(0.5))).epsilon(1e-5));

  // u2 = 0: angle 0, so z0 = r, z1 = 0
  const GaussPair q = box_muller(0.25, 0.0);
  REQUIRE(q.z0 == Catch::Approx(std::sqrt(-2.0 * std::log(0.25))).epsilon(1e-5));
  REQUIRE(std::abs(q.z1) < 1e-6);

  // u1 = 1: radius 0
  const GaussPair r = box_muller(1.0, 0.77);
  REQUIRE(r.z0 == 0.0f);
  REQUIRE(r.z1 == 0.0f);
}

TEST_CASE("sample_noise is deterministic and finite") {
  const auto a = sample_noise(99, 4096);
  const auto b = sample_noise(99, 4096);
  REQUIRE(a == b);
  for (const float v : a) REQUIRE(std::isfinite(v));
  REQUIRE(a != sample_noise(100, 4096));
}

TEST_CASE("gaussian stream moments over 1e6 draws") {
  const std::size_t n = 1'000'000;
  const auto v = sample_noise(2718, n);
  double sum = 0.0;
  for (const float x : v) sum += x;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const float x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  REQUIRE(std::abs(mean) < 0.005);
  REQUIRE(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("GaussianStream::fill equals repeated next()") {
  GaussianStream a(555);
  GaussianStream b(555);
  std::vector<float> filled(257);  // odd length exercises the spare slot
  a.fill(filled);
  for (const float x : filled) REQUIRE(x == b.next());
  // continue past the fill boundary: spares must line up too
  std::vector<float> more(10);
  a.fill(more);
  for (const float x : more) REQUIRE(x == b.next());
}

TEST_CASE("sample_noise handles odd and tiny lengths") {
  REQUIRE(sample_noise(7, 1).size() == 1);
  REQUIRE(sample_noise(7, 3).size() == 3);
  const auto five = sample_noise(7, 5);
  const auto seven = sample_noise(7, 7);
  for (int i = 0; i < 5; ++i) REQUIRE(five[i] == seven[i]);
}

TEST_CASE("xoshiro unit helpers stay inside their ranges") {
  Xoshiro256SS rng(31337);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  Xoshiro256SS rng2(31337);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng2.next_unit_pos();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
  Xoshiro256SS rng3(31337);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng3.next_unit_open();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}
