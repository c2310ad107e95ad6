#include <doctest.h>

#include <array>
#include <cmath>

#include "her/rng.hpp"
#include "her/sdr.hpp"

using namespace her;

TEST_SUITE_BEGIN("sdr");

TEST_CASE("construction sorts, dedupes, and validates") {
  Sdr s(16, {5, 2, 9, 2});
  CHECK(s.active == std::vector<std::uint16_t>{2, 5, 9});
  CHECK(s.count() == 3);
  CHECK(s.contains(5));
  CHECK_FALSE(s.contains(3));
  CHECK_THROWS(Sdr(8, {8}));   // index out of range
  CHECK_THROWS(Sdr(0, {}));    // zero width
}

TEST_CASE("overlap basics and symmetry") {
  Sdr a(32, {1, 4, 9});
  Sdr b(32, {4, 9, 20});
  CHECK(overlap(a, b) == 2);
  CHECK(overlap(b, a) == 2);
  CHECK(overlap(a, a) == 3);
  Sdr c(16, {1});
  CHECK_THROWS(overlap(a, c));
}

TEST_CASE("union_all is commutative, associative, idempotent on the values") {
  std::array<Sdr, 3> parts{Sdr(16, {1, 2}), Sdr(16, {2, 7}), Sdr(16, {0})};
  Sdr u = union_all(parts);
  CHECK(u.active == std::vector<std::uint16_t>{0, 1, 2, 7});
  std::array<Sdr, 3> rev{parts[2], parts[1], parts[0]};
  CHECK(union_all(rev) == u);
  std::array<Sdr, 2> idem{u, u};
  CHECK(union_all(idem) == u);
}

TEST_CASE("concat offsets later parts") {
  std::array<Sdr, 2> parts{Sdr(8, {1, 3}), Sdr(8, {0, 7})};
  Sdr c = concat_all(parts);
  CHECK(c.width == 16);
  CHECK(c.active == std::vector<std::uint16_t>{1, 3, 8, 15});
}

TEST_CASE("multiset merge counts per bit and support equals union") {
  std::array<Sdr, 3> preds{Sdr(16, {1, 2}), Sdr(16, {2, 3}), Sdr(16, {2})};
  PredictionMultiset m = multiset_merge(preds);
  CHECK(m.count_of(1) == 1);
  CHECK(m.count_of(2) == 3);
  CHECK(m.count_of(3) == 1);
  CHECK(m.count_of(0) == 0);
  CHECK(m.max_count() == 3);
  CHECK(m.support() == union_all(preds));
}

TEST_CASE("multiset add merges counts pointwise") {
  std::array<Sdr, 1> a{Sdr(8, {1, 2})};
  std::array<Sdr, 1> b{Sdr(8, {2, 5})};
  PredictionMultiset ma = multiset_merge(a);
  ma.add(multiset_merge(b));
  CHECK(ma.count_of(1) == 1);
  CHECK(ma.count_of(2) == 2);
  CHECK(ma.count_of(5) == 1);
}

TEST_CASE("multiset slice re-bases a window") {
  std::array<Sdr, 1> a{Sdr(16, {1, 6, 9, 14})};
  PredictionMultiset m = multiset_merge(a);
  PredictionMultiset s = m.slice(6, 8);
  CHECK(s.width == 8);
  CHECK(s.count_of(0) == 1);  // bit 6
  CHECK(s.count_of(3) == 1);  // bit 9
  CHECK(s.count_of(5) == 0);
}

TEST_CASE("text round trip and malformed input") {
  Sdr s(121, {0, 40, 120});
  CHECK(s.to_text() == "121:0,40,120");
  CHECK(Sdr::parse(s.to_text()) == s);
  Sdr e(121, {});
  CHECK(e.to_text() == "121:");
  CHECK(Sdr::parse("121:") == e);
  CHECK_THROWS(Sdr::parse("nonsense"));
  CHECK_THROWS(Sdr::parse("10:12"));   // index >= width
  CHECK_THROWS(Sdr::parse("10:1,,2"));
}

TEST_CASE("random_sdr has exact cardinality and uniform marginals") {
  RngStream rng(123, "random_sdr_test");
  constexpr int kTrials = 4000;
  constexpr std::uint32_t kWidth = 121, kActive = 4;
  std::array<int, kWidth> hits{};
  for (int t = 0; t < kTrials; ++t) {
    Sdr s = random_sdr(kWidth, kActive, rng);
    REQUIRE(s.count() == kActive);
    REQUIRE(s.active.back() < kWidth);
    for (std::uint16_t b : s.active) ++hits[b];
  }
  // Each bit is a Binomial(kTrials, kActive/kWidth) count; check +-4 sigma.
  double p = static_cast<double>(kActive) / kWidth;
  double mean = kTrials * p;
  double sigma = std::sqrt(kTrials * p * (1 - p));
  for (std::uint32_t b = 0; b < kWidth; ++b) {
    CHECK(hits[b] > mean - 4 * sigma);
    CHECK(hits[b] < mean + 4 * sigma);
  }
}

TEST_SUITE_END();
