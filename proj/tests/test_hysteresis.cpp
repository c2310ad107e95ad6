#include <doctest.h>

#include <cmath>

#include "her/hysteresis.hpp"

using namespace her;

TEST_SUITE_BEGIN("hysteresis");

TEST_CASE("ema recurrence: ten unit samples from zero") {
  double ema = 0.0;
  for (int i = 0; i < 10; ++i) ema = ema_update(ema, 1.0, 0.1);
  CHECK(ema == doctest::Approx(1.0 - std::pow(0.9, 10)).epsilon(1e-12));
}

TEST_CASE("state transitions and boundary event") {
  HysteresisParams p;
  p.up = 0.4;
  p.down = 0.05;

  auto r = hysteresis_step(KnowledgeState::kKnown, 0.41, p);
  CHECK(r.state == KnowledgeState::kUnknown);
  CHECK(r.boundary);

  r = hysteresis_step(KnowledgeState::kKnown, 0.4, p);  // >= is inclusive
  CHECK(r.state == KnowledgeState::kUnknown);
  CHECK(r.boundary);

  r = hysteresis_step(KnowledgeState::kKnown, 0.39, p);
  CHECK(r.state == KnowledgeState::kKnown);
  CHECK_FALSE(r.boundary);

  r = hysteresis_step(KnowledgeState::kUnknown, 0.05, p);  // silent u->k
  CHECK(r.state == KnowledgeState::kKnown);
  CHECK_FALSE(r.boundary);

  r = hysteresis_step(KnowledgeState::kUnknown, 0.2, p);  // deadband holds
  CHECK(r.state == KnowledgeState::kUnknown);
  CHECK_FALSE(r.boundary);

  // deadband holds Known too
  r = hysteresis_step(KnowledgeState::kKnown, 0.2, p);
  CHECK(r.state == KnowledgeState::kKnown);
}

TEST_CASE("learning probability: logistic values to 1e-12") {
  HysteresisParams p;  // up 0.4, down 0.05, K 1000
  // Midpoints give exactly 1/2.
  CHECK(learning_probability(KnowledgeState::kKnown, 0.4, p, 0.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(learning_probability(KnowledgeState::kUnknown, 0.05, p, 0.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // One hundredth above/below the center moves the logistic by e^{+-10}.
  double expect_hi = 1.0 / (1.0 + std::exp(-10.0));
  CHECK(learning_probability(KnowledgeState::kKnown, 0.41, p, 0.0) ==
        doctest::Approx(expect_hi).epsilon(1e-12));
  double expect_lo = 1.0 / (1.0 + std::exp(10.0));
  CHECK(learning_probability(KnowledgeState::kKnown, 0.39, p, 0.0) ==
        doctest::Approx(expect_lo).epsilon(1e-12));
  // Saturation far from the center.
  CHECK(learning_probability(KnowledgeState::kUnknown, 1.0, p, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(learning_probability(KnowledgeState::kKnown, 0.0, p, 0.0) ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("modulation flattens the gate and scales the step") {
  CHECK(effective_steepness(1000.0, 0.0) == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(effective_steepness(1000.0, 0.5) == doctest::Approx(500.0).epsilon(1e-12));
  CHECK(effective_steepness(1000.0, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  double d0 = 1e-5;
  CHECK(effective_ltp_delta(d0, 0.0) == doctest::Approx(d0).epsilon(1e-12));
  CHECK(effective_ltp_delta(d0, 0.5) == doctest::Approx(d0 * 51.0).epsilon(1e-12));
  CHECK(effective_ltp_delta(d0, 1.0) == doctest::Approx(d0 * 101.0).epsilon(1e-12));
  // Linearity: m=1 magnitude is exactly 101x the m=0 magnitude.
  CHECK(effective_ltp_delta(d0, 1.0) / effective_ltp_delta(d0, 0.0) ==
        doctest::Approx(101.0).epsilon(1e-12));

  // Fully flattened gate: probability is 1/2 everywhere.
  HysteresisParams p;
  CHECK(learning_probability(KnowledgeState::kKnown, 0.0, p, 1.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(learning_probability(KnowledgeState::kKnown, 1.0, p, 1.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("modulation value follows the state-dependent logistic") {
  HysteresisParams p;
  CHECK(modulation_value(KnowledgeState::kUnknown, 0.05, p) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(modulation_value(KnowledgeState::kKnown, 0.4, p) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Unknown with ema well above down -> saturated modulation.
  CHECK(modulation_value(KnowledgeState::kUnknown, 0.2, p) ==
        doctest::Approx(1.0).epsilon(1e-10));
  // Known with low ema -> no modulation.
  CHECK(modulation_value(KnowledgeState::kKnown, 0.01, p) ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("fixed-point permanence arithmetic") {
  CHECK(perm_from_real(0.0) == 0);
  CHECK(perm_from_real(1.0) == kPermOne);
  CHECK(perm_from_real(0.5) == 32768);
  CHECK(perm_from_real(2.0) == kPermOne);   // clamped
  CHECK(perm_from_real(-1.0) == 0);
  CHECK(perm_to_real(perm_from_real(0.25)) == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(perm_delta_units(0.0) == 0);
  CHECK(perm_delta_units(1e-5) == 1);       // one quantum
  CHECK(perm_delta_units(0.10) == 6554);  // llround(0.10 * 65535)
}

TEST_SUITE_END();
