#include "her/hysteresis.hpp"

#include <cmath>

namespace her {

double ema_update(double prev, double sample, double alpha) {
  return alpha * sample + (1.0 - alpha) * prev;
}

HysteresisResult hysteresis_step(KnowledgeState state, double ema,
                                 const HysteresisParams& p) {
  if (state == KnowledgeState::kKnown && ema >= p.up)
    return {KnowledgeState::kUnknown, true};
  if (state == KnowledgeState::kUnknown && ema <= p.down)
    return {KnowledgeState::kKnown, false};
  return {state, false};
}

namespace {
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double state_threshold(KnowledgeState state, const HysteresisParams& p) {
  return state == KnowledgeState::kUnknown ? p.down : p.up;
}
}  // namespace

double modulation_value(KnowledgeState state, double ema,
                        const HysteresisParams& p) {
  return logistic(p.k_steepness * (ema - state_threshold(state, p)));
}

double effective_steepness(double k_steepness, double m) {
  return (1.0 - m) * k_steepness;
}

double effective_ltp_delta(double d0, double m) {
  return d0 * (1.0 + m * 100.0);
}

double learning_probability(KnowledgeState state, double ema,
                            const HysteresisParams& p, double m) {
  double k = effective_steepness(p.k_steepness, m);
  return logistic(k * (ema - state_threshold(state, p)));
}

Perm perm_from_real(double v) {
  if (v <= 0.0) return 0;
  if (v >= 1.0) return static_cast<Perm>(kPermOne);
  return static_cast<Perm>(std::llround(v * kPermOne));
}

double perm_to_real(Perm p) {
  return static_cast<double>(p) / static_cast<double>(kPermOne);
}

std::uint32_t perm_delta_units(double d) {
  if (d <= 0.0) return 0;
  double units = d * kPermOne;
  if (units >= static_cast<double>(kPermOne)) return kPermOne;
  return static_cast<std::uint32_t>(std::llround(units));
}

}  // namespace her
