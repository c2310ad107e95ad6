#pragma once

#include <cstdint>

namespace her {

// Two-state familiarity machine driven by the anomaly EMA. Known->Unknown
// fires the boundary event (end of sequence for segmenting memories);
// Unknown->Known is silent.
enum class KnowledgeState : std::uint8_t { kKnown = 0, kUnknown = 1 };

struct HysteresisParams {
  double alpha = 0.1;   // EMA smoothing for the anomaly score
  double down = 0.05;   // Unknown -> Known when ema <= down
  double up = 0.4;      // Known -> Unknown when ema >= up
  double k_steepness = 1000.0;  // logistic steepness baseline
  double ltp_delta = 1e-5;      // base permanence increment (d0)
  double ltd_ratio = 0.1;       // LTD = ltp * ltd_ratio
};

double ema_update(double prev, double sample, double alpha);

struct HysteresisResult {
  KnowledgeState state;
  bool boundary;  // true only on Known -> Unknown
};
HysteresisResult hysteresis_step(KnowledgeState state, double ema,
                                 const HysteresisParams& p);

// Modulation flattens the plasticity gate and scales the step size:
// steepness (1-m)*K, increment d0*(1+100m). m itself follows the same
// state-dependent logistic, centered on `down` while Unknown and on `up`
// while Known, so a novelty-saturated stream drives m -> 1.
double modulation_value(KnowledgeState state, double ema,
                        const HysteresisParams& p);
double effective_steepness(double k_steepness, double m);
double effective_ltp_delta(double d0, double m);

// Probability that this step's plasticity fires: logistic in ema around the
// current state's threshold (down while Unknown, up while Known), with
// steepness (1-m)*K.
double learning_probability(KnowledgeState state, double ema,
                            const HysteresisParams& p, double m);

// Engine-wide fixed-point permanence representation. One quantum = 1/65535;
// every synaptic weight in the system lives on this grid, which is also what
// the checkpoint format persists.
using Perm = std::uint16_t;
inline constexpr std::uint32_t kPermOne = 65535;
Perm perm_from_real(double v);          // clamped round-to-nearest
double perm_to_real(Perm p);
std::uint32_t perm_delta_units(double d);  // round-to-nearest, >= 0

}  // namespace her
