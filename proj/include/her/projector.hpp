#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "her/hysteresis.hpp"
#include "her/rng.hpp"
#include "her/sdr.hpp"
#include "her/serialize.hpp"

namespace her {

// Feedback-modulated k-winners-take-all projector. Proximal synapses are
// fixed at construction (silent majority, no regrowth ever); learning only
// moves permanences, and synapses that hit zero are gone for good.
struct ProjectorConfig {
  std::uint32_t in_width = 0;
  std::uint32_t out_width = 0;
  std::uint32_t k_winners = 0;
  double potential_fraction = 0.70;
  double connected_fraction = 0.20;  // of the potential pool, at init
  double perm_threshold = 0.5;
  double ltp_delta = 0.10;
  double ltd_delta = 0.01;
  double hetero_delta = 0.01;
  bool plastic = true;
  double prune_rate = 0.0;  // expected retirements per prune pass
  // > 0 switches init to a contiguous, fully connected receptive field of
  // this fraction of the input (front-end reducer mode), wrapping around.
  double receptive_field_fraction = 0.0;
};

struct ProximalSynapse {
  std::uint16_t input;
  Perm perm;
};

struct ProximalSegment {
  std::vector<ProximalSynapse> synapses;  // sorted by input, unique
  bool retired = false;
};

class Projector {
 public:
  Projector(const ProjectorConfig& cfg, RngStream rng);

  // k-WTA: primary = connected overlap with input, secondary = feedback
  // multiplicity (normalized < 1), tertiary = ascending index. Zero-primary
  // outputs never win, so fewer than k winners is possible.
  Sdr project(const Sdr& input,
              const PredictionMultiset* feedback = nullptr) const;

  void learn(const Sdr& input, const Sdr& winners);

  // Retire silent-synapse-bearing segments stochastically; caller gates when
  // this may run.
  void prune_segments();

  // Transfer an input-space prediction to output space through the connected
  // synapses (for tie-breaking a projector whose feedback arrives in its
  // input coordinates).
  PredictionMultiset feedback_from_input_prediction(
      const PredictionMultiset& input_space) const;

  std::uint64_t synapse_count() const { return synapse_count_; }
  std::uint32_t retired_count() const;
  const ProximalSegment& segment(std::uint32_t output) const {
    return segments_[output];
  }
  const ProjectorConfig& config() const { return cfg_; }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  ProjectorConfig cfg_;
  RngStream rng_;
  std::vector<ProximalSegment> segments_;  // one per output bit
  Perm threshold_units_;
  std::uint64_t synapse_count_ = 0;
};

}  // namespace her
