#pragma once

#include <cstdint>
#include <vector>

#include "her/hysteresis.hpp"
#include "her/rng.hpp"
#include "her/sdr.hpp"
#include "her/serialize.hpp"

namespace her {

// One potential context line between branches. Synapses live on segments,
// segments on branches, a fixed number of branches on each cell (one cell per
// input bit). A branch id is cell * branches_per_cell + branch index.
using BranchId = std::uint32_t;

struct DistalSynapse {
  BranchId presyn;
  Perm perm;
};

struct DistalSegment {
  std::vector<DistalSynapse> synapses;  // sorted by presyn, unique
};

struct SequenceMemoryConfig {
  std::uint32_t width = 0;
  std::uint32_t branches_per_cell = 4;
  // Connected synapses onto active branches a segment needs to fire.
  std::uint32_t activation_threshold = 2;
  std::uint32_t max_synapses_per_segment = 128;
  HysteresisParams params;
  // Segmenting memories cut their context at a boundary so sequences never
  // chain across it; familiarity trackers (hippocampal slices) keep chaining.
  bool reset_on_boundary = true;
  // Plasticity step multiplier (slice memories run 100x the base rate).
  double rate_scale = 1.0;
  // Test hook: bypass the Bernoulli plasticity gate.
  bool force_plasticity = false;
};

// Fraction of the active bits that were not predicted; 0 for an empty input.
double anomaly_score(const Sdr& active, const Sdr& predicted_prev);

struct SmStepResult {
  double anomaly = 0.0;
  double ema = 0.0;
  KnowledgeState state = KnowledgeState::kUnknown;
  bool boundary = false;
  // Branches that were predicted and whose cell then received input.
  std::vector<BranchId> correctly_predicted;
  // Per-cell prediction multiplicity for the next input.
  PredictionMultiset predicted_next;
};

// Online sequence learner over a fixed-width sparse stream. Single-writer:
// one step() at a time; recall runs on a scratch context and never mutates
// the tracked state.
class SequenceMemory {
 public:
  SequenceMemory(const SequenceMemoryConfig& cfg, RngStream rng);

  SmStepResult step(const Sdr& input, bool learn_enabled);

  // Supervised end-of-sequence: flip to Unknown and cut the context. The next
  // input starts a fresh sequence and the cut transition is never learned.
  void force_boundary();

  // Free-running recall: feed seed, then feed each prediction back. Emits the
  // predicted supports; stops on self-prediction, support < min_support,
  // support > max_support, or after max_len items.
  std::vector<Sdr> recall_burst(const Sdr& seed, std::uint32_t min_support,
                                std::uint32_t max_support, int max_len) const;

  KnowledgeState state() const { return state_; }
  double ema() const { return ema_; }
  void set_modulation(double m) { m_ = m; }
  double modulation() const { return m_; }

  const PredictionMultiset& predicted() const { return predicted_; }
  const Sdr& predicted_support() const { return predicted_support_; }
  // Last step's correctly-predicted branches plus bursting winners; the
  // symbol-builder basis.
  const std::vector<BranchId>& winner_branches() const { return winners_; }

  std::uint64_t synaptic_load() const { return synapse_count_; }
  std::uint64_t segment_count() const;
  std::uint64_t plasticity_events() const { return plasticity_events_; }

  // Uniform decay sweep (post-deallocation fade-out). Returns synapses left.
  std::uint64_t decay_all(std::uint32_t units);

  const SequenceMemoryConfig& config() const { return cfg_; }
  std::uint32_t branch_count() const {
    return cfg_.width * cfg_.branches_per_cell;
  }

  void save(BinWriter& w) const;
  void load(BinReader& r);

  // Scratch predictive-state walker for replay voting; read-only on the
  // memory. feed() returns the predicted support after consuming input.
  // Seeded from the memory's live predictive state the walk continues the
  // stream from "now"; cold-seeded it must re-derive context by bursting.
  class RecallCursor {
   public:
    explicit RecallCursor(const SequenceMemory& sm, bool from_live_state = false);
    Sdr feed(const Sdr& input);
    Sdr support() const;  // predicted columns of the current walk state

   private:
    const SequenceMemory* sm_;
    std::vector<std::uint8_t> predictive_;
  };

 private:
  friend class RecallCursor;
  struct Branch {
    std::vector<DistalSegment> segments;
  };

  void scan_predictive(const std::vector<std::uint8_t>& active_mask,
                       std::vector<std::uint8_t>& flags_out) const;
  void rebuild_prediction();
  void apply_plasticity(const std::vector<BranchId>& burst_winners);
  void adapt_segment(DistalSegment& seg, std::uint32_t ltp_units,
                     std::uint32_t ltd_units);
  void grow_synapses(BranchId owner, DistalSegment& seg);
  void reset_to_burst(const Sdr& input);

  SequenceMemoryConfig cfg_;
  RngStream rng_;
  std::vector<Branch> branches_;

  KnowledgeState state_ = KnowledgeState::kUnknown;
  double ema_ = 1.0;
  double m_ = 0.0;
  std::uint64_t plasticity_events_ = 0;
  std::uint64_t synapse_count_ = 0;

  // Context carried between steps.
  std::vector<BranchId> active_;            // sorted
  std::vector<std::uint8_t> active_mask_;   // over branches
  std::vector<std::uint8_t> predictive_;    // over branches
  PredictionMultiset predicted_;            // over cells
  Sdr predicted_support_;
  std::vector<BranchId> winners_;
};

}  // namespace her
