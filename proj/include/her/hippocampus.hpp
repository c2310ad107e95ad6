#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "her/hysteresis.hpp"
#include "her/rng.hpp"
#include "her/sdr.hpp"
#include "her/sequence_memory.hpp"
#include "her/serialize.hpp"

namespace her {

// Learn-enable verdict of one filtering slice, phrased from the slice's own
// vantage point: "above" is the column it feeds, "below" the column it reads.
struct GatingDecision {
  bool l1_above = false;
  bool l23_above = false;
  bool l4_above = false;
  bool l6a_above = false;
  bool l6b_above = false;
  bool l5_below = false;
  bool operator==(const GatingDecision&) const = default;
};

// The learning gating table, verbatim:
//   slice present & Unknown  -> everything above frozen, L5 below frozen
//   slice present & Known    -> L1/L23/L4 above learn; L6a/L6b above and L5
//                               below learn iff L23 above is Known
//   slice absent             -> L4/L1/L6b above frozen; L23/L6a above and L5
//                               below learn
GatingDecision gating_rules(bool ca3_present, KnowledgeState ca3_state,
                            KnowledgeState l23_above);

// A slice exists while any covered next-rung input tracker is Unknown and
// vanishes once all are Known.
bool allocate_policy(std::span<const KnowledgeState> covered_l6a);

// Final per-column learn switches after combining every slice that touches
// the column.
struct LearnGates {
  bool l4 = false;
  bool l23 = true;
  bool l6a = true;
  bool l6b = false;
  bool l1 = false;
  bool l5 = true;
  bool prune = false;
  bool operator==(const LearnGates&) const = default;
};

struct ColumnGateInputs {
  // One verdict per slice feeding this column, each already evaluated against
  // this column's own L23 state. Never empty in a wired cortex.
  std::vector<GatingDecision> below;
  // Allocation flag of each slice reading this column's output (the top rung
  // has none unless an attention generator is attached).
  std::vector<bool> above_allocated;
  // Per above slice: learning permission it grants this column's L5
  // (deallocated, or Known with all its covered L23 Known).
  std::vector<bool> above_l5_enable;
  // Input segmentation may also learn while an output slice is allocated
  // (covers the window between "output stream changed" and "slice Known").
  bool l6b_learn_with_output_slice = true;
};

LearnGates combine_column_gates(const ColumnGateInputs& in);

// On-demand familiarity tracker over the concatenated output stream of a
// fixed column group. Replicated sequence memories vote on the state and on
// every replayed bit. No segmentation: sequences chain across boundaries and
// learning runs at a fast rate so the slice converges quickly.
struct FilteringSliceConfig {
  std::uint32_t input_width = 0;
  std::uint32_t replicas = 3;
  std::uint32_t vote_threshold = 2;  // half plus one
  std::uint32_t branches_per_cell = 4;
  std::uint32_t activation_threshold = 2;
  HysteresisParams params;       // defaults set in make_slice_params()
  double rate_scale = 100.0;
  std::uint32_t swr_min_bits = 4;   // a regular symbol's active-bit count
  std::uint32_t swr_max_bits = 6;   // 1.5x a regular symbol
  std::uint32_t swr_max_items = 10;
  std::uint32_t decay_units = 7;    // full permanence fades in ~1e4 ticks
  bool swr_enabled = true;
  bool force_plasticity = false;    // forwarded to replicas (test hook)
};

HysteresisParams make_slice_params();

struct SliceStepResult {
  KnowledgeState state = KnowledgeState::kUnknown;
  bool ripple_started = false;
};

class FilteringSlice {
 public:
  FilteringSlice(const FilteringSliceConfig& cfg, std::uint64_t master_seed,
                 const std::string& rng_path);

  // Allocation is driven externally by allocate_policy over the covered
  // next-rung input trackers; flipping it latches nothing else.
  void set_allocated(bool allocated) { allocated_ = allocated; }
  bool allocated() const { return allocated_; }

  // Majority vote over the replicas.
  KnowledgeState state() const;

  // Consume one real input. Interrupts any running ripple first, steps every
  // replica with learning on, then may start a fresh ripple when the slice is
  // familiar but some covered successor is not. No-op while deallocated or on
  // an empty input.
  SliceStepResult step(const Sdr& input, bool any_successor_unknown);

  // One replay delivery slot per call (consecutive cycles). nullopt while no
  // ripple is running or when the pending item is delivery-inhibited (wider
  // than swr_max_bits); an inhibited item still consumes its slot.
  std::optional<Sdr> pop_replay_item();
  bool ripple_active() const { return ripple_pos_ < ripple_.size(); }

  // Gradual fade-out; only acts while deallocated.
  void decay_tick();

  std::uint64_t synaptic_load() const;
  const SequenceMemory& replica(std::size_t i) const { return replicas_[i]; }
  const FilteringSliceConfig& config() const { return cfg_; }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  void build_ripple(const Sdr& seed);

  FilteringSliceConfig cfg_;
  bool allocated_ = true;
  std::vector<SequenceMemory> replicas_;
  std::vector<std::optional<Sdr>> ripple_;  // nullopt = inhibited slot
  std::size_t ripple_pos_ = 0;
};

}  // namespace her
