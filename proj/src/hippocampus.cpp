#include "her/hippocampus.hpp"

#include <algorithm>
#include <stdexcept>

namespace her {

GatingDecision gating_rules(bool ca3_present, KnowledgeState ca3_state,
                            KnowledgeState l23_above) {
  GatingDecision g;
  if (ca3_present) {
    if (ca3_state == KnowledgeState::kUnknown) {
      // Everything stays false: the column above and L5 below are frozen
      // while the slice itself absorbs the new stream.
      return g;
    }
    g.l1_above = g.l23_above = g.l4_above = true;
    if (l23_above == KnowledgeState::kKnown) {
      g.l6a_above = g.l6b_above = true;
      g.l5_below = true;
    }
    return g;
  }
  g.l23_above = g.l6a_above = true;
  g.l5_below = true;
  return g;
}

bool allocate_policy(std::span<const KnowledgeState> covered_l6a) {
  return std::any_of(covered_l6a.begin(), covered_l6a.end(),
                     [](KnowledgeState s) {
                       return s == KnowledgeState::kUnknown;
                     });
}

LearnGates combine_column_gates(const ColumnGateInputs& in) {
  if (in.below.empty())
    throw std::invalid_argument("combine_column_gates: no feeding slice");
  LearnGates g;
  g.l4 = g.l23 = g.l6a = g.l6b = g.l1 = true;
  for (const GatingDecision& d : in.below) {
    g.l4 &= d.l4_above;
    g.l23 &= d.l23_above;
    g.l6a &= d.l6a_above;
    g.l6b &= d.l6b_above;
    g.l1 &= d.l1_above;
  }
  bool any_output_slice = std::any_of(in.above_allocated.begin(),
                                      in.above_allocated.end(),
                                      [](bool b) { return b; });
  if (any_output_slice) {
    g.l4 = g.l1 = true;
    if (in.l6b_learn_with_output_slice) g.l6b = true;
  }
  g.l5 = std::all_of(in.above_l5_enable.begin(), in.above_l5_enable.end(),
                     [](bool b) { return b; });
  // Pruning is authorized only by positive evidence: output slices exist and
  // all of them have vanished.
  g.prune = !in.above_allocated.empty() && !any_output_slice;
  return g;
}

HysteresisParams make_slice_params() {
  HysteresisParams p;
  p.alpha = 0.01;
  p.down = 0.05;
  p.up = 0.3;
  p.ltp_delta = 1e-5;
  p.ltd_ratio = 0.1;
  return p;
}

FilteringSlice::FilteringSlice(const FilteringSliceConfig& cfg,
                               std::uint64_t master_seed,
                               const std::string& rng_path)
    : cfg_(cfg) {
  if (cfg_.replicas == 0)
    throw std::invalid_argument("FilteringSlice: zero replicas");
  if (cfg_.vote_threshold == 0 || cfg_.vote_threshold > cfg_.replicas)
    throw std::invalid_argument("FilteringSlice: bad vote_threshold");
  SequenceMemoryConfig smc;
  smc.width = cfg_.input_width;
  smc.branches_per_cell = cfg_.branches_per_cell;
  smc.activation_threshold = cfg_.activation_threshold;
  smc.params = cfg_.params;
  smc.reset_on_boundary = false;  // no segmentation: chain across boundaries
  smc.rate_scale = cfg_.rate_scale;
  smc.force_plasticity = cfg_.force_plasticity;
  replicas_.reserve(cfg_.replicas);
  for (std::uint32_t i = 0; i < cfg_.replicas; ++i)
    replicas_.emplace_back(
        smc, RngStream(master_seed, rng_path + "/replica" + std::to_string(i)));
}

KnowledgeState FilteringSlice::state() const {
  std::uint32_t known = 0;
  for (const SequenceMemory& r : replicas_)
    known += r.state() == KnowledgeState::kKnown;
  return known >= cfg_.vote_threshold ? KnowledgeState::kKnown
                                      : KnowledgeState::kUnknown;
}

SliceStepResult FilteringSlice::step(const Sdr& input,
                                     bool any_successor_unknown) {
  SliceStepResult out;
  if (!allocated_ || input.empty()) {
    out.state = state();
    return out;
  }
  // A regular input interrupts a running ripple.
  ripple_.clear();
  ripple_pos_ = 0;
  for (SequenceMemory& r : replicas_) r.step(input, true);
  out.state = state();
  if (cfg_.swr_enabled && out.state == KnowledgeState::kKnown &&
      any_successor_unknown) {
    build_ripple(input);
    out.ripple_started = ripple_active();
  }
  return out;
}

void FilteringSlice::build_ripple(const Sdr& seed) {
  // Replica synapse tables never change here: cursors carry all walk state.
  // Each cursor starts from its replica's live predictive state, so the walk
  // continues the stream from the item just consumed instead of re-deriving
  // context from a cold burst (which unions every learned continuation).
  std::vector<SequenceMemory::RecallCursor> cursors;
  cursors.reserve(replicas_.size());
  for (const SequenceMemory& r : replicas_) cursors.emplace_back(r, true);

  std::vector<std::uint32_t> votes(cfg_.input_width);
  Sdr cur = seed;
  for (std::uint32_t item = 0; item < cfg_.swr_max_items; ++item) {
    std::fill(votes.begin(), votes.end(), 0);
    for (auto& cursor : cursors) {
      const Sdr sup = item == 0 ? cursor.support() : cursor.feed(cur);
      for (std::uint16_t bit : sup.active) ++votes[bit];
    }
    Sdr voted;
    voted.width = cfg_.input_width;
    for (std::uint32_t b = 0; b < cfg_.input_width; ++b)
      if (votes[b] >= cfg_.vote_threshold)
        voted.active.push_back(static_cast<std::uint16_t>(b));
    if (voted == cur) break;                       // self-prediction
    if (voted.count() < cfg_.swr_min_bits) break;  // thinner than the stream
    if (voted.count() > cfg_.swr_max_bits)
      ripple_.push_back(std::nullopt);  // slot consumed, delivery inhibited
    else
      ripple_.push_back(voted);
    cur = std::move(voted);
  }
}

std::optional<Sdr> FilteringSlice::pop_replay_item() {
  if (!ripple_active()) return std::nullopt;
  return ripple_[ripple_pos_++];
}

void FilteringSlice::decay_tick() {
  if (allocated_) return;
  for (SequenceMemory& r : replicas_) r.decay_all(cfg_.decay_units);
}

std::uint64_t FilteringSlice::synaptic_load() const {
  std::uint64_t n = 0;
  for (const SequenceMemory& r : replicas_) n += r.synaptic_load();
  return n;
}

void FilteringSlice::save(BinWriter& w) const {
  w.u8(allocated_ ? 1 : 0);
  for (const SequenceMemory& r : replicas_) r.save(w);
  w.u64(ripple_.size());
  for (const auto& item : ripple_) {
    w.u8(item.has_value() ? 1 : 0);
    if (item.has_value()) write_sdr(w, *item);
  }
  w.u64(ripple_pos_);
}

void FilteringSlice::load(BinReader& r) {
  allocated_ = r.u8() != 0;
  for (SequenceMemory& m : replicas_) m.load(r);
  ripple_.assign(r.u64(), std::nullopt);
  for (auto& item : ripple_)
    if (r.u8() != 0) item = read_sdr(r);
  ripple_pos_ = r.u64();
}

}  // namespace her
