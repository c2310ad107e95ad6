#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "her/column.hpp"
#include "her/hippocampus.hpp"
#include "her/sdr.hpp"
#include "her/serialize.hpp"
#include "her/thalamus.hpp"

namespace her {

// One hierarchy level. Widths are authoritative: each rung must be an integer
// multiple of the one below (the ratio is the scale-out fan-out). Lateral
// modules read the previous rung's neighbours with wraparound; the first rung
// must not have any.
struct RungSpec {
  std::uint32_t width = 0;
  std::uint32_t lateral_width = 0;             // lateral modules per column
  std::vector<std::uint32_t> lateral_offsets;  // empty = +1, +2, ...
  std::uint32_t branches_per_cell = 0;         // 0 = 4/8/16 ladder by rung
};

struct CortexConfig {
  std::vector<RungSpec> rungs;
  std::uint32_t input_width = 0;       // encoder flow width (one flow per
                                       // first-rung column)
  std::uint32_t input_active_bits = 4; // expected sparsity of one flow
  std::uint32_t cells = 121;
  std::uint32_t symbol_active = 4;
  std::uint32_t replicas_l23_l4 = 1;
  std::uint32_t replicas_l6 = 1;
  std::uint32_t replicas_l5 = 1;
  HysteresisParams l23_params;
  HysteresisParams l6a_params;
  HysteresisParams l6b_params = l6b_default_params();
  HysteresisParams l5_params = l5_default_params();
  double l4_ltp = 0.10, l4_ltd = 0.01, l4_hetero = 0.01;
  double l1_ltp = 0.10, l1_ltd = 0.01, l1_hetero = 0.01;
  double potential_fraction = 0.70;
  double connected_fraction = 0.20;
  double prune_rate = 1.0;

  std::uint32_t ca3_group_size = 2;      // columns synchronized per slice
  std::uint32_t ca3_shift_per_rung = 1;  // grouping offset added per boundary
  std::uint32_t ca3_replicas = 3;
  bool swr = true;

  bool supervised_eos = false;
  bool attention = false;          // attention generators + speculation pass
  bool ctloop_match_l6b = false;   // match against successor input segmenters
  std::uint32_t runaway_limit = 3;
  std::uint32_t match_min_bits = 0;  // 0 = exact symbol sparsity
  std::uint32_t match_max_bits = 0;

  bool mgn = true;
  std::uint32_t mgn_t_rep = 2;

  std::uint64_t master_seed = 1;
  bool force_plasticity = false;   // test hook, forwarded everywhere
  bool l6b_learn_with_output_slice = true;
};

struct SymbolEvent {
  std::uint32_t rung = 0;
  std::uint32_t column = 0;
  TaggedSdr symbol;
  bool speculative = false;
};

struct EosEvent {
  std::uint32_t rung = 0;
  std::uint32_t column = 0;
  StreamTag tag;          // the offending input's origin
  bool injected = false;  // supervised boundary
  bool muted = false;     // fired while running on speculation
};

struct CycleReport {
  std::uint64_t cycle = 0;
  bool stream_changed = false;
  std::vector<SymbolEvent> symbols;
  std::vector<EosEvent> eos_events;
  std::uint32_t columns_stepped = 0;
  std::uint32_t mutes = 0;
  std::uint32_t unmutes = 0;
  std::uint32_t forwards = 0;
  std::uint32_t injections = 0;
  std::uint32_t mgn_suppressed = 0;
  std::uint32_t ripples_started = 0;
  std::uint32_t replay_deliveries = 0;
};

// The assembled hierarchy: columns, synchronization slices at every rung's
// input boundary, attention generators on the top rung, sensory front doors,
// and the speculation loop. One step() is one global cycle:
//   front door -> per rung (input slices -> gates -> replay -> column
//   barrier) -> attention -> speculation pass -> feedback latching ->
//   predictor modulation -> decay/prune.
// Within a rung barrier columns only read state published by lower phases,
// so results are independent of intra-rung order.
class Cortex {
 public:
  explicit Cortex(const CortexConfig& cfg);

  CycleReport step(const std::vector<TaggedSdr>& inputs);

  std::uint32_t n_rungs() const {
    return static_cast<std::uint32_t>(rungs_.size());
  }
  std::uint32_t rung_width(std::uint32_t r) const {
    return static_cast<std::uint32_t>(rungs_[r].size());
  }
  std::uint32_t n_columns() const { return n_columns_; }
  std::uint32_t symbol_width() const {
    return cfg_.replicas_l23_l4 * cfg_.cells;
  }
  std::uint64_t cycle() const { return cycle_; }
  const CortexConfig& config() const { return cfg_; }

  const Column& column(std::uint32_t r, std::uint32_t j) const {
    return rungs_[r][j].col;
  }
  LearnGates gates(std::uint32_t r, std::uint32_t j) const {
    return rungs_[r][j].gates;
  }
  bool muted(std::uint32_t r, std::uint32_t j) const {
    return rungs_[r][j].col.muted();
  }

  // Wiring introspection (pure function of the config).
  std::uint32_t vertical_source(std::uint32_t r, std::uint32_t j) const {
    return rungs_[r][j].sources[0];
  }
  const std::vector<std::uint32_t>& module_sources(std::uint32_t r,
                                                   std::uint32_t j) const {
    return rungs_[r][j].sources;
  }

  std::uint32_t n_slices(std::uint32_t boundary) const {
    return static_cast<std::uint32_t>(boundaries_[boundary].size());
  }
  const FilteringSlice& slice(std::uint32_t boundary, std::uint32_t g) const {
    return boundaries_[boundary][g].slice;
  }
  const std::vector<std::uint32_t>& slice_members(std::uint32_t boundary,
                                                  std::uint32_t g) const {
    return boundaries_[boundary][g].members;
  }
  std::uint32_t slice_of(std::uint32_t boundary, std::uint32_t member) const;

  const AttentionGenerator* ag(std::uint32_t j) const {
    return ags_.empty() ? nullptr : &ags_[j];
  }
  const MgnFilter& mgn(std::uint32_t flow) const { return mgns_[flow]; }
  // Expectation the front door will hold the flow against next cycle.
  const PredictionMultiset& mgn_expectation(std::uint32_t flow) const {
    return mgn_expect_[flow];
  }
  const CtLoop& ctloop() const { return ctloop_; }
  bool forwarding(std::uint32_t r, std::uint32_t j) const;

  // No slice allocated on either side of the column.
  bool fully_stable(std::uint32_t r, std::uint32_t j) const;
  std::uint64_t synaptic_load() const;
  std::uint64_t rung_synaptic_load(std::uint32_t r) const;

  // Test hook: iterate rung barriers in reverse column order (results must
  // not change — the determinism contract).
  void set_reverse_intra_rung_order(bool on) { reverse_order_ = on; }

  // Size of the worker pool for rung barriers (0 = available parallelism).
  // Columns within a rung are data-independent, so results are identical
  // for every pool size; the knob is not part of persistent state.
  void set_threads(std::uint32_t n);
  std::uint32_t threads() const { return threads_; }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  struct Node {
    Column col;
    std::vector<std::uint32_t> sources;  // per module, index in layer below
    std::vector<std::uint32_t> vertical_successors;  // next-rung local ids
    // (next-rung local id, module slot) for every reader of this output.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> consumers;
    std::vector<std::uint32_t> below_slices;  // distinct groups, boundary r
    std::uint32_t above_slice = kNone;        // group at boundary r+1
    LearnGates gates;
    bool pending_inject = false;
    StreamTag last_input_tag;  // speculative forwards inherit this origin
    PredictionMultiset fb_own_next;
    std::vector<PredictionMultiset> fb_modules_next;

    Node(Column c, std::vector<std::uint32_t> srcs)
        : col(std::move(c)), sources(std::move(srcs)) {}
  };

  struct SliceNode {
    FilteringSlice slice;
    std::vector<std::uint32_t> members;        // layer-below indices, in order
    std::vector<std::uint32_t> above_columns;  // rung-b consumers (dedup)
    std::vector<std::uint32_t> vertical_above;
    std::uint32_t member_width = 0;

    explicit SliceNode(FilteringSlice s) : slice(std::move(s)) {}
  };

  struct Forward {
    std::uint32_t rung = 0;
    std::uint32_t column = 0;
    Sdr symbol;
    StreamTag tag;
  };

  static constexpr std::uint32_t kNone = 0xffffffffu;

  std::uint32_t flat_id(std::uint32_t r, std::uint32_t j) const {
    return id_offset_[r] + j;
  }
  ColumnConfig column_config(std::uint32_t r) const;
  FilteringSliceConfig slice_config(std::uint32_t boundary) const;
  void recompute_gates(std::uint32_t r);
  void speculation_pass(CycleReport& rep);
  void route_feedback();

  CortexConfig cfg_;
  std::vector<std::vector<Node>> rungs_;
  std::vector<std::vector<SliceNode>> boundaries_;  // [rung][group]
  std::vector<std::vector<std::uint32_t>> member_group_;  // [boundary][member]
  std::vector<AttentionGenerator> ags_;
  std::vector<MgnFilter> mgns_;
  CtLoop ctloop_;
  MatchLimits limits_;
  std::vector<std::uint32_t> id_offset_;
  std::uint32_t n_columns_ = 0;

  std::uint64_t cycle_ = 0;
  bool have_prev_stream_ = false;
  std::uint32_t prev_stream_ = 0;
  std::vector<Forward> forward_queue_;
  std::vector<PredictionMultiset> mgn_expect_;  // per flow, latched feedback

  // Per cycle scratch: symbol published by (rung, column), if any.
  std::vector<std::vector<std::optional<SymbolEvent>>> published_;
  bool reverse_order_ = false;
  std::uint32_t threads_ = 1;

  // Per-worker accumulator for one rung barrier; merged in column order so
  // reports are identical whatever the pool size.
  struct BarrierAcc {
    std::uint32_t stepped = 0;
    std::uint32_t injections = 0;
    std::vector<EosEvent> eos;
    std::vector<SymbolEvent> symbols;
  };
  void barrier_step_one(std::uint32_t r, std::uint32_t j,
                        const std::vector<std::optional<TaggedSdr>>& filtered,
                        BarrierAcc& acc);
};

}  // namespace her
