#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "her/hippocampus.hpp"
#include "her/hysteresis.hpp"
#include "her/projector.hpp"
#include "her/rng.hpp"
#include "her/sdr.hpp"
#include "her/sequence_memory.hpp"
#include "her/serialize.hpp"

namespace her {

HysteresisParams l6b_default_params();  // fast input segmentation
HysteresisParams l5_default_params();   // forward predictor

// A column reads one vertical module plus optional lateral modules. Module 0
// is always the vertical flow; its input is the predecessor's symbol stream
// (or an encoder flow on the first rung).
struct ColumnConfig {
  std::vector<std::uint32_t> module_widths;
  std::uint32_t cells = 121;          // per-layer output width
  std::uint32_t symbol_active = 4;    // k of every k-WTA, per replica
  std::uint32_t replicas_l23_l4 = 2;  // paired L4/L23 lanes and L1 replicas
  std::uint32_t replicas_l6 = 2;
  std::uint32_t replicas_l5 = 2;
  std::uint32_t branches_per_cell = 4;
  std::uint32_t input_active_bits = 4;  // expected sparsity of one module input
  HysteresisParams l23_params;
  HysteresisParams l6a_params;
  HysteresisParams l6b_params = l6b_default_params();
  HysteresisParams l5_params = l5_default_params();
  double l4_ltp = 0.10, l4_ltd = 0.01, l4_hetero = 0.01;
  double l1_ltp = 0.10, l1_ltd = 0.01, l1_hetero = 0.01;
  double potential_fraction = 0.70;
  double connected_fraction = 0.20;
  double prune_rate = 1.0;  // expected L4/L1 segment retirements per pass
  // 0 = derive from the expected sparsity (half of it, rounded up).
  std::uint32_t l23_threshold = 0;
  std::uint32_t l6a_threshold = 0;
  std::uint32_t l6b_threshold = 0;
  std::uint32_t l5_threshold = 0;
  bool force_plasticity = false;  // test hook, forwarded to every memory
};

struct ColumnStepInput {
  // Cycle-t forward input per module; empty Sdrs must still carry the width.
  std::vector<TaggedSdr> forward;
  // Merged successor prediction over this column's own symbol space (L1
  // tie-break), already latched one cycle by the router.
  PredictionMultiset feedback_own;
  // Per module: the same kind of multiset in that module's input space (the
  // feedback sent to the module's source), used as the L4 tie-break after
  // adaptation through the projector synapses. Width 0 = absent.
  std::vector<PredictionMultiset> feedback_modules;
  LearnGates gates;
  bool inject_eos = false;  // supervised boundary: cut before consuming input
};

struct ColumnOutput {
  std::optional<TaggedSdr> symbol;  // present at EOS (never while muted)
  bool eos = false;
  PredictionMultiset feedback_to_prev;  // L6a replicas' next-input votes
  std::optional<Sdr> l5_prediction;     // only on full replica agreement
  KnowledgeState l23_global = KnowledgeState::kUnknown;
  KnowledgeState l6a_state = KnowledgeState::kUnknown;
  KnowledgeState l6b_state = KnowledgeState::kUnknown;
  double l6a_ema = 1.0;
  double l6b_ema = 1.0;
  double modulation = 0.0;
};

// One cortical column: per-module L4 projector / L23 tracker replica pairs, a
// shared single L6b input segmenter over the concatenated modules, L6a
// backward predictors on the vertical flow, L1 symbol builders (one per
// replica lane), and L5 forward predictors over the column's own symbols.
class Column {
 public:
  Column(const ColumnConfig& cfg, std::uint64_t master_seed,
         const std::string& rng_path);

  // One global cycle. L4 consumes the previous cycle's forward input (the
  // one-cycle delay that lets L6 run ahead of L23); L6a/L6b consume this
  // cycle's. EOS fires on the L6b Known->Unknown boundary or by injection,
  // and the emitted symbol carries the offending input's tag.
  ColumnOutput step(const ColumnStepInput& in);

  // Replay delivery: the item reaches module `m`'s L4 replicas only (learning
  // allowed iff `learn`), never L23, and claims that module's L4 slot for the
  // next step.
  void deliver_replay(std::uint32_t module, const Sdr& item, bool learn);

  // Drop unconsumed replay leases. The wiring layer calls this at cycle end
  // so a lease taken on a quiet cycle never eats the next real input.
  void clear_replay_claims();

  // Feed a symbol into L5 (used both internally at EOS and by the router for
  // speculative forwarded symbols).
  void feed_own_symbol(const Sdr& symbol, bool learn);

  // While muted, L4/L23/L1/L5 stand still and no symbol is emitted; L6a/L6b
  // keep tracking with learning off so the column can re-attach seamlessly.
  void mute(bool on) { muted_ = on; }
  bool muted() const { return muted_; }

  // All-replica-agreement next-symbol prediction.
  std::optional<Sdr> l5_forward_prediction() const;

  // Retire silent-bearing L4/L1 segments (caller gates on prune permission).
  void prune_tick();

  // Modulation pushed from the rung above into the forward predictor.
  void set_l5_modulation(double m);

  KnowledgeState l23_global_state() const;
  KnowledgeState l6a_state() const;
  double l6a_ema() const;
  KnowledgeState l6b_state() const;
  double modulation() const { return modulation_m_; }
  Sdr l6a_predicted_support() const;
  PredictionMultiset l6a_feedback() const;

  std::uint32_t n_modules() const {
    return static_cast<std::uint32_t>(cfg_.module_widths.size());
  }
  std::uint32_t symbol_width() const {
    return cfg_.replicas_l23_l4 * cfg_.cells;
  }
  std::uint32_t l1_input_width() const {
    return n_modules() * cfg_.cells * cfg_.branches_per_cell;
  }
  const ColumnConfig& config() const { return cfg_; }

  std::uint64_t synaptic_load() const;      // everything
  std::uint64_t l4_synaptic_load() const;   // projection layers only
  std::uint64_t l1_synaptic_load() const;
  std::uint64_t plasticity_events() const;  // memories only

  const SequenceMemory& l23(std::uint32_t module, std::uint32_t replica) const;
  const SequenceMemory& l6b() const { return l6b_; }
  const SequenceMemory& l5(std::uint32_t replica) const {
    return l5_[replica];
  }
  const Projector& l4(std::uint32_t module, std::uint32_t replica) const;
  const Projector& l1(std::uint32_t replica) const { return l1_[replica]; }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  std::uint32_t lane(std::uint32_t module, std::uint32_t replica) const {
    return module * cfg_.replicas_l23_l4 + replica;
  }
  std::optional<Sdr> build_symbol(const PredictionMultiset& feedback_own,
                                  bool learn);

  ColumnConfig cfg_;
  std::uint32_t l6b_width_ = 0;

  std::vector<Projector> l4_;        // [module][replica] flattened
  std::vector<SequenceMemory> l23_;  // same order
  std::vector<SequenceMemory> l6a_;
  SequenceMemory l6b_;
  std::vector<Projector> l1_;        // one per replica lane
  std::vector<SequenceMemory> l5_;

  std::vector<TaggedSdr> latched_forward_;
  // Last correctly-predicted branch set per L4/L23 lane (the symbol basis).
  std::vector<std::vector<BranchId>> l23_correct_;
  std::vector<std::uint8_t> replay_claimed_;  // per module, one-step lease
  bool muted_ = false;
  double modulation_m_ = 0.0;
};

}  // namespace her
