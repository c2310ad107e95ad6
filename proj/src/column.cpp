#include "her/column.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace her {

namespace {

std::uint32_t half_up(std::uint32_t n) { return std::max(1u, (n + 1) / 2); }

SequenceMemoryConfig memory_cfg(std::uint32_t width, std::uint32_t branches,
                                std::uint32_t threshold,
                                const HysteresisParams& params, bool force) {
  SequenceMemoryConfig c;
  c.width = width;
  c.branches_per_cell = branches;
  c.activation_threshold = threshold;
  c.params = params;
  c.force_plasticity = force;
  return c;
}

}  // namespace

HysteresisParams l6b_default_params() {
  HysteresisParams p;
  p.alpha = 0.9;
  p.down = 0.1;
  p.up = 0.5;
  p.ltd_ratio = 0.7;
  return p;
}

HysteresisParams l5_default_params() {
  HysteresisParams p;
  p.alpha = 0.5;
  p.down = 0.05;
  p.up = 0.5;
  p.ltd_ratio = 0.5;
  return p;
}

Column::Column(const ColumnConfig& cfg, std::uint64_t master_seed,
               const std::string& rng_path)
    : cfg_(cfg),
      l6b_width_(std::accumulate(cfg.module_widths.begin(),
                                 cfg.module_widths.end(), 0u)),
      l6b_(memory_cfg(l6b_width_ == 0 ? 1 : l6b_width_, cfg.branches_per_cell,
                      cfg.l6b_threshold
                          ? cfg.l6b_threshold
                          : half_up(cfg.input_active_bits *
                                    static_cast<std::uint32_t>(
                                        cfg.module_widths.size())),
                      cfg.l6b_params, cfg.force_plasticity),
           RngStream(master_seed, rng_path + "/l6b")) {
  if (cfg_.module_widths.empty())
    throw std::invalid_argument("Column: no modules");
  if (cfg_.replicas_l23_l4 == 0 || cfg_.replicas_l6 == 0 ||
      cfg_.replicas_l5 == 0)
    throw std::invalid_argument("Column: zero replicas");
  if (cfg_.symbol_active == 0 || cfg_.symbol_active >= cfg_.cells)
    throw std::invalid_argument("Column: bad symbol_active");
  if (l6b_width_ > (1u << 16))
    throw std::invalid_argument("Column: concatenated module width too large");
  if (l1_input_width() > (1u << 16))
    throw std::invalid_argument("Column: branch indicator width too large");

  std::uint32_t n_mod = n_modules();
  std::uint32_t r = cfg_.replicas_l23_l4;
  std::uint32_t l23_thr = cfg_.l23_threshold ? cfg_.l23_threshold
                                             : half_up(cfg_.symbol_active);
  l4_.reserve(static_cast<std::size_t>(n_mod) * r);
  l23_.reserve(static_cast<std::size_t>(n_mod) * r);
  for (std::uint32_t m = 0; m < n_mod; ++m) {
    for (std::uint32_t i = 0; i < r; ++i) {
      ProjectorConfig pc;
      pc.in_width = cfg_.module_widths[m];
      pc.out_width = cfg_.cells;
      pc.k_winners = cfg_.symbol_active;
      pc.potential_fraction = cfg_.potential_fraction;
      pc.connected_fraction = cfg_.connected_fraction;
      pc.ltp_delta = cfg_.l4_ltp;
      pc.ltd_delta = cfg_.l4_ltd;
      pc.hetero_delta = cfg_.l4_hetero;
      pc.prune_rate = cfg_.prune_rate;
      std::string tag = "/m" + std::to_string(m) + "/r" + std::to_string(i);
      l4_.emplace_back(pc, RngStream(master_seed, rng_path + "/l4" + tag));
      l23_.emplace_back(
          memory_cfg(cfg_.cells, cfg_.branches_per_cell, l23_thr,
                     cfg_.l23_params, cfg_.force_plasticity),
          RngStream(master_seed, rng_path + "/l23" + tag));
    }
  }

  std::uint32_t l6a_thr = cfg_.l6a_threshold
                              ? cfg_.l6a_threshold
                              : half_up(cfg_.input_active_bits);
  l6a_.reserve(cfg_.replicas_l6);
  for (std::uint32_t i = 0; i < cfg_.replicas_l6; ++i)
    l6a_.emplace_back(
        memory_cfg(cfg_.module_widths[0], cfg_.branches_per_cell, l6a_thr,
                   cfg_.l6a_params, cfg_.force_plasticity),
        RngStream(master_seed, rng_path + "/l6a/r" + std::to_string(i)));

  l1_.reserve(r);
  for (std::uint32_t i = 0; i < r; ++i) {
    ProjectorConfig pc;
    pc.in_width = l1_input_width();
    pc.out_width = cfg_.cells;
    pc.k_winners = cfg_.symbol_active;
    pc.potential_fraction = cfg_.potential_fraction;
    pc.connected_fraction = cfg_.connected_fraction;
    pc.ltp_delta = cfg_.l1_ltp;
    pc.ltd_delta = cfg_.l1_ltd;
    pc.hetero_delta = cfg_.l1_hetero;
    pc.prune_rate = cfg_.prune_rate;
    l1_.emplace_back(pc,
                     RngStream(master_seed, rng_path + "/l1/r" + std::to_string(i)));
  }

  std::uint32_t l5_thr = cfg_.l5_threshold
                             ? cfg_.l5_threshold
                             : half_up(r * cfg_.symbol_active);
  l5_.reserve(cfg_.replicas_l5);
  for (std::uint32_t i = 0; i < cfg_.replicas_l5; ++i)
    l5_.emplace_back(
        memory_cfg(symbol_width(), cfg_.branches_per_cell, l5_thr,
                   cfg_.l5_params, cfg_.force_plasticity),
        RngStream(master_seed, rng_path + "/l5/r" + std::to_string(i)));

  latched_forward_.resize(n_mod);
  for (std::uint32_t m = 0; m < n_mod; ++m)
    latched_forward_[m].sdr.width = cfg_.module_widths[m];
  l23_correct_.resize(static_cast<std::size_t>(n_mod) * r);
  replay_claimed_.assign(n_mod, 0);
}

KnowledgeState Column::l23_global_state() const {
  std::uint32_t known = 0;
  for (const SequenceMemory& m : l23_)
    known += m.state() == KnowledgeState::kKnown;
  return known >= l23_.size() / 2 + 1 ? KnowledgeState::kKnown
                                      : KnowledgeState::kUnknown;
}

KnowledgeState Column::l6a_state() const {
  std::uint32_t known = 0;
  for (const SequenceMemory& m : l6a_)
    known += m.state() == KnowledgeState::kKnown;
  return known >= l6a_.size() / 2 + 1 ? KnowledgeState::kKnown
                                      : KnowledgeState::kUnknown;
}

double Column::l6a_ema() const {
  double s = 0.0;
  for (const SequenceMemory& m : l6a_) s += m.ema();
  return s / static_cast<double>(l6a_.size());
}

KnowledgeState Column::l6b_state() const { return l6b_.state(); }

Sdr Column::l6a_predicted_support() const { return l6a_feedback().support(); }

PredictionMultiset Column::l6a_feedback() const {
  std::vector<Sdr> supports;
  supports.reserve(l6a_.size());
  for (const SequenceMemory& m : l6a_) supports.push_back(m.predicted_support());
  return multiset_merge(supports);
}

const SequenceMemory& Column::l23(std::uint32_t module,
                                  std::uint32_t replica) const {
  return l23_[lane(module, replica)];
}

const Projector& Column::l4(std::uint32_t module, std::uint32_t replica) const {
  return l4_[lane(module, replica)];
}

ColumnOutput Column::step(const ColumnStepInput& in) {
  if (in.forward.size() != n_modules())
    throw std::invalid_argument("Column::step: module count mismatch");
  for (std::uint32_t m = 0; m < n_modules(); ++m)
    if (in.forward[m].sdr.width != cfg_.module_widths[m])
      throw std::invalid_argument("Column::step: module width mismatch");
  if (in.feedback_own.width != 0 && in.feedback_own.width != symbol_width())
    throw std::invalid_argument("Column::step: feedback width mismatch");
  if (!in.feedback_modules.empty() &&
      in.feedback_modules.size() != n_modules())
    throw std::invalid_argument("Column::step: feedback module count mismatch");

  ColumnOutput out;

  // --- L4 -> L23 over the one-cycle-delayed inputs --------------------------
  if (!muted_) {
    for (std::uint32_t m = 0; m < n_modules(); ++m) {
      if (replay_claimed_[m]) continue;  // replay owned this module's slot
      const Sdr& x = latched_forward_[m].sdr;
      if (x.empty()) continue;
      PredictionMultiset adapted;
      const PredictionMultiset* fb = nullptr;
      for (std::uint32_t i = 0; i < cfg_.replicas_l23_l4; ++i) {
        Projector& proj = l4_[lane(m, i)];
        if (!in.feedback_modules.empty() &&
            in.feedback_modules[m].width != 0 &&
            !in.feedback_modules[m].empty()) {
          adapted = proj.feedback_from_input_prediction(in.feedback_modules[m]);
          fb = &adapted;
        } else {
          fb = nullptr;
        }
        Sdr w = proj.project(x, fb);
        if (in.gates.l4 && !w.empty()) proj.learn(x, w);
        if (!w.empty()) {
          SmStepResult res = l23_[lane(m, i)].step(w, in.gates.l23);
          l23_correct_[lane(m, i)] = std::move(res.correctly_predicted);
        }
      }
    }
  }
  std::fill(replay_claimed_.begin(), replay_claimed_.end(), 0);

  out.l23_global = l23_global_state();
  bool l6_learn = out.l23_global == KnowledgeState::kKnown && !muted_;

  // --- L6a/L6b consume the raw cycle-t input --------------------------------
  for (SequenceMemory& m : l6a_)
    m.step(in.forward[0].sdr, l6_learn && in.gates.l6a);

  // Supervised boundary: cut before consuming so the cross-boundary
  // transition is never learned and the offending input opens a fresh
  // sequence from the Unknown side (no double boundary).
  if (in.inject_eos) l6b_.force_boundary();
  std::vector<Sdr> parts;
  parts.reserve(n_modules());
  for (const TaggedSdr& t : in.forward) parts.push_back(t.sdr);
  Sdr concat = concat_all(parts);
  SmStepResult l6b_res = l6b_.step(concat, l6_learn && in.gates.l6b);

  out.eos = l6b_res.boundary || in.inject_eos;

  // --- symbol ----------------------------------------------------------------
  if (out.eos && !muted_) {
    std::optional<Sdr> sym = build_symbol(in.feedback_own, in.gates.l1);
    if (sym.has_value()) {
      StreamTag tag = in.forward[0].tag;
      for (const TaggedSdr& t : in.forward)
        if (!t.sdr.empty()) {
          tag = t.tag;
          break;
        }
      feed_own_symbol(*sym, in.gates.l5);
      out.symbol = TaggedSdr{std::move(*sym), tag};
    }
  }

  // --- modulation from the backward predictor --------------------------------
  modulation_m_ = modulation_value(l6a_state(), l6a_ema(), cfg_.l6a_params);
  for (SequenceMemory& m : l23_) m.set_modulation(modulation_m_);
  l6b_.set_modulation(modulation_m_);

  out.feedback_to_prev = l6a_feedback();
  out.l5_prediction = l5_forward_prediction();
  out.l6a_state = l6a_state();
  out.l6a_ema = l6a_ema();
  out.l6b_state = l6b_.state();
  out.l6b_ema = l6b_.ema();
  out.modulation = modulation_m_;

  latched_forward_ = in.forward;
  return out;
}

std::optional<Sdr> Column::build_symbol(const PredictionMultiset& feedback_own,
                                        bool learn) {
  std::vector<Sdr> parts;
  parts.reserve(cfg_.replicas_l23_l4);
  bool any_basis = false;
  std::uint32_t span = cfg_.cells * cfg_.branches_per_cell;
  for (std::uint32_t i = 0; i < cfg_.replicas_l23_l4; ++i) {
    std::vector<std::uint16_t> bits;
    for (std::uint32_t m = 0; m < n_modules(); ++m)
      for (BranchId b : l23_correct_[lane(m, i)])
        bits.push_back(static_cast<std::uint16_t>(m * span + b));
    if (bits.empty()) {
      // Degenerate boundary: fall back to the winner branches so early
      // learning still feeds the rung above.
      for (std::uint32_t m = 0; m < n_modules(); ++m)
        for (BranchId b : l23_[lane(m, i)].winner_branches())
          bits.push_back(static_cast<std::uint16_t>(m * span + b));
    }
    if (bits.empty()) {
      parts.push_back(Sdr(cfg_.cells, {}));
      continue;
    }
    any_basis = true;
    Sdr indicator(l1_input_width(), std::move(bits));
    PredictionMultiset fb_slice;
    const PredictionMultiset* fb = nullptr;
    if (feedback_own.width != 0 && !feedback_own.empty()) {
      fb_slice = feedback_own.slice(i * cfg_.cells, cfg_.cells);
      if (!fb_slice.empty()) fb = &fb_slice;
    }
    Sdr w = l1_[i].project(indicator, fb);
    if (learn && !muted_ && !w.empty()) l1_[i].learn(indicator, w);
    parts.push_back(std::move(w));
  }
  if (!any_basis) return std::nullopt;  // nothing has ever reached L23
  return concat_all(parts);
}

void Column::feed_own_symbol(const Sdr& symbol, bool learn) {
  if (symbol.width != symbol_width())
    throw std::invalid_argument("Column::feed_own_symbol: width mismatch");
  for (SequenceMemory& m : l5_) m.step(symbol, learn && !muted_);
}

void Column::deliver_replay(std::uint32_t module, const Sdr& item, bool learn) {
  if (module >= n_modules())
    throw std::invalid_argument("Column::deliver_replay: bad module");
  if (item.width != cfg_.module_widths[module])
    throw std::invalid_argument("Column::deliver_replay: width mismatch");
  if (muted_ || item.empty()) return;
  for (std::uint32_t i = 0; i < cfg_.replicas_l23_l4; ++i) {
    Projector& proj = l4_[lane(module, i)];
    Sdr w = proj.project(item);
    if (learn && !w.empty()) proj.learn(item, w);
  }
  replay_claimed_[module] = 1;  // the L4 slot is spent; L23 sees nothing
}

void Column::clear_replay_claims() {
  std::fill(replay_claimed_.begin(), replay_claimed_.end(), 0);
}

std::optional<Sdr> Column::l5_forward_prediction() const {
  const Sdr& first = l5_[0].predicted_support();
  if (first.empty()) return std::nullopt;
  for (std::size_t i = 1; i < l5_.size(); ++i)
    if (l5_[i].predicted_support() != first) return std::nullopt;
  return first;
}

void Column::prune_tick() {
  for (Projector& p : l4_) p.prune_segments();
  for (Projector& p : l1_) p.prune_segments();
}

void Column::set_l5_modulation(double m) {
  for (SequenceMemory& mem : l5_) mem.set_modulation(m);
}

std::uint64_t Column::synaptic_load() const {
  std::uint64_t n = l4_synaptic_load() + l1_synaptic_load();
  for (const SequenceMemory& m : l23_) n += m.synaptic_load();
  for (const SequenceMemory& m : l6a_) n += m.synaptic_load();
  n += l6b_.synaptic_load();
  for (const SequenceMemory& m : l5_) n += m.synaptic_load();
  return n;
}

std::uint64_t Column::l4_synaptic_load() const {
  std::uint64_t n = 0;
  for (const Projector& p : l4_) n += p.synapse_count();
  return n;
}

std::uint64_t Column::l1_synaptic_load() const {
  std::uint64_t n = 0;
  for (const Projector& p : l1_) n += p.synapse_count();
  return n;
}

std::uint64_t Column::plasticity_events() const {
  std::uint64_t n = 0;
  for (const SequenceMemory& m : l23_) n += m.plasticity_events();
  for (const SequenceMemory& m : l6a_) n += m.plasticity_events();
  n += l6b_.plasticity_events();
  for (const SequenceMemory& m : l5_) n += m.plasticity_events();
  return n;
}

void Column::save(BinWriter& w) const {
  for (const Projector& p : l4_) p.save(w);
  for (const SequenceMemory& m : l23_) m.save(w);
  for (const SequenceMemory& m : l6a_) m.save(w);
  l6b_.save(w);
  for (const Projector& p : l1_) p.save(w);
  for (const SequenceMemory& m : l5_) m.save(w);
  for (const TaggedSdr& t : latched_forward_) {
    write_sdr(w, t.sdr);
    w.u32(t.tag.stream_id);
    w.u32(t.tag.offset);
  }
  for (const auto& v : l23_correct_) {
    w.u64(v.size());
    for (BranchId b : v) w.u32(b);
  }
  for (std::uint8_t c : replay_claimed_) w.u8(c);
  w.u8(muted_ ? 1 : 0);
  w.f64(modulation_m_);
}

void Column::load(BinReader& r) {
  for (Projector& p : l4_) p.load(r);
  for (SequenceMemory& m : l23_) m.load(r);
  for (SequenceMemory& m : l6a_) m.load(r);
  l6b_.load(r);
  for (Projector& p : l1_) p.load(r);
  for (SequenceMemory& m : l5_) m.load(r);
  for (TaggedSdr& t : latched_forward_) {
    t.sdr = read_sdr(r);
    t.tag.stream_id = r.u32();
    t.tag.offset = r.u32();
  }
  for (auto& v : l23_correct_) {
    v.assign(r.u64(), 0);
    for (BranchId& b : v) b = r.u32();
  }
  for (std::uint8_t& c : replay_claimed_) c = r.u8();
  muted_ = r.u8() != 0;
  modulation_m_ = r.f64();
}

}  // namespace her
