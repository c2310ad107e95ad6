#include "her/sequence_memory.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace her {

namespace {
constexpr Perm kNewSynapsePerm = 33423;  // 0.51: born connected
constexpr Perm kConnected = 32768;       // >= 0.5

bool connected(Perm p) { return p >= kConnected; }
}  // namespace

SequenceMemory::SequenceMemory(const SequenceMemoryConfig& cfg, RngStream rng)
    : cfg_(cfg), rng_(rng) {
  if (cfg_.width == 0 || cfg_.width > (1u << 16))
    throw std::invalid_argument("SequenceMemory: bad width");
  if (cfg_.branches_per_cell == 0 || cfg_.branches_per_cell > 64)
    throw std::invalid_argument("SequenceMemory: bad branches_per_cell");
  if (cfg_.activation_threshold == 0)
    throw std::invalid_argument("SequenceMemory: activation_threshold == 0");
  if (cfg_.max_synapses_per_segment == 0)
    throw std::invalid_argument("SequenceMemory: max_synapses == 0");
  branches_.resize(branch_count());
  active_mask_.assign(branch_count(), 0);
  predictive_.assign(branch_count(), 0);
  predicted_.width = cfg_.width;
  predicted_support_.width = cfg_.width;
}

void SequenceMemory::scan_predictive(
    const std::vector<std::uint8_t>& active_mask,
    std::vector<std::uint8_t>& flags_out) const {
  flags_out.assign(branch_count(), 0);
  for (std::uint32_t b = 0; b < branch_count(); ++b) {
    for (const DistalSegment& seg : branches_[b].segments) {
      std::uint32_t hits = 0;
      for (const DistalSynapse& syn : seg.synapses) {
        if (connected(syn.perm) && active_mask[syn.presyn]) {
          if (++hits >= cfg_.activation_threshold) break;
        }
      }
      if (hits >= cfg_.activation_threshold) {
        flags_out[b] = 1;
        break;
      }
    }
  }
}

void SequenceMemory::rebuild_prediction() {
  scan_predictive(active_mask_, predictive_);
  predicted_.counts.clear();
  std::uint32_t base = 0;
  for (std::uint32_t c = 0; c < cfg_.width; ++c, base += cfg_.branches_per_cell) {
    std::uint32_t n = 0;
    for (std::uint32_t k = 0; k < cfg_.branches_per_cell; ++k)
      n += predictive_[base + k];
    if (n) predicted_.counts.emplace_back(static_cast<std::uint16_t>(c), n);
  }
  predicted_support_ = predicted_.support();
}

void SequenceMemory::adapt_segment(DistalSegment& seg, std::uint32_t ltp_units,
                                   std::uint32_t ltd_units) {
  // The previous step's active mask is still in active_mask_ when this runs.
  std::size_t kept = 0;
  for (DistalSynapse& syn : seg.synapses) {
    std::uint32_t p = syn.perm;
    if (active_mask_[syn.presyn]) {
      p = std::min<std::uint32_t>(kPermOne, p + ltp_units);
    } else {
      p = p > ltd_units ? p - ltd_units : 0;
    }
    syn.perm = static_cast<Perm>(p);
    if (syn.perm > 0) seg.synapses[kept++] = syn;
  }
  synapse_count_ -= seg.synapses.size() - kept;
  seg.synapses.resize(kept);
}

void SequenceMemory::grow_synapses(BranchId owner, DistalSegment& seg) {
  if (seg.synapses.size() >= cfg_.max_synapses_per_segment) return;
  std::vector<BranchId> candidates;
  candidates.reserve(active_.size());
  for (BranchId b : active_) {
    if (b == owner) continue;
    bool present = std::any_of(
        seg.synapses.begin(), seg.synapses.end(),
        [&](const DistalSynapse& s) { return s.presyn == b; });
    if (!present) candidates.push_back(b);
  }
  std::uint32_t room = cfg_.max_synapses_per_segment -
                       static_cast<std::uint32_t>(seg.synapses.size());
  if (candidates.size() > room) {
    std::vector<BranchId> picked;
    picked.reserve(room);
    for (std::uint32_t i : rng_.sample(
             static_cast<std::uint32_t>(candidates.size()), room))
      picked.push_back(candidates[i]);
    candidates = std::move(picked);
  }
  for (BranchId b : candidates)
    seg.synapses.push_back({b, kNewSynapsePerm});
  synapse_count_ += candidates.size();
  std::sort(seg.synapses.begin(), seg.synapses.end(),
            [](const DistalSynapse& a, const DistalSynapse& b) {
              return a.presyn < b.presyn;
            });
}

void SequenceMemory::apply_plasticity(
    const std::vector<BranchId>& burst_winners) {
  // active_mask_ still holds the previous step's active set here; winners_
  // holds this step's correctly-predicted branches.
  double d = effective_ltp_delta(cfg_.params.ltp_delta * cfg_.rate_scale, m_);
  std::uint32_t ltp_units = perm_delta_units(d);
  std::uint32_t ltd_units = perm_delta_units(d * cfg_.params.ltd_ratio);

  // Reinforce the segments that produced each correct prediction.
  for (BranchId b : winners_) {
    bool bursting = std::binary_search(burst_winners.begin(),
                                       burst_winners.end(), b);
    if (bursting) continue;
    for (DistalSegment& seg : branches_[b].segments) {
      std::uint32_t hits = 0;
      for (const DistalSynapse& syn : seg.synapses)
        if (connected(syn.perm) && active_mask_[syn.presyn]) ++hits;
      if (hits >= cfg_.activation_threshold)
        adapt_segment(seg, ltp_units, ltd_units);
    }
    auto& segs = branches_[b].segments;
    segs.erase(std::remove_if(segs.begin(), segs.end(),
                              [](const DistalSegment& s) {
                                return s.synapses.empty();
                              }),
               segs.end());
  }

  // Bursting winners grow context toward the previous active set.
  if (active_.empty()) return;
  std::uint32_t match_min = std::max<std::uint32_t>(
      1, std::min<std::uint32_t>(cfg_.activation_threshold,
                                 static_cast<std::uint32_t>(active_.size())));
  for (BranchId w : burst_winners) {
    DistalSegment* best = nullptr;
    std::uint32_t best_overlap = 0;
    for (DistalSegment& seg : branches_[w].segments) {
      std::uint32_t ov = 0;
      for (const DistalSynapse& syn : seg.synapses)
        if (active_mask_[syn.presyn]) ++ov;
      if (ov > best_overlap) {
        best_overlap = ov;
        best = &seg;
      }
    }
    if (best != nullptr && best_overlap >= match_min) {
      adapt_segment(*best, ltp_units, ltd_units);
      grow_synapses(w, *best);
      if (best->synapses.empty()) {
        auto& segs = branches_[w].segments;
        segs.erase(std::remove_if(segs.begin(), segs.end(),
                                  [](const DistalSegment& s) {
                                    return s.synapses.empty();
                                  }),
                   segs.end());
      }
    } else {
      DistalSegment seg;
      grow_synapses(w, seg);
      if (!seg.synapses.empty())
        branches_[w].segments.push_back(std::move(seg));
    }
  }
}

void SequenceMemory::reset_to_burst(const Sdr& input) {
  active_.clear();
  std::fill(active_mask_.begin(), active_mask_.end(), 0);
  for (std::uint16_t c : input.active) {
    BranchId base = static_cast<BranchId>(c) * cfg_.branches_per_cell;
    for (std::uint32_t k = 0; k < cfg_.branches_per_cell; ++k) {
      active_.push_back(base + k);
      active_mask_[base + k] = 1;
    }
  }
  predictive_.assign(branch_count(), 0);
  predicted_.counts.clear();
  predicted_support_.active.clear();
}

double anomaly_score(const Sdr& active, const Sdr& predicted_prev) {
  if (active.empty()) return 0.0;
  return 1.0 - static_cast<double>(overlap(active, predicted_prev)) /
                   static_cast<double>(active.count());
}

SmStepResult SequenceMemory::step(const Sdr& input, bool learn_enabled) {
  if (input.width != cfg_.width)
    throw std::invalid_argument("SequenceMemory::step: width mismatch");

  SmStepResult out;
  if (input.empty()) {
    // Event-driven skip: an absent input leaves the tracked context intact.
    out.ema = ema_;
    out.state = state_;
    out.predicted_next = predicted_;
    return out;
  }

  // --- activation against the standing prediction ---------------------------
  std::vector<BranchId> new_active;
  std::vector<BranchId> burst_winners;
  winners_.clear();
  out.correctly_predicted.clear();
  for (std::uint16_t c : input.active) {
    BranchId base = static_cast<BranchId>(c) * cfg_.branches_per_cell;
    bool any = false;
    for (std::uint32_t k = 0; k < cfg_.branches_per_cell; ++k) {
      if (predictive_[base + k]) {
        new_active.push_back(base + k);
        out.correctly_predicted.push_back(base + k);
        any = true;
      }
    }
    if (!any) {
      BranchId winner = base;
      std::size_t fewest = branches_[base].segments.size();
      for (std::uint32_t k = 0; k < cfg_.branches_per_cell; ++k) {
        new_active.push_back(base + k);
        std::size_t n = branches_[base + k].segments.size();
        if (n < fewest) {
          fewest = n;
          winner = base + k;
        }
      }
      burst_winners.push_back(winner);
    }
  }
  winners_ = out.correctly_predicted;
  winners_.insert(winners_.end(), burst_winners.begin(), burst_winners.end());
  std::sort(winners_.begin(), winners_.end());

  // --- anomaly, familiarity, boundary ---------------------------------------
  out.anomaly = anomaly_score(input, predicted_support_);
  ema_ = ema_update(ema_, out.anomaly, cfg_.params.alpha);
  HysteresisResult h = hysteresis_step(state_, ema_, cfg_.params);
  state_ = h.state;
  out.boundary = h.boundary;
  out.ema = ema_;
  out.state = state_;

  // --- plasticity (one gate draw per step) ----------------------------------
  bool cut = out.boundary && cfg_.reset_on_boundary;
  if (learn_enabled && !cut) {
    double p = cfg_.force_plasticity
                   ? 1.0
                   : learning_probability(state_, ema_, cfg_.params, m_);
    if (cfg_.force_plasticity || rng_.bernoulli(p)) {
      ++plasticity_events_;
      apply_plasticity(burst_winners);
    }
  }

  // --- roll the context forward ----------------------------------------------
  if (cut) {
    // The boundary input opens the next sequence as a clean burst; nothing
    // from before the cut can be chained onto or learned against.
    reset_to_burst(input);
  } else {
    active_ = std::move(new_active);
    std::fill(active_mask_.begin(), active_mask_.end(), 0);
    for (BranchId b : active_) active_mask_[b] = 1;
    rebuild_prediction();
  }
  out.predicted_next = predicted_;
  return out;
}

void SequenceMemory::force_boundary() {
  state_ = KnowledgeState::kUnknown;
  active_.clear();
  std::fill(active_mask_.begin(), active_mask_.end(), 0);
  predictive_.assign(branch_count(), 0);
  predicted_.counts.clear();
  predicted_support_.active.clear();
  winners_.clear();
}

SequenceMemory::RecallCursor::RecallCursor(const SequenceMemory& sm,
                                           bool from_live_state)
    : sm_(&sm), predictive_(sm.branch_count(), 0) {
  if (from_live_state) predictive_ = sm.predictive_;
}

Sdr SequenceMemory::RecallCursor::feed(const Sdr& input) {
  if (input.width != sm_->cfg_.width)
    throw std::invalid_argument("RecallCursor::feed: width mismatch");
  std::vector<std::uint8_t> mask(sm_->branch_count(), 0);
  for (std::uint16_t c : input.active) {
    BranchId base = static_cast<BranchId>(c) * sm_->cfg_.branches_per_cell;
    bool any = false;
    for (std::uint32_t k = 0; k < sm_->cfg_.branches_per_cell; ++k)
      if (predictive_[base + k]) {
        mask[base + k] = 1;
        any = true;
      }
    if (!any)
      for (std::uint32_t k = 0; k < sm_->cfg_.branches_per_cell; ++k)
        mask[base + k] = 1;
  }
  sm_->scan_predictive(mask, predictive_);
  return support();
}

Sdr SequenceMemory::RecallCursor::support() const {
  Sdr support;
  support.width = sm_->cfg_.width;
  std::uint32_t base = 0;
  for (std::uint32_t c = 0; c < sm_->cfg_.width;
       ++c, base += sm_->cfg_.branches_per_cell) {
    for (std::uint32_t k = 0; k < sm_->cfg_.branches_per_cell; ++k) {
      if (predictive_[base + k]) {
        support.active.push_back(static_cast<std::uint16_t>(c));
        break;
      }
    }
  }
  return support;
}

std::vector<Sdr> SequenceMemory::recall_burst(const Sdr& seed,
                                              std::uint32_t min_support,
                                              std::uint32_t max_support,
                                              int max_len) const {
  std::vector<Sdr> out;
  RecallCursor cursor(*this);
  Sdr cur = seed;
  for (int i = 0; i < max_len; ++i) {
    Sdr next = cursor.feed(cur);
    if (next == cur) break;
    if (next.count() < min_support) break;
    if (next.count() > max_support) break;
    out.push_back(next);
    cur = std::move(next);
  }
  return out;
}

std::uint64_t SequenceMemory::segment_count() const {
  std::uint64_t n = 0;
  for (const Branch& b : branches_) n += b.segments.size();
  return n;
}

std::uint64_t SequenceMemory::decay_all(std::uint32_t units) {
  if (units == 0) return synapse_count_;
  for (Branch& br : branches_) {
    for (DistalSegment& seg : br.segments) {
      std::size_t kept = 0;
      for (DistalSynapse& syn : seg.synapses) {
        syn.perm = syn.perm > units ? static_cast<Perm>(syn.perm - units) : 0;
        if (syn.perm > 0) seg.synapses[kept++] = syn;
      }
      synapse_count_ -= seg.synapses.size() - kept;
      seg.synapses.resize(kept);
    }
    br.segments.erase(std::remove_if(br.segments.begin(), br.segments.end(),
                                     [](const DistalSegment& s) {
                                       return s.synapses.empty();
                                     }),
                      br.segments.end());
  }
  return synapse_count_;
}

void SequenceMemory::save(BinWriter& w) const {
  w.u8(static_cast<std::uint8_t>(state_));
  w.f64(ema_);
  w.f64(m_);
  w.u64(plasticity_events_);
  w.u64(rng_.counter());
  w.u32(branch_count());
  for (const Branch& br : branches_) {
    w.u32(static_cast<std::uint32_t>(br.segments.size()));
    for (const DistalSegment& seg : br.segments) {
      w.u32(static_cast<std::uint32_t>(seg.synapses.size()));
      for (const DistalSynapse& syn : seg.synapses) {
        w.u32(syn.presyn);
        w.u16(syn.perm);
      }
    }
  }
  w.u64(active_.size());
  for (BranchId b : active_) w.u32(b);
  w.vec16(predicted_support_.active);
  w.u64(predicted_.counts.size());
  for (const auto& [bit, n] : predicted_.counts) {
    w.u16(bit);
    w.u32(n);
  }
  w.u64(winners_.size());
  for (BranchId b : winners_) w.u32(b);
  // predictive flags as the set branch list
  std::uint64_t n_pred = 0;
  for (std::uint8_t f : predictive_) n_pred += f;
  w.u64(n_pred);
  for (std::uint32_t b = 0; b < branch_count(); ++b)
    if (predictive_[b]) w.u32(b);
}

void SequenceMemory::load(BinReader& r) {
  state_ = static_cast<KnowledgeState>(r.u8());
  ema_ = r.f64();
  m_ = r.f64();
  plasticity_events_ = r.u64();
  rng_.set_counter(r.u64());
  std::uint32_t n_branches = r.u32();
  if (n_branches != branch_count())
    throw std::runtime_error("checkpoint: sequence memory shape mismatch");
  synapse_count_ = 0;
  for (Branch& br : branches_) {
    br.segments.assign(r.u32(), DistalSegment{});
    for (DistalSegment& seg : br.segments) {
      seg.synapses.assign(r.u32(), DistalSynapse{});
      for (DistalSynapse& syn : seg.synapses) {
        syn.presyn = r.u32();
        syn.perm = static_cast<Perm>(r.u16());
      }
      synapse_count_ += seg.synapses.size();
    }
  }
  active_.assign(r.u64(), 0);
  for (BranchId& b : active_) b = r.u32();
  std::fill(active_mask_.begin(), active_mask_.end(), 0);
  for (BranchId b : active_) active_mask_[b] = 1;
  predicted_support_.active = r.vec16<std::uint16_t>();
  predicted_.counts.assign(r.u64(), {});
  for (auto& [bit, n] : predicted_.counts) {
    bit = r.u16();
    n = r.u32();
  }
  winners_.assign(r.u64(), 0);
  for (BranchId& b : winners_) b = r.u32();
  predictive_.assign(branch_count(), 0);
  std::uint64_t n_pred = r.u64();
  for (std::uint64_t i = 0; i < n_pred; ++i) predictive_[r.u32()] = 1;
}

}  // namespace her
