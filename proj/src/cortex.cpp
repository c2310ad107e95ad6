#include "her/cortex.hpp"

#include <algorithm>
#include <future>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace her {

namespace {

constexpr std::uint32_t kMaxWidth = 65536;

std::uint32_t half_up(std::uint32_t n) { return std::max(1u, (n + 1) / 2); }

// Dendritic branch ladder: deeper rungs juggle more parallel contexts.
std::uint32_t ladder_branches(std::uint32_t r) {
  if (r == 0) return 4;
  if (r == 1) return 8;
  return 16;
}

std::uint32_t total_columns(const CortexConfig& cfg) {
  std::uint64_t n = 0;
  for (const RungSpec& s : cfg.rungs) n += s.width;
  return static_cast<std::uint32_t>(n);
}

CortexConfig validated(CortexConfig cfg) {
  if (cfg.rungs.empty()) throw std::invalid_argument("cortex: no rungs");
  if (cfg.input_width == 0 || cfg.input_width > kMaxWidth)
    throw std::invalid_argument("cortex: bad input width");
  if (cfg.input_active_bits == 0)
    throw std::invalid_argument("cortex: bad input sparsity");
  if (cfg.cells == 0 || cfg.symbol_active == 0)
    throw std::invalid_argument("cortex: bad cell geometry");
  if (cfg.replicas_l23_l4 == 0 || cfg.replicas_l6 == 0 || cfg.replicas_l5 == 0)
    throw std::invalid_argument("cortex: zero replicas");
  if (cfg.ca3_group_size == 0 || cfg.ca3_replicas == 0)
    throw std::invalid_argument("cortex: bad slice geometry");
  if (cfg.runaway_limit == 0)
    throw std::invalid_argument("cortex: zero runaway limit");
  if (cfg.mgn_t_rep == 0)
    throw std::invalid_argument("cortex: zero repetition threshold");
  std::uint64_t sym =
      std::uint64_t{cfg.replicas_l23_l4} * std::uint64_t{cfg.cells};
  if (sym > kMaxWidth) throw std::invalid_argument("cortex: symbol too wide");

  for (std::size_t r = 0; r < cfg.rungs.size(); ++r) {
    RungSpec& spec = cfg.rungs[r];
    if (spec.width == 0) throw std::invalid_argument("cortex: empty rung");
    if (spec.lateral_width == 0) {
      if (!spec.lateral_offsets.empty())
        throw std::invalid_argument("cortex: offsets without lateral modules");
      continue;
    }
    if (r == 0)
      throw std::invalid_argument("cortex: first rung takes no laterals");
    std::uint32_t below = cfg.rungs[r - 1].width;
    if (spec.lateral_offsets.empty())
      for (std::uint32_t k = 1; k <= spec.lateral_width; ++k)
        spec.lateral_offsets.push_back(k);
    if (spec.lateral_offsets.size() != spec.lateral_width)
      throw std::invalid_argument("cortex: offset count != lateral modules");
    for (std::uint32_t off : spec.lateral_offsets)
      if (off == 0 || off >= below)
        throw std::invalid_argument(
            "cortex: lateral offset outside the rung below");
  }
  for (std::size_t r = 1; r < cfg.rungs.size(); ++r)
    if (cfg.rungs[r].width % cfg.rungs[r - 1].width != 0)
      throw std::invalid_argument(
          "cortex: rung width must be a multiple of the rung below");

  for (std::size_t b = 0; b < cfg.rungs.size(); ++b) {
    std::uint32_t wsrc = b == 0 ? cfg.rungs[0].width : cfg.rungs[b - 1].width;
    std::uint64_t member = b == 0 ? cfg.input_width : sym;
    std::uint64_t g = std::min<std::uint64_t>(cfg.ca3_group_size, wsrc);
    if (g * member > kMaxWidth)
      throw std::invalid_argument("cortex: slice group too wide");
  }
  return cfg;
}

std::uint8_t pack_gates(const LearnGates& g) {
  std::uint8_t b = 0;
  if (g.l4) b |= 1u;
  if (g.l23) b |= 2u;
  if (g.l6a) b |= 4u;
  if (g.l6b) b |= 8u;
  if (g.l1) b |= 16u;
  if (g.l5) b |= 32u;
  if (g.prune) b |= 64u;
  return b;
}

LearnGates unpack_gates(std::uint8_t b) {
  LearnGates g;
  g.l4 = (b & 1u) != 0;
  g.l23 = (b & 2u) != 0;
  g.l6a = (b & 4u) != 0;
  g.l6b = (b & 8u) != 0;
  g.l1 = (b & 16u) != 0;
  g.l5 = (b & 32u) != 0;
  g.prune = (b & 64u) != 0;
  return g;
}

}  // namespace

Cortex::Cortex(const CortexConfig& cfg)
    : cfg_(validated(cfg)),
      ctloop_(total_columns(cfg_), cfg_.runaway_limit) {
  const std::uint32_t R = static_cast<std::uint32_t>(cfg_.rungs.size());
  std::uint32_t sym_bits = cfg_.replicas_l23_l4 * cfg_.symbol_active;
  limits_.min_bits = cfg_.match_min_bits ? cfg_.match_min_bits : sym_bits;
  limits_.max_bits = cfg_.match_max_bits ? cfg_.match_max_bits : sym_bits;
  if (limits_.min_bits > limits_.max_bits)
    throw std::invalid_argument("cortex: match window inverted");

  id_offset_.resize(R, 0);
  rungs_.resize(R);
  published_.resize(R);
  for (std::uint32_t r = 0; r < R; ++r) {
    const RungSpec& spec = cfg_.rungs[r];
    id_offset_[r] = n_columns_;
    n_columns_ += spec.width;
    ColumnConfig cc = column_config(r);
    rungs_[r].reserve(spec.width);
    published_[r].resize(spec.width);
    std::uint32_t fan = r == 0 ? 1 : spec.width / cfg_.rungs[r - 1].width;
    for (std::uint32_t j = 0; j < spec.width; ++j) {
      std::vector<std::uint32_t> sources;
      sources.reserve(1 + spec.lateral_width);
      std::uint32_t v = r == 0 ? j : j / fan;
      sources.push_back(v);
      if (r > 0) {
        std::uint32_t below = cfg_.rungs[r - 1].width;
        for (std::uint32_t off : spec.lateral_offsets)
          sources.push_back((v + off) % below);
      }
      std::string path =
          "cortex/r" + std::to_string(r) + "/c" + std::to_string(j);
      rungs_[r].emplace_back(Column(cc, cfg_.master_seed, path),
                             std::move(sources));
      Node& node = rungs_[r].back();
      node.fb_modules_next.resize(node.sources.size());
    }
  }
  for (std::uint32_t r = 1; r < R; ++r)
    for (std::uint32_t j = 0; j < rung_width(r); ++j) {
      const auto& srcs = rungs_[r][j].sources;
      for (std::uint32_t m = 0; m < srcs.size(); ++m) {
        rungs_[r - 1][srcs[m]].consumers.emplace_back(j, m);
        if (m == 0) rungs_[r - 1][srcs[m]].vertical_successors.push_back(j);
      }
    }

  boundaries_.resize(R);
  member_group_.resize(R);
  for (std::uint32_t b = 0; b < R; ++b) {
    std::uint32_t wsrc = b == 0 ? rung_width(0) : rung_width(b - 1);
    std::uint32_t member_width = b == 0 ? cfg_.input_width : symbol_width();
    std::uint32_t g = std::min(cfg_.ca3_group_size, wsrc);
    std::uint32_t shift = (b * cfg_.ca3_shift_per_rung) % wsrc;
    std::uint32_t n_groups = (wsrc + g - 1) / g;
    member_group_[b].resize(wsrc, 0);
    boundaries_[b].reserve(n_groups);
    for (std::uint32_t k = 0; k < n_groups; ++k) {
      std::vector<std::uint32_t> members;
      for (std::uint32_t i = k * g; i < std::min((k + 1) * g, wsrc); ++i)
        members.push_back((shift + i) % wsrc);
      FilteringSliceConfig sc = slice_config(b);
      sc.input_width =
          static_cast<std::uint32_t>(members.size()) * member_width;
      std::string path =
          "slice/b" + std::to_string(b) + "/g" + std::to_string(k);
      boundaries_[b].emplace_back(
          FilteringSlice(sc, cfg_.master_seed, path));
      SliceNode& sn = boundaries_[b].back();
      sn.member_width = member_width;
      sn.members = std::move(members);
      for (std::uint32_t msrc : sn.members) member_group_[b][msrc] = k;
    }
    // Consumer sets per group, and the reverse links on the columns.
    for (std::uint32_t j = 0; j < rung_width(b); ++j) {
      Node& node = rungs_[b][j];
      for (std::uint32_t m = 0; m < node.sources.size(); ++m) {
        std::uint32_t k = member_group_[b][node.sources[m]];
        SliceNode& sn = boundaries_[b][k];
        if (!std::count(node.below_slices.begin(), node.below_slices.end(), k))
          node.below_slices.push_back(k);
        if (!std::count(sn.above_columns.begin(), sn.above_columns.end(), j))
          sn.above_columns.push_back(j);
        if (m == 0) sn.vertical_above.push_back(j);
      }
    }
    if (b > 0)
      for (std::uint32_t p = 0; p < wsrc; ++p)
        rungs_[b - 1][p].above_slice = member_group_[b][p];
  }

  if (cfg_.attention) {
    std::uint32_t top = R - 1;
    ags_.reserve(rung_width(top));
    for (std::uint32_t j = 0; j < rung_width(top); ++j) {
      FilteringSliceConfig sc = slice_config(1);
      sc.input_width = symbol_width();
      sc.swr_enabled = false;  // nothing above to pre-train
      ags_.emplace_back(sc, cfg_.master_seed, "ag/c" + std::to_string(j));
    }
  }
  mgns_.assign(rung_width(0), MgnFilter(cfg_.mgn_t_rep));
  mgn_expect_.resize(rung_width(0));
}

ColumnConfig Cortex::column_config(std::uint32_t r) const {
  const RungSpec& spec = cfg_.rungs[r];
  ColumnConfig c;
  std::uint32_t mw = r == 0 ? cfg_.input_width : symbol_width();
  c.module_widths.assign(1 + spec.lateral_width, mw);
  c.cells = cfg_.cells;
  c.symbol_active = cfg_.symbol_active;
  c.replicas_l23_l4 = cfg_.replicas_l23_l4;
  c.replicas_l6 = cfg_.replicas_l6;
  c.replicas_l5 = cfg_.replicas_l5;
  c.branches_per_cell =
      spec.branches_per_cell ? spec.branches_per_cell : ladder_branches(r);
  c.input_active_bits = r == 0 ? cfg_.input_active_bits
                               : cfg_.replicas_l23_l4 * cfg_.symbol_active;
  c.l23_params = cfg_.l23_params;
  c.l6a_params = cfg_.l6a_params;
  c.l6b_params = cfg_.l6b_params;
  c.l5_params = cfg_.l5_params;
  c.l4_ltp = cfg_.l4_ltp;
  c.l4_ltd = cfg_.l4_ltd;
  c.l4_hetero = cfg_.l4_hetero;
  c.l1_ltp = cfg_.l1_ltp;
  c.l1_ltd = cfg_.l1_ltd;
  c.l1_hetero = cfg_.l1_hetero;
  c.potential_fraction = cfg_.potential_fraction;
  c.connected_fraction = cfg_.connected_fraction;
  c.prune_rate = cfg_.prune_rate;
  c.force_plasticity = cfg_.force_plasticity;
  return c;
}

FilteringSliceConfig Cortex::slice_config(std::uint32_t boundary) const {
  std::uint32_t member_active = boundary == 0
                                    ? cfg_.input_active_bits
                                    : cfg_.replicas_l23_l4 * cfg_.symbol_active;
  FilteringSliceConfig sc;
  sc.replicas = cfg_.ca3_replicas;
  sc.vote_threshold = cfg_.ca3_replicas / 2 + 1;
  sc.activation_threshold = half_up(member_active);
  sc.params = make_slice_params();
  sc.swr_min_bits = member_active;
  sc.swr_max_bits = member_active + half_up(member_active);
  sc.swr_enabled = cfg_.swr;
  sc.force_plasticity = cfg_.force_plasticity;
  return sc;
}

std::uint32_t Cortex::slice_of(std::uint32_t boundary,
                               std::uint32_t member) const {
  return member_group_[boundary][member];
}

bool Cortex::forwarding(std::uint32_t r, std::uint32_t j) const {
  if (r + 1 == n_rungs())
    return !ags_.empty() && ags_[j].attention_on();
  return ctloop_.forwarding(flat_id(r, j));
}

bool Cortex::fully_stable(std::uint32_t r, std::uint32_t j) const {
  const Node& node = rungs_[r][j];
  for (std::uint32_t g : node.below_slices)
    if (boundaries_[r][g].slice.allocated()) return false;
  if (r + 1 < n_rungs())
    return !boundaries_[r + 1][node.above_slice].slice.allocated();
  if (!ags_.empty()) return !ags_[j].slice().allocated();
  return true;
}

std::uint64_t Cortex::rung_synaptic_load(std::uint32_t r) const {
  std::uint64_t n = 0;
  for (const Node& node : rungs_[r]) n += node.col.synaptic_load();
  return n;
}

std::uint64_t Cortex::synaptic_load() const {
  std::uint64_t n = 0;
  for (std::uint32_t r = 0; r < n_rungs(); ++r) n += rung_synaptic_load(r);
  for (const auto& boundary : boundaries_)
    for (const SliceNode& sn : boundary) n += sn.slice.synaptic_load();
  for (const AttentionGenerator& a : ags_) n += a.slice().synaptic_load();
  return n;
}

void Cortex::recompute_gates(std::uint32_t r) {
  const std::uint32_t R = n_rungs();
  for (std::uint32_t j = 0; j < rung_width(r); ++j) {
    Node& node = rungs_[r][j];
    KnowledgeState own = node.col.l23_global_state();
    ColumnGateInputs gi;
    gi.l6b_learn_with_output_slice = cfg_.l6b_learn_with_output_slice;
    for (std::uint32_t g : node.below_slices) {
      const FilteringSlice& s = boundaries_[r][g].slice;
      gi.below.push_back(gating_rules(s.allocated(), s.state(), own));
    }
    if (r + 1 < R) {
      const SliceNode& up = boundaries_[r + 1][node.above_slice];
      gi.above_allocated.push_back(up.slice.allocated());
      bool covered_known = up.slice.state() == KnowledgeState::kKnown;
      for (std::uint32_t c : up.above_columns)
        covered_known = covered_known && rungs_[r + 1][c].col.l23_global_state() ==
                                             KnowledgeState::kKnown;
      gi.above_l5_enable.push_back(!up.slice.allocated() || covered_known);
    } else if (!ags_.empty()) {
      const FilteringSlice& s = ags_[j].slice();
      bool covered_known = s.state() == KnowledgeState::kKnown &&
                           own == KnowledgeState::kKnown;
      gi.above_allocated.push_back(s.allocated());
      gi.above_l5_enable.push_back(!s.allocated() || covered_known);
    }
    node.gates = combine_column_gates(gi);
  }
}

namespace {

Sdr sub_bits(const Sdr& s, std::uint32_t begin, std::uint32_t w) {
  std::vector<std::uint16_t> bits;
  for (std::uint16_t b : s.active)
    if (b >= begin && b < begin + w)
      bits.push_back(static_cast<std::uint16_t>(b - begin));
  return Sdr(w, std::move(bits));
}

}  // namespace

CycleReport Cortex::step(const std::vector<TaggedSdr>& inputs) {
  const std::uint32_t R = n_rungs();
  const std::uint32_t W0 = rung_width(0);
  if (inputs.size() != W0)
    throw std::invalid_argument("cortex: one input per first-rung column");
  for (const TaggedSdr& in : inputs)
    if (in.sdr.width != cfg_.input_width)
      throw std::invalid_argument("cortex: input width mismatch");

  CycleReport rep;
  rep.cycle = cycle_;

  // Supervision marks turn into forced boundaries at each column's next
  // step, provided its input-segmentation gate was still open.
  std::uint32_t sid = inputs[0].tag.stream_id;
  if (have_prev_stream_ && sid != prev_stream_) {
    rep.stream_changed = true;
    if (cfg_.supervised_eos)
      for (auto& rung : rungs_)
        for (Node& node : rung)
          if (node.gates.l6b) node.pending_inject = true;
  }
  prev_stream_ = sid;
  have_prev_stream_ = true;

  // Publish board: speculative symbols queued by last cycle's pass come
  // first; real emissions fill in as the rungs run (a forwarding column is
  // muted, so a slot is never claimed twice).
  for (auto& rung : published_)
    for (auto& slot : rung) slot.reset();
  for (Forward& f : forward_queue_) {
    published_[f.rung][f.column] =
        SymbolEvent{f.rung, f.column, TaggedSdr{std::move(f.symbol), f.tag},
                    true};
    rep.symbols.push_back(*published_[f.rung][f.column]);
  }
  forward_queue_.clear();

  // Sensory front door.
  std::vector<std::optional<TaggedSdr>> filtered(W0);
  for (std::uint32_t f = 0; f < W0; ++f) {
    if (!cfg_.mgn) {
      filtered[f] = inputs[f];
      continue;
    }
    bool ca3_above = boundaries_[0][member_group_[0][f]].slice.allocated();
    const PredictionMultiset* expectation =
        mgn_expect_[f].width ? &mgn_expect_[f] : nullptr;
    auto out = mgns_[f].filter(inputs[f], expectation, ca3_above);
    if (out)
      filtered[f] = std::move(out);
    else
      ++rep.mgn_suppressed;
  }

  for (std::uint32_t r = 0; r < R; ++r) {
    // Input-boundary slices consume what the layer below just published.
    std::vector<std::uint8_t> slice_fed(boundaries_[r].size(), 0);
    for (std::size_t g = 0; g < boundaries_[r].size(); ++g) {
      SliceNode& sn = boundaries_[r][g];
      std::vector<KnowledgeState> covered;
      covered.reserve(sn.vertical_above.size());
      for (std::uint32_t c : sn.vertical_above)
        covered.push_back(rungs_[r][c].col.l6a_state());
      bool want = allocate_policy(covered);
      sn.slice.set_allocated(want);
      std::vector<Sdr> parts;
      parts.reserve(sn.members.size());
      bool any = false;
      for (std::uint32_t msrc : sn.members) {
        const Sdr* s = nullptr;
        if (r == 0) {
          if (filtered[msrc]) s = &filtered[msrc]->sdr;
        } else if (published_[r - 1][msrc]) {
          s = &published_[r - 1][msrc]->symbol.sdr;
        }
        if (s != nullptr && !s->empty()) {
          parts.push_back(*s);
          any = true;
        } else {
          parts.push_back(Sdr(sn.member_width, {}));
        }
      }
      if (any) {
        slice_fed[g] = 1;
        if (sn.slice.step(concat_all(parts), want).ripple_started)
          ++rep.ripples_started;
      }
    }

    recompute_gates(r);

    // One replay slot per running ripple per cycle, delivered to every
    // projection layer reading the replayed member. Replay is a quiet-period
    // mechanism: a slice whose group spoke this cycle keeps its items for
    // the coming gap so the real stream always wins the L4 slot.
    for (std::size_t g = 0; g < boundaries_[r].size(); ++g) {
      SliceNode& sn = boundaries_[r][g];
      if (slice_fed[g] || !sn.slice.ripple_active()) continue;
      std::optional<Sdr> item = sn.slice.pop_replay_item();
      if (!item) continue;
      for (std::size_t i = 0; i < sn.members.size(); ++i) {
        Sdr part = sub_bits(*item, static_cast<std::uint32_t>(i) * sn.member_width,
                            sn.member_width);
        if (part.empty()) continue;
        std::uint32_t src = sn.members[i];
        if (r == 0) {
          Node& tgt = rungs_[0][src];
          tgt.col.deliver_replay(0, part, tgt.gates.l4);
          ++rep.replay_deliveries;
        } else {
          for (auto [c2, m] : rungs_[r - 1][src].consumers) {
            Node& tgt = rungs_[r][c2];
            tgt.col.deliver_replay(m, part, tgt.gates.l4);
            ++rep.replay_deliveries;
          }
        }
      }
    }

    // Rung barrier. Columns only read lower phases and their own latches,
    // so intra-rung order must not matter; with a pool each worker steps a
    // contiguous span and spans merge back in column order.
    const std::uint32_t W = rung_width(r);
    auto merge = [&rep](const BarrierAcc& acc) {
      rep.columns_stepped += acc.stepped;
      rep.injections += acc.injections;
      rep.eos_events.insert(rep.eos_events.end(), acc.eos.begin(),
                            acc.eos.end());
      rep.symbols.insert(rep.symbols.end(), acc.symbols.begin(),
                         acc.symbols.end());
    };
    if (threads_ <= 1 || W < 2) {
      BarrierAcc acc;
      for (std::uint32_t jj = 0; jj < W; ++jj)
        barrier_step_one(r, reverse_order_ ? W - 1 - jj : jj, filtered, acc);
      merge(acc);
    } else {
      const std::uint32_t n = std::min(threads_, W);
      std::vector<BarrierAcc> accs(n);
      std::vector<std::future<void>> futs;
      futs.reserve(n);
      for (std::uint32_t t = 0; t < n; ++t) {
        const std::uint32_t lo = W * t / n;
        const std::uint32_t hi = W * (t + 1) / n;
        futs.push_back(std::async(std::launch::async, [this, r, lo, hi,
                                                       &filtered, &accs, t] {
          for (std::uint32_t j = lo; j < hi; ++j)
            barrier_step_one(r, j, filtered, accs[t]);
        }));
      }
      for (auto& f : futs) f.get();
      for (const BarrierAcc& acc : accs) merge(acc);
    }
  }

  // Attention generators watch the top rung's output stream.
  if (!ags_.empty()) {
    std::uint32_t top = R - 1;
    for (std::uint32_t j = 0; j < rung_width(top); ++j)
      if (published_[top][j])
        ags_[j].observe(published_[top][j]->symbol.sdr);
  }

  if (!ags_.empty() && R >= 2) speculation_pass(rep);

  route_feedback();

  // Predictor modulation flows one rung down.
  for (std::uint32_t r = 0; r + 1 < R; ++r)
    for (Node& node : rungs_[r]) {
      double m = 0.0;
      for (std::uint32_t s : node.vertical_successors)
        m = std::max(m, rungs_[r + 1][s].col.modulation());
      node.col.set_l5_modulation(m);
    }

  // Fade-out of deallocated slices, retirement of silent projections, and
  // expiry of replay leases nobody consumed this cycle.
  for (auto& boundary : boundaries_)
    for (SliceNode& sn : boundary) sn.slice.decay_tick();
  for (auto& rung : rungs_)
    for (Node& node : rung) {
      node.col.clear_replay_claims();
      if (node.gates.prune) node.col.prune_tick();
    }

  ++cycle_;
  return rep;
}

void Cortex::speculation_pass(CycleReport& rep) {
  const std::uint32_t R = n_rungs();
  // Upper stages first: a stage broken here cuts eligibility below it
  // within the same pass, while rungs above are untouched.
  for (std::uint32_t r = R - 1; r-- > 0;) {
    for (std::uint32_t j = 0; j < rung_width(r); ++j) {
      Node& node = rungs_[r][j];
      std::vector<std::uint8_t> succ;
      std::uint32_t prev = kNone;
      for (auto [c2, m] : node.consumers) {
        if (c2 == prev) continue;  // consumer list is sorted by column
        prev = c2;
        bool fwd = (r + 1 == R - 1) ? ags_[c2].attention_on()
                                    : ctloop_.forwarding(flat_id(r + 1, c2));
        succ.push_back(fwd ? 1 : 0);
      }
      bool eligible = forwarding_eligibility(true, succ);
      std::vector<PredictionMultiset> exps;
      exps.reserve(node.vertical_successors.size());
      for (std::uint32_t s : node.vertical_successors) {
        const Column& sc = rungs_[r + 1][s].col;
        exps.push_back(cfg_.ctloop_match_l6b
                           ? sc.l6b().predicted().slice(0, symbol_width())
                           : sc.l6a_feedback());
      }
      CtDecision d =
          ctloop_.evaluate(flat_id(r, j), eligible,
                           node.col.l5_forward_prediction(), exps, limits_);
      if (d.mute) {
        node.col.mute(true);
        ++rep.mutes;
      }
      if (d.unmute) {
        node.col.mute(false);
        ++rep.unmutes;
      }
      if (d.forward) {
        ++rep.forwards;
        node.col.feed_own_symbol(*d.forward, false);
        forward_queue_.push_back(
            {r, j, std::move(*d.forward), node.last_input_tag});
      }
    }
  }
}

void Cortex::route_feedback() {
  const std::uint32_t R = n_rungs();
  // For every source (encoder flow or column output): merge the next-input
  // votes of its vertical readers' backward predictors, then latch the
  // result into the source's own symbol-builder tie-break, into every
  // reading projection layer's tie-break, and — for flows — into the front
  // door mask. Everything lands next cycle.
  for (std::uint32_t r = 0; r < R; ++r) {
    if (r == 0) {
      for (std::uint32_t f = 0; f < rung_width(0); ++f) {
        PredictionMultiset fmerged = rungs_[0][f].col.l6a_feedback();
        mgn_expect_[f] = fmerged;
        rungs_[0][f].fb_modules_next[0] = std::move(fmerged);
      }
      continue;
    }
    for (std::uint32_t p = 0; p < rung_width(r - 1); ++p) {
      Node& src = rungs_[r - 1][p];
      PredictionMultiset merged;
      for (std::uint32_t s : src.vertical_successors) {
        PredictionMultiset f = rungs_[r][s].col.l6a_feedback();
        if (merged.width == 0)
          merged = std::move(f);
        else
          merged.add(f);
      }
      src.fb_own_next = merged;
      for (auto [c2, m] : src.consumers)
        rungs_[r][c2].fb_modules_next[m] = merged;
    }
  }
}

void Cortex::set_threads(std::uint32_t n) {
  threads_ = n == 0 ? std::max(1u, std::thread::hardware_concurrency()) : n;
}

void Cortex::barrier_step_one(
    std::uint32_t r, std::uint32_t j,
    const std::vector<std::optional<TaggedSdr>>& filtered, BarrierAcc& acc) {
  Node& node = rungs_[r][j];
  ColumnStepInput in;
  in.forward.reserve(node.sources.size());
  bool any = false;
  for (std::uint32_t src : node.sources) {
    const TaggedSdr* ev = nullptr;
    if (r == 0) {
      if (filtered[src]) ev = &*filtered[src];
    } else if (published_[r - 1][src]) {
      ev = &published_[r - 1][src]->symbol;
    }
    if (ev != nullptr && !ev->sdr.empty()) {
      in.forward.push_back(*ev);
      any = true;
    } else {
      std::uint32_t mw = r == 0 ? cfg_.input_width : symbol_width();
      in.forward.push_back(TaggedSdr{Sdr(mw, {}), StreamTag{}});
    }
  }
  if (!any) return;  // event-driven: nothing arrived this cycle
  ++acc.stepped;
  in.gates = node.gates;
  if (node.pending_inject) {
    if (node.gates.l6b) {
      in.inject_eos = true;
      ++acc.injections;
    }
    node.pending_inject = false;
  }
  in.feedback_own = node.fb_own_next;
  in.feedback_modules = node.fb_modules_next;
  StreamTag offender;
  for (const TaggedSdr& t : in.forward)
    if (!t.sdr.empty()) {
      offender = t.tag;
      break;
    }
  node.last_input_tag = offender;
  ColumnOutput out = node.col.step(in);
  if (out.eos)
    acc.eos.push_back({r, j, offender, in.inject_eos, node.col.muted()});
  if (out.symbol) {
    published_[r][j] = SymbolEvent{r, j, *out.symbol, false};
    acc.symbols.push_back(*published_[r][j]);
  }
}

void Cortex::save(BinWriter& w) const {
  w.u64(cycle_);
  w.u8(have_prev_stream_ ? 1 : 0);
  w.u32(prev_stream_);
  for (const auto& rung : rungs_)
    for (const Node& node : rung) {
      node.col.save(w);
      w.u8(node.pending_inject ? 1 : 0);
      w.u8(pack_gates(node.gates));
      w.u32(node.last_input_tag.stream_id);
      w.u32(node.last_input_tag.offset);
      write_multiset(w, node.fb_own_next);
      for (const PredictionMultiset& f : node.fb_modules_next)
        write_multiset(w, f);
    }
  for (const auto& boundary : boundaries_)
    for (const SliceNode& sn : boundary) sn.slice.save(w);
  for (const AttentionGenerator& a : ags_) a.save(w);
  for (const MgnFilter& m : mgns_) m.save(w);
  ctloop_.save(w);
  w.u64(forward_queue_.size());
  for (const Forward& f : forward_queue_) {
    w.u32(f.rung);
    w.u32(f.column);
    write_sdr(w, f.symbol);
    w.u32(f.tag.stream_id);
    w.u32(f.tag.offset);
  }
  for (const PredictionMultiset& e : mgn_expect_) write_multiset(w, e);
}

void Cortex::load(BinReader& r) {
  cycle_ = r.u64();
  have_prev_stream_ = r.u8() != 0;
  prev_stream_ = r.u32();
  for (auto& rung : rungs_)
    for (Node& node : rung) {
      node.col.load(r);
      node.pending_inject = r.u8() != 0;
      node.gates = unpack_gates(r.u8());
      node.last_input_tag.stream_id = r.u32();
      node.last_input_tag.offset = r.u32();
      node.fb_own_next = read_multiset(r);
      for (PredictionMultiset& f : node.fb_modules_next) f = read_multiset(r);
    }
  for (auto& boundary : boundaries_)
    for (SliceNode& sn : boundary) sn.slice.load(r);
  for (AttentionGenerator& a : ags_) a.load(r);
  for (MgnFilter& m : mgns_) m.load(r);
  ctloop_.load(r);
  forward_queue_.clear();
  std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    Forward f;
    f.rung = r.u32();
    f.column = r.u32();
    if (f.rung >= n_rungs() || f.column >= rung_width(f.rung))
      throw std::invalid_argument("cortex: forward queue out of range");
    f.symbol = read_sdr(r);
    f.tag.stream_id = r.u32();
    f.tag.offset = r.u32();
    forward_queue_.push_back(std::move(f));
  }
  for (PredictionMultiset& e : mgn_expect_) e = read_multiset(r);
}

}  // namespace her
