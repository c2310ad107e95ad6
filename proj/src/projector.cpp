#include "her/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace her {

Projector::Projector(const ProjectorConfig& cfg, RngStream rng)
    : cfg_(cfg), rng_(rng) {
  if (cfg_.in_width == 0 || cfg_.out_width == 0)
    throw std::invalid_argument("Projector: zero width");
  if (cfg_.k_winners == 0 || cfg_.k_winners > cfg_.out_width)
    throw std::invalid_argument("Projector: bad k_winners");
  if (cfg_.perm_threshold <= 0.0 || cfg_.perm_threshold >= 1.0)
    throw std::invalid_argument("Projector: bad perm_threshold");
  threshold_units_ = perm_from_real(cfg_.perm_threshold);

  segments_.resize(cfg_.out_width);
  if (cfg_.receptive_field_fraction > 0.0) {
    // Contiguous fully connected window per output, wrapping around.
    std::uint32_t field = std::max<std::uint32_t>(
        1, static_cast<std::uint32_t>(
               std::llround(cfg_.receptive_field_fraction * cfg_.in_width)));
    for (std::uint32_t o = 0; o < cfg_.out_width; ++o) {
      double center = (o + 0.5) / cfg_.out_width * cfg_.in_width;
      std::uint32_t start = static_cast<std::uint32_t>(center) >= field / 2
                                ? static_cast<std::uint32_t>(center) - field / 2
                                : cfg_.in_width + static_cast<std::uint32_t>(center) -
                                      field / 2;
      auto& syn = segments_[o].synapses;
      for (std::uint32_t i = 0; i < field; ++i) {
        std::uint16_t in = static_cast<std::uint16_t>((start + i) % cfg_.in_width);
        syn.push_back({in, static_cast<Perm>(kPermOne)});
      }
      std::sort(syn.begin(), syn.end(),
                [](const ProximalSynapse& a, const ProximalSynapse& b) {
                  return a.input < b.input;
                });
      synapse_count_ += syn.size();
    }
    return;
  }

  std::uint32_t pool = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>(
             std::llround(cfg_.potential_fraction * cfg_.in_width)));
  for (std::uint32_t o = 0; o < cfg_.out_width; ++o) {
    auto& syn = segments_[o].synapses;
    for (std::uint32_t i : rng_.sample(cfg_.in_width, pool)) {
      Perm p;
      if (rng_.bernoulli(cfg_.connected_fraction)) {
        double v = cfg_.perm_threshold +
                   rng_.unit() * (1.0 - cfg_.perm_threshold);
        p = std::max<Perm>(perm_from_real(v), threshold_units_);
      } else {
        double v = rng_.unit() * cfg_.perm_threshold;
        Perm q = perm_from_real(v);
        if (q >= threshold_units_) q = static_cast<Perm>(threshold_units_ - 1);
        p = std::max<Perm>(q, 1);
      }
      syn.push_back({static_cast<std::uint16_t>(i), p});
    }
    synapse_count_ += syn.size();
  }
}

Sdr Projector::project(const Sdr& input,
                       const PredictionMultiset* feedback) const {
  if (input.width != cfg_.in_width)
    throw std::invalid_argument("Projector::project: input width mismatch");
  if (feedback && feedback->width != cfg_.out_width)
    throw std::invalid_argument("Projector::project: feedback width mismatch");

  std::vector<std::uint8_t> in_mask(cfg_.in_width, 0);
  for (std::uint16_t bit : input.active) in_mask[bit] = 1;

  struct Scored {
    std::uint32_t primary;
    std::uint32_t feedback;
    std::uint16_t index;
  };
  std::vector<Scored> candidates;
  for (std::uint32_t o = 0; o < cfg_.out_width; ++o) {
    const ProximalSegment& seg = segments_[o];
    if (seg.retired) continue;
    std::uint32_t primary = 0;
    for (const ProximalSynapse& s : seg.synapses)
      if (s.perm >= threshold_units_ && in_mask[s.input]) ++primary;
    if (primary == 0) continue;
    std::uint32_t fb =
        feedback ? feedback->count_of(static_cast<std::uint16_t>(o)) : 0;
    candidates.push_back({primary, fb, static_cast<std::uint16_t>(o)});
  }
  // Secondary key: raw multiplicity compares identically to the normalized
  // value count/(1+max) since normalization is monotone within one call, and
  // primary dominates lexicographically, preserving "modulation is always
  // weaker than one forward input".
  std::size_t k = std::min<std::size_t>(cfg_.k_winners, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + k,
                    candidates.end(), [](const Scored& a, const Scored& b) {
                      if (a.primary != b.primary) return a.primary > b.primary;
                      if (a.feedback != b.feedback)
                        return a.feedback > b.feedback;
                      return a.index < b.index;
                    });
  Sdr out;
  out.width = cfg_.out_width;
  for (std::size_t i = 0; i < k; ++i) out.active.push_back(candidates[i].index);
  std::sort(out.active.begin(), out.active.end());
  return out;
}

void Projector::learn(const Sdr& input, const Sdr& winners) {
  if (!cfg_.plastic)
    throw std::logic_error("Projector::learn on non-plastic projector");
  if (input.width != cfg_.in_width || winners.width != cfg_.out_width)
    throw std::invalid_argument("Projector::learn: width mismatch");

  std::vector<std::uint8_t> in_mask(cfg_.in_width, 0);
  for (std::uint16_t bit : input.active) in_mask[bit] = 1;
  std::uint32_t ltp = perm_delta_units(cfg_.ltp_delta);
  std::uint32_t ltd = perm_delta_units(cfg_.ltd_delta);
  std::uint32_t hetero = perm_delta_units(cfg_.hetero_delta);

  std::vector<std::uint8_t> win_mask(cfg_.out_width, 0);
  for (std::uint16_t bit : winners.active) win_mask[bit] = 1;

  for (std::uint32_t o = 0; o < cfg_.out_width; ++o) {
    ProximalSegment& seg = segments_[o];
    if (seg.retired) continue;
    std::size_t kept = 0;
    for (ProximalSynapse& s : seg.synapses) {
      std::uint32_t p = s.perm;
      if (win_mask[o]) {
        if (in_mask[s.input])
          p = std::min<std::uint32_t>(kPermOne, p + ltp);
        else
          p = p > hetero ? p - hetero : 0;
      } else if (s.perm >= threshold_units_ && in_mask[s.input]) {
        p = p > ltd ? p - ltd : 0;
      }
      s.perm = static_cast<Perm>(p);
      if (s.perm > 0) seg.synapses[kept++] = s;
    }
    synapse_count_ -= seg.synapses.size() - kept;
    seg.synapses.resize(kept);
  }
}

void Projector::prune_segments() {
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t o = 0; o < cfg_.out_width; ++o) {
    const ProximalSegment& seg = segments_[o];
    if (seg.retired) continue;
    bool silent = std::any_of(seg.synapses.begin(), seg.synapses.end(),
                              [&](const ProximalSynapse& s) {
                                return s.perm < threshold_units_;
                              });
    if (silent) candidates.push_back(o);
  }
  if (candidates.empty()) return;
  double p = cfg_.prune_rate / static_cast<double>(candidates.size());
  for (std::uint32_t o : candidates) {
    if (rng_.bernoulli(p)) {
      segments_[o].retired = true;
      synapse_count_ -= segments_[o].synapses.size();
      segments_[o].synapses.clear();
      segments_[o].synapses.shrink_to_fit();
    }
  }
}

PredictionMultiset Projector::feedback_from_input_prediction(
    const PredictionMultiset& input_space) const {
  if (input_space.width != cfg_.in_width)
    throw std::invalid_argument(
        "Projector::feedback_from_input_prediction: width mismatch");
  PredictionMultiset out;
  out.width = cfg_.out_width;
  if (input_space.empty()) return out;
  std::vector<std::uint32_t> in_counts(cfg_.in_width, 0);
  for (const auto& [bit, n] : input_space.counts) in_counts[bit] = n;
  for (std::uint32_t o = 0; o < cfg_.out_width; ++o) {
    const ProximalSegment& seg = segments_[o];
    if (seg.retired) continue;
    std::uint32_t total = 0;
    for (const ProximalSynapse& s : seg.synapses)
      if (s.perm >= threshold_units_) total += in_counts[s.input];
    if (total)
      out.counts.emplace_back(static_cast<std::uint16_t>(o), total);
  }
  return out;
}

std::uint32_t Projector::retired_count() const {
  std::uint32_t n = 0;
  for (const ProximalSegment& seg : segments_) n += seg.retired;
  return n;
}

void Projector::save(BinWriter& w) const {
  w.u64(rng_.counter());
  w.u32(static_cast<std::uint32_t>(segments_.size()));
  for (const ProximalSegment& seg : segments_) {
    w.u8(seg.retired ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(seg.synapses.size()));
    for (const ProximalSynapse& s : seg.synapses) {
      w.u16(s.input);
      w.u16(s.perm);
    }
  }
}

void Projector::load(BinReader& r) {
  rng_.set_counter(r.u64());
  std::uint32_t n = r.u32();
  if (n != segments_.size())
    throw std::runtime_error("checkpoint: projector shape mismatch");
  synapse_count_ = 0;
  for (ProximalSegment& seg : segments_) {
    seg.retired = r.u8() != 0;
    seg.synapses.assign(r.u32(), ProximalSynapse{});
    for (ProximalSynapse& s : seg.synapses) {
      s.input = r.u16();
      s.perm = static_cast<Perm>(r.u16());
    }
    synapse_count_ += seg.synapses.size();
  }
}

}  // namespace her
