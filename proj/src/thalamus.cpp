#include "her/thalamus.hpp"

#include <algorithm>
#include <stdexcept>

namespace her {

std::optional<Sdr> ctloop_match(
    const Sdr& l5_pred, std::span<const PredictionMultiset> expectations,
    const MatchLimits& limits) {
  if (limits.min_bits > limits.max_bits)
    throw std::invalid_argument("ctloop_match: min_bits > max_bits");
  if (expectations.empty()) return std::nullopt;
  std::vector<std::uint16_t> bits = l5_pred.active;
  for (const PredictionMultiset& e : expectations) {
    if (e.width != l5_pred.width)
      throw std::invalid_argument("ctloop_match: width mismatch");
    if (e.empty()) return std::nullopt;
    bits.erase(std::remove_if(bits.begin(), bits.end(),
                              [&](std::uint16_t b) { return e.count_of(b) == 0; }),
               bits.end());
    if (bits.empty()) return std::nullopt;
  }
  if (bits.size() < limits.min_bits || bits.size() > limits.max_bits)
    return std::nullopt;
  return Sdr(l5_pred.width, std::move(bits));
}

bool forwarding_eligibility(bool attention_on,
                            std::span<const std::uint8_t> successors_forwarding) {
  if (!attention_on) return false;
  return std::all_of(successors_forwarding.begin(),
                     successors_forwarding.end(),
                     [](std::uint8_t f) { return f != 0; });
}

AttentionGenerator::AttentionGenerator(const FilteringSliceConfig& cfg,
                                       std::uint64_t master_seed,
                                       const std::string& rng_path)
    : slice_(cfg, master_seed, rng_path) {
  slice_.set_allocated(true);  // attention must be earned
}

bool AttentionGenerator::observe(const Sdr& symbol) {
  slice_.set_allocated(true);
  slice_.step(symbol, /*any_successor_unknown=*/false);
  slice_.set_allocated(slice_.state() == KnowledgeState::kUnknown);
  return attention_on();
}

CtLoop::CtLoop(std::uint32_t n_columns, std::uint32_t runaway_limit)
    : runaway_limit_(runaway_limit),
      forwarding_(n_columns, 0),
      last_(n_columns),
      identical_(n_columns, 0),
      forwards_(n_columns, 0) {
  if (runaway_limit_ == 0)
    throw std::invalid_argument("CtLoop: runaway limit must be positive");
}

CtDecision CtLoop::evaluate(std::uint32_t column, bool eligible,
                            const std::optional<Sdr>& l5_prediction,
                            std::span<const PredictionMultiset> expectations,
                            const MatchLimits& limits) {
  CtDecision d;
  auto stop = [&] {
    if (forwarding_[column]) {
      forwarding_[column] = 0;
      identical_[column] = 0;
      last_[column] = Sdr();
      d.unmute = true;
    }
    return d;
  };

  if (!eligible || !l5_prediction.has_value()) return stop();
  std::optional<Sdr> match = ctloop_match(*l5_prediction, expectations, limits);
  if (!match.has_value()) return stop();

  if (forwarding_[column] && *match == last_[column]) {
    if (identical_[column] >= runaway_limit_) return stop();
    ++identical_[column];
  } else {
    identical_[column] = 1;
  }
  if (!forwarding_[column]) {
    forwarding_[column] = 1;
    d.mute = true;
  }
  last_[column] = *match;
  ++forwards_[column];
  d.forward = std::move(match);
  return d;
}

std::uint64_t CtLoop::total_forwards() const {
  std::uint64_t n = 0;
  for (std::uint64_t f : forwards_) n += f;
  return n;
}

void CtLoop::save(BinWriter& w) const {
  w.u32(runaway_limit_);
  w.u64(forwarding_.size());
  for (std::size_t i = 0; i < forwarding_.size(); ++i) {
    w.u8(forwarding_[i]);
    write_sdr(w, last_[i]);
    w.u32(identical_[i]);
    w.u64(forwards_[i]);
  }
}

void CtLoop::load(BinReader& r) {
  runaway_limit_ = r.u32();
  std::uint64_t n = r.u64();
  if (n != forwarding_.size())
    throw std::invalid_argument("CtLoop::load: column count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    forwarding_[i] = r.u8();
    last_[i] = read_sdr(r);
    identical_[i] = r.u32();
    forwards_[i] = r.u64();
  }
}

std::optional<TaggedSdr> MgnFilter::filter(const TaggedSdr& flow,
                                           const PredictionMultiset* expectation,
                                           bool ca3_above_present) {
  if (flow.sdr.empty()) return flow;  // no event: nothing to adapt
  if (flow.sdr == last_) {
    ++repeats_;
  } else {
    last_ = flow.sdr;
    repeats_ = 0;
  }
  if (repeats_ >= t_rep_) {
    ++suppressed_;
    return std::nullopt;
  }
  ++passed_;
  if (!ca3_above_present && expectation != nullptr && !expectation->empty()) {
    if (expectation->width != flow.sdr.width)
      throw std::invalid_argument("MgnFilter: expectation width mismatch");
    std::vector<std::uint16_t> kept;
    for (std::uint16_t b : flow.sdr.active)
      if (expectation->count_of(b) > 0) kept.push_back(b);
    return TaggedSdr{Sdr(flow.sdr.width, std::move(kept)), flow.tag};
  }
  return flow;
}

void MgnFilter::save(BinWriter& w) const {
  w.u32(t_rep_);
  write_sdr(w, last_);
  w.u32(repeats_);
  w.u64(suppressed_);
  w.u64(passed_);
}

void MgnFilter::load(BinReader& r) {
  t_rep_ = r.u32();
  last_ = read_sdr(r);
  repeats_ = r.u32();
  suppressed_ = r.u64();
  passed_ = r.u64();
}

}  // namespace her
