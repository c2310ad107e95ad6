#include "her/periphery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace her {

double mocr_update(MocrState& state, double act_now, const MocrParams& p) {
  if (act_now < 0) throw std::invalid_argument("mocr_update: negative activity");
  state.act_ema = act_now * p.alpha_act + (1.0 - p.alpha_act) * state.act_ema;
  if (state.act_ema > p.act_tup) {
    state.thr *= 1.0 + ((state.act_ema - p.act_tup) / p.act_tup) * p.k_step;
  } else if (state.act_ema < p.act_tdown) {
    state.thr *= 1.0 - ((p.act_tdown - state.act_ema) / p.act_tdown) * p.k_step;
  }
  return state.thr;
}

DrCode make_dr_code(std::uint32_t width, std::uint32_t ones_bits,
                    std::uint32_t zeros_bits, RngStream& rng) {
  if (ones_bits == 0 || ones_bits > width || zeros_bits == 0 ||
      zeros_bits >= ones_bits)
    throw std::invalid_argument("make_dr_code: rail sizes");
  std::vector<std::uint32_t> ones = rng.sample(width, ones_bits);
  std::vector<std::uint32_t> pick = rng.sample(ones_bits, zeros_bits);
  std::vector<std::uint16_t> one_bits, zero_bits;
  for (std::uint32_t b : ones) one_bits.push_back(static_cast<std::uint16_t>(b));
  for (std::uint32_t i : pick)
    zero_bits.push_back(static_cast<std::uint16_t>(ones[i]));
  return DrCode{Sdr(width, std::move(one_bits)), Sdr(width, std::move(zero_bits))};
}

AuditoryEncoder::AuditoryEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg_.bands == 0) throw std::invalid_argument("encoder: no bands");
  if (cfg_.initial_thr <= 0) throw std::invalid_argument("encoder: thr <= 0");
  if (cfg_.mocr.act_tdown >= cfg_.mocr.act_tup)
    throw std::invalid_argument("encoder: activity band inverted");
  codes_.reserve(cfg_.bands);
  states_.resize(cfg_.bands);
  for (std::uint32_t b = 0; b < cfg_.bands; ++b) {
    RngStream rng(cfg_.master_seed, "dr/band" + std::to_string(b));
    codes_.push_back(
        make_dr_code(cfg_.code_width, cfg_.ones_bits, cfg_.zeros_bits, rng));
    states_[b].thr = cfg_.initial_thr;
  }
}

std::vector<Sdr> AuditoryEncoder::encode(const std::vector<double>& energies) {
  if (energies.size() != cfg_.bands)
    throw std::invalid_argument("encoder: band count mismatch");
  std::vector<Sdr> out;
  out.reserve(cfg_.bands);
  for (std::uint32_t b = 0; b < cfg_.bands; ++b) {
    const DrCode& code = codes_[b];
    const Sdr& word =
        energies[b] >= states_[b].thr ? code.ones_set : code.zeros_set;
    out.push_back(word);
    mocr_update(states_[b], static_cast<double>(word.count()), cfg_.mocr);
  }
  return out;
}

void AuditoryEncoder::save(BinWriter& w) const {
  for (const MocrState& s : states_) {
    w.f64(s.thr);
    w.f64(s.act_ema);
  }
}

void AuditoryEncoder::load(BinReader& r) {
  for (MocrState& s : states_) {
    s.thr = r.f64();
    s.act_ema = r.f64();
  }
}

DcnProjector::DcnProjector(const DcnConfig& cfg, std::uint64_t master_seed,
                           const std::string& rng_path)
    : cfg_(cfg) {
  if (cfg_.input_width == 0 || cfg_.output_width == 0)
    throw std::invalid_argument("dcn: zero width");
  if (cfg_.receptive_fraction <= 0 || cfg_.receptive_fraction > 1 ||
      cfg_.sparsity <= 0 || cfg_.sparsity > 1)
    throw std::invalid_argument("dcn: fraction out of range");
  k_ = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>(
             std::lround(cfg_.sparsity * cfg_.output_width)));
  std::uint32_t field = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>(
             std::lround(cfg_.receptive_fraction * cfg_.input_width)));
  RngStream rng(master_seed, rng_path);
  fields_.reserve(cfg_.output_width);
  for (std::uint32_t o = 0; o < cfg_.output_width; ++o)
    fields_.push_back(rng.sample(cfg_.input_width, field));
}

Sdr DcnProjector::project(const Sdr& input) const {
  if (input.width != cfg_.input_width)
    throw std::invalid_argument("dcn: input width mismatch");
  if (input.empty()) return Sdr(cfg_.output_width, {});
  // Overlap of each fixed field with the input; ties resolve to the lower
  // output index so the projection is a pure function.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> scored;  // (-ov, idx)
  scored.reserve(cfg_.output_width);
  for (std::uint32_t o = 0; o < cfg_.output_width; ++o) {
    std::uint32_t ov = 0;
    const auto& field = fields_[o];
    auto it = field.begin();
    for (std::uint16_t b : input.active) {
      while (it != field.end() && *it < b) ++it;
      if (it == field.end()) break;
      if (*it == b) ++ov;
    }
    scored.emplace_back(~ov, o);
  }
  std::nth_element(scored.begin(), scored.begin() + (k_ - 1), scored.end());
  std::vector<std::uint16_t> bits;
  bits.reserve(k_);
  for (std::uint32_t i = 0; i < k_; ++i)
    bits.push_back(static_cast<std::uint16_t>(scored[i].second));
  return Sdr(cfg_.output_width, std::move(bits));
}

SymbolAlphabet::SymbolAlphabet(const AlphabetConfig& cfg,
                               std::uint64_t master_seed,
                               const std::string& rng_path) {
  if (cfg.width == 0 || cfg.active_bits == 0 || cfg.active_bits > cfg.width)
    throw std::invalid_argument("alphabet: bad geometry");
  if (cfg.symbols == 0) throw std::invalid_argument("alphabet: no symbols");
  RngStream rng(master_seed, rng_path);
  codes_.reserve(cfg.symbols);
  for (std::uint32_t i = 0; i < cfg.symbols; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Sdr cand = random_sdr(cfg.width, cfg.active_bits, rng);
      bool ok = true;
      for (const Sdr& prev : codes_)
        if (overlap(cand, prev) > cfg.max_overlap) {
          ok = false;
          break;
        }
      if (ok) {
        codes_.push_back(std::move(cand));
        placed = true;
        break;
      }
    }
    if (!placed)
      throw std::invalid_argument(
          "alphabet: overlap cap unreachable at this size");
  }
}

const Sdr& SymbolAlphabet::at(std::uint32_t id) const {
  if (id >= codes_.size())
    throw std::invalid_argument("alphabet: unknown symbol id");
  return codes_[id];
}

SyntheticStream::SyntheticStream(const StreamSpec& spec)
    : spec_(spec), rng_(spec.master_seed, "stream/order") {
  if (spec_.sentences.empty())
    throw std::invalid_argument("stream: no sentences");
  if (spec_.flows == 0) throw std::invalid_argument("stream: no flows");
  for (const auto& s : spec_.sentences) {
    if (s.empty()) throw std::invalid_argument("stream: empty sentence");
    for (std::uint32_t id : s)
      if (id >= spec_.alphabet.symbols)
        throw std::invalid_argument("stream: unknown symbol id");
    period_items_ += s.size();
  }
  alphabets_.reserve(spec_.flows);
  for (std::uint32_t f = 0; f < spec_.flows; ++f)
    alphabets_.emplace_back(spec_.alphabet, spec_.master_seed,
                            "stream/alphabet/f" + std::to_string(f));
  order_.resize(spec_.sentences.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  reshuffle();
}

void SyntheticStream::reshuffle() {
  if (spec_.order != OrderPolicy::kShuffle) return;
  // Fisher-Yates on the stream's own rng so resume replays the same order.
  for (std::uint32_t i = static_cast<std::uint32_t>(order_.size()); i > 1; --i)
    std::swap(order_[i - 1], order_[rng_.below(i)]);
}

bool SyntheticStream::exhausted() const {
  return spec_.repeats != 0 && pass_ >= spec_.repeats;
}

std::vector<TaggedSdr> SyntheticStream::next() {
  if (exhausted()) throw std::logic_error("stream: exhausted");
  std::uint32_t sid = order_[cursor_];
  const std::vector<std::uint32_t>& sent = spec_.sentences[sid];
  StreamTag tag{sid, offset_};
  std::vector<TaggedSdr> out;
  out.reserve(spec_.flows);
  for (std::uint32_t f = 0; f < spec_.flows; ++f)
    out.push_back(TaggedSdr{alphabets_[f].at(sent[offset_]), tag});
  ++emitted_;
  if (++offset_ == sent.size()) {
    offset_ = 0;
    if (++cursor_ == order_.size()) {
      cursor_ = 0;
      ++pass_;
      reshuffle();
    }
  }
  return out;
}

void SyntheticStream::save(BinWriter& w) const {
  w.u64(rng_.counter());
  w.u64(emitted_);
  w.u64(pass_);
  w.u32(cursor_);
  w.u32(offset_);
  for (std::uint32_t s : order_) w.u32(s);
}

void SyntheticStream::load(BinReader& r) {
  rng_.set_counter(r.u64());
  emitted_ = r.u64();
  pass_ = r.u64();
  cursor_ = r.u32();
  offset_ = r.u32();
  for (std::uint32_t& s : order_) {
    s = r.u32();
    if (s >= spec_.sentences.size())
      throw std::invalid_argument("stream: order out of range");
  }
  if (cursor_ >= order_.size() ||
      offset_ >= spec_.sentences[order_[cursor_]].size())
    throw std::invalid_argument("stream: cursor out of range");
}

}  // namespace her
