#include "her/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "her/cortex.hpp"

namespace her {

EosLedger::EosLedger(std::uint32_t n_columns, std::uint64_t period_items)
    : n_columns_(n_columns), period_items_(period_items) {
  if (n_columns == 0) throw std::invalid_argument("ledger needs columns");
  if (period_items == 0) throw std::invalid_argument("period must be nonzero");
  entries_.resize(n_columns);
}

void EosLedger::record(std::uint32_t column, std::uint64_t cycle,
                       StreamTag tag, bool speculative) {
  if (column >= n_columns_) throw std::out_of_range("ledger column");
  entries_[column].push_back(Entry{cycle, tag, speculative});
  cycles_ = std::max(cycles_, cycle + 1);
}

void EosLedger::set_cycles(std::uint64_t cycles) {
  cycles_ = std::max(cycles_, cycles);
}

std::uint64_t EosLedger::size() const {
  std::uint64_t n = 0;
  for (const auto& col : entries_) n += col.size();
  return n;
}

void EosLedger::save(BinWriter& w) const {
  w.u32(n_columns_);
  w.u64(period_items_);
  w.u64(cycles_);
  for (const auto& col : entries_) {
    w.u64(col.size());
    for (const auto& e : col) {
      w.u64(e.cycle);
      w.u32(e.tag.stream_id);
      w.u32(e.tag.offset);
      w.u8(e.speculative ? 1 : 0);
    }
  }
}

void EosLedger::load(BinReader& r) {
  n_columns_ = r.u32();
  period_items_ = r.u64();
  cycles_ = r.u64();
  entries_.assign(n_columns_, {});
  for (auto& col : entries_) {
    col.resize(r.u64());
    for (auto& e : col) {
      e.cycle = r.u64();
      e.tag.stream_id = r.u32();
      e.tag.offset = r.u32();
      e.speculative = r.u8() != 0;
    }
  }
}

double perfect_eos_ratio(const EosLedger& ledger, std::uint32_t periods) {
  if (periods < 2) throw std::invalid_argument("need at least two periods");
  const std::uint64_t complete = ledger.complete_periods();
  if (complete < periods)
    throw std::invalid_argument("not enough complete periods elapsed");
  const std::uint64_t first = complete - periods;  // compare the newest ones
  const std::uint64_t lo = first * ledger.period_items();
  const std::uint64_t hi = complete * ledger.period_items();

  double sum = 0.0;
  for (std::uint32_t c = 0; c < ledger.n_columns(); ++c) {
    std::map<std::pair<std::uint32_t, std::uint32_t>,
             std::vector<std::uint64_t>>
        counts;
    for (const auto& e : ledger.column_entries(c)) {
      if (e.speculative || e.cycle < lo || e.cycle >= hi) continue;
      auto& per = counts[{e.tag.stream_id, e.tag.offset}];
      if (per.empty()) per.assign(periods, 0);
      ++per[(e.cycle - lo) / ledger.period_items()];
    }
    if (counts.empty()) {
      sum += 1.0;  // silent column: vacuously stationary
      continue;
    }
    std::uint64_t perfect = 0;
    for (const auto& [tag, per] : counts) {
      bool equal = true;
      for (std::size_t i = 1; i < per.size(); ++i)
        if (per[i] != per[0]) equal = false;
      if (equal) ++perfect;
    }
    sum += static_cast<double>(perfect) / static_cast<double>(counts.size());
  }
  return sum / static_cast<double>(ledger.n_columns());
}

StabilityTracker::StabilityTracker(const Cortex& cortex,
                                   std::uint64_t window_cycles)
    : window_cycles_(window_cycles) {
  if (window_cycles == 0) throw std::invalid_argument("empty window");
  for (std::uint32_t r = 0; r < cortex.n_rungs(); ++r)
    rung_width_.push_back(cortex.rung_width(r));
  reset_window();
}

void StabilityTracker::observe(const Cortex& cortex) {
  for (std::uint32_t r = 0; r < rung_width_.size(); ++r) {
    for (std::uint32_t j = 0; j < rung_width_[r]; ++j) {
      if (cortex.column(r, j).l6a_state() != KnowledgeState::kKnown)
        known_[r][j] = 0;
      if (!cortex.fully_stable(r, j)) stable_[r][j] = 0;
    }
  }
  ++seen_;
}

std::vector<double> StabilityTracker::known_ratio() const {
  std::vector<double> out;
  for (std::uint32_t r = 0; r < rung_width_.size(); ++r) {
    std::uint64_t n = 0;
    for (std::uint32_t j = 0; j < rung_width_[r]; ++j) n += known_[r][j];
    out.push_back(static_cast<double>(n) / rung_width_[r]);
  }
  return out;
}

std::vector<double> StabilityTracker::stable_ratio() const {
  std::vector<double> out;
  for (std::uint32_t r = 0; r < rung_width_.size(); ++r) {
    std::uint64_t n = 0;
    for (std::uint32_t j = 0; j < rung_width_[r]; ++j) n += stable_[r][j];
    out.push_back(static_cast<double>(n) / rung_width_[r]);
  }
  return out;
}

void StabilityTracker::reset_window() {
  seen_ = 0;
  known_.clear();
  stable_.clear();
  for (std::uint32_t w : rung_width_) {
    known_.emplace_back(w, 1);
    stable_.emplace_back(w, 1);
  }
}

void StabilityTracker::save(BinWriter& w) const {
  w.u64(window_cycles_);
  w.u64(seen_);
  w.u64(rung_width_.size());
  for (std::size_t r = 0; r < rung_width_.size(); ++r) {
    w.u32(rung_width_[r]);
    for (std::uint32_t j = 0; j < rung_width_[r]; ++j) {
      w.u8(known_[r][j]);
      w.u8(stable_[r][j]);
    }
  }
}

void StabilityTracker::load(BinReader& r) {
  window_cycles_ = r.u64();
  seen_ = r.u64();
  const std::uint64_t rungs = r.u64();
  rung_width_.clear();
  known_.clear();
  stable_.clear();
  for (std::uint64_t i = 0; i < rungs; ++i) {
    const std::uint32_t w = r.u32();
    rung_width_.push_back(w);
    known_.emplace_back(w, 1);
    stable_.emplace_back(w, 1);
    for (std::uint32_t j = 0; j < w; ++j) {
      known_.back()[j] = r.u8();
      stable_.back()[j] = r.u8();
    }
  }
}

EncodingAccumulator::EncodingAccumulator(std::uint32_t streams,
                                         std::uint32_t vector_width)
    : width_(vector_width) {
  if (streams == 0) throw std::invalid_argument("no streams");
  if (vector_width == 0) throw std::invalid_argument("zero-width vector");
  counts_.assign(streams, std::vector<std::uint64_t>(vector_width, 0));
  samples_.assign(streams, 0);
}

void EncodingAccumulator::record(std::uint32_t stream, const Sdr& symbol) {
  if (stream >= counts_.size()) throw std::out_of_range("stream id");
  if (symbol.width != width_) throw std::invalid_argument("symbol width");
  for (std::uint16_t cell : symbol.active) ++counts_[stream][cell];
  ++samples_[stream];
}

std::vector<double> EncodingAccumulator::vector_of(std::uint32_t stream,
                                                   EncodingMode mode) const {
  if (stream >= counts_.size()) throw std::out_of_range("stream id");
  std::vector<double> v(width_, 0.0);
  const auto& c = counts_[stream];
  if (samples_[stream] == 0) return v;
  for (std::uint32_t i = 0; i < width_; ++i) {
    if (mode == EncodingMode::kTimeAgnostic) {
      v[i] = c[i] > 0 ? 1.0 : 0.0;
    } else {
      v[i] = static_cast<double>(c[i]) / static_cast<double>(samples_[stream]);
    }
  }
  return v;
}

void EncodingAccumulator::save(BinWriter& w) const {
  w.u32(width_);
  w.u64(counts_.size());
  for (std::size_t s = 0; s < counts_.size(); ++s) {
    w.u64(samples_[s]);
    for (std::uint64_t c : counts_[s]) w.u64(c);
  }
}

void EncodingAccumulator::load(BinReader& r) {
  width_ = r.u32();
  const std::uint64_t streams = r.u64();
  counts_.assign(streams, std::vector<std::uint64_t>(width_, 0));
  samples_.assign(streams, 0);
  for (std::uint64_t s = 0; s < streams; ++s) {
    samples_[s] = r.u64();
    for (std::uint32_t i = 0; i < width_; ++i) counts_[s][i] = r.u64();
  }
}

std::optional<double> cosine(const std::vector<double>& a,
                             const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::vector<std::optional<double>>> similarity_matrix(
    const EncodingAccumulator& acc, EncodingMode mode) {
  const std::uint32_t s = acc.streams();
  std::vector<std::vector<double>> vecs;
  for (std::uint32_t i = 0; i < s; ++i) vecs.push_back(acc.vector_of(i, mode));
  std::vector<std::vector<std::optional<double>>> m(
      s, std::vector<std::optional<double>>(s));
  for (std::uint32_t i = 0; i < s; ++i)
    for (std::uint32_t j = 0; j < s; ++j) m[i][j] = cosine(vecs[i], vecs[j]);
  return m;
}

std::optional<double> matrix_cosine(const EncodingAccumulator& before,
                                    const EncodingAccumulator& after,
                                    EncodingMode mode) {
  if (before.streams() != after.streams() ||
      before.vector_width() != after.vector_width())
    throw std::invalid_argument("accumulator geometry mismatch");
  std::vector<double> a, b;
  for (std::uint32_t s = 0; s < before.streams(); ++s) {
    auto va = before.vector_of(s, mode);
    auto vb = after.vector_of(s, mode);
    a.insert(a.end(), va.begin(), va.end());
    b.insert(b.end(), vb.begin(), vb.end());
  }
  return cosine(a, b);
}

std::vector<std::optional<double>> drift_angles_deg(
    const EncodingAccumulator& before, const EncodingAccumulator& after,
    EncodingMode mode) {
  if (before.streams() != after.streams() ||
      before.vector_width() != after.vector_width())
    throw std::invalid_argument("accumulator geometry mismatch");
  std::vector<std::optional<double>> out;
  for (std::uint32_t s = 0; s < before.streams(); ++s) {
    auto c = cosine(before.vector_of(s, mode), after.vector_of(s, mode));
    if (!c) {
      out.push_back(std::nullopt);
      continue;
    }
    const double clamped = std::clamp(*c, -1.0, 1.0);
    out.push_back(std::acos(clamped) * 180.0 / 3.14159265358979323846);
  }
  return out;
}

double power_estimate(double p0_watts, std::uint32_t n, double a) {
  if (!(p0_watts > 0.0)) throw std::invalid_argument("p0 must be positive");
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("a must be in (0,1)");
  // Geometric partial sum (1-a^n)/(1-a), closed form.
  const double series = (1.0 - std::pow(a, static_cast<double>(n))) / (1.0 - a);
  return p0_watts * static_cast<double>(n) * series;
}

void write_eos_csv(std::ostream& os, const EosLedger& ledger) {
  os << "column,cycle,stream,offset,speculative\n";
  for (std::uint32_t c = 0; c < ledger.n_columns(); ++c)
    for (const auto& e : ledger.column_entries(c))
      os << c << ',' << e.cycle << ',' << e.tag.stream_id << ','
         << e.tag.offset << ',' << (e.speculative ? 1 : 0) << '\n';
}

void write_load_csv(std::ostream& os, const std::vector<LoadSample>& rows) {
  os << "cycle,rung,synapses\n";
  for (const auto& row : rows)
    for (std::size_t r = 0; r < row.rung_load.size(); ++r)
      os << row.cycle << ',' << r << ',' << row.rung_load[r] << '\n';
}

void write_stability_csv(std::ostream& os,
                         const std::vector<StabilitySample>& rows) {
  os << "cycle,rung,known_ratio,stable_ratio\n";
  for (const auto& row : rows)
    for (std::size_t r = 0; r < row.known.size(); ++r)
      os << row.cycle << ',' << r << ',' << row.known[r] << ','
         << row.stable[r] << '\n';
}

void write_similarity_csv(
    std::ostream& os,
    const std::vector<std::vector<std::optional<double>>>& matrix) {
  os << "row,col,cosine\n";
  for (std::size_t i = 0; i < matrix.size(); ++i)
    for (std::size_t j = 0; j < matrix[i].size(); ++j) {
      os << i << ',' << j << ',';
      if (matrix[i][j]) os << *matrix[i][j];
      os << '\n';
    }
}

}  // namespace her
