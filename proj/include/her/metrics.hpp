#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "her/sdr.hpp"
#include "her/serialize.hpp"

namespace her {

class Cortex;

// Append-only record of segmentation events for one group of columns
// (typically one rung). The offending input's tag identifies where in the
// corpus each boundary landed; bucketing by period is done on the cycle
// index, which equals the input item index (one item per global cycle).
class EosLedger {
 public:
  EosLedger(std::uint32_t n_columns, std::uint64_t period_items);

  void record(std::uint32_t column, std::uint64_t cycle, StreamTag tag,
              bool speculative);
  void set_cycles(std::uint64_t cycles);  // run length so far

  std::uint32_t n_columns() const { return n_columns_; }
  std::uint64_t period_items() const { return period_items_; }
  std::uint64_t cycles() const { return cycles_; }
  std::uint64_t complete_periods() const { return cycles_ / period_items_; }
  std::uint64_t size() const;

  struct Entry {
    std::uint64_t cycle = 0;
    StreamTag tag;
    bool speculative = false;
  };
  const std::vector<Entry>& column_entries(std::uint32_t column) const {
    return entries_[column];
  }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  std::uint32_t n_columns_ = 0;
  std::uint64_t period_items_ = 0;
  std::uint64_t cycles_ = 0;
  std::vector<std::vector<Entry>> entries_;
};

// Stability proxy for periodic input: a tag is "perfect" when its event
// count is identical in every compared period. Compares the most recent
// `periods` complete periods; speculative entries are excluded (their
// placement tracks the forwarding loop, not the input). A column that fired
// nowhere in the window is vacuously stable and scores 1. Throws if fewer
// than two complete periods (or fewer than `periods`) have elapsed.
double perfect_eos_ratio(const EosLedger& ledger, std::uint32_t periods);

// Rolls a window over per-column knowledge: a column counts as "known" if
// its stream predictor held Known at every observation in the window, and
// as "stable" if additionally no synchronization slice below or above it
// was allocated at any observation (the companion metric for runs where
// boundary events cannot be trusted).
class StabilityTracker {
 public:
  StabilityTracker(const Cortex& cortex, std::uint64_t window_cycles);

  void observe(const Cortex& cortex);  // once per cycle
  bool window_complete() const { return seen_ >= window_cycles_; }
  std::uint64_t window_cycles() const { return window_cycles_; }

  // Per-rung fractions over the current (possibly incomplete) window.
  std::vector<double> known_ratio() const;
  std::vector<double> stable_ratio() const;
  void reset_window();

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  std::uint64_t window_cycles_ = 0;
  std::uint64_t seen_ = 0;
  std::vector<std::uint32_t> rung_width_;
  std::vector<std::vector<std::uint8_t>> known_;   // [rung][column]
  std::vector<std::vector<std::uint8_t>> stable_;  // [rung][column]
};

enum class EncodingMode : std::uint8_t {
  kTimeAgnostic = 0,  // which cells ever appeared in the window
  kRateVector = 1,    // per-cell activation rate over the window
};

// Accumulates output symbols per input stream into dense activation
// vectors, from which pairwise and before/after similarities are computed.
class EncodingAccumulator {
 public:
  EncodingAccumulator(std::uint32_t streams, std::uint32_t vector_width);

  void record(std::uint32_t stream, const Sdr& symbol);
  std::uint32_t streams() const {
    return static_cast<std::uint32_t>(counts_.size());
  }
  std::uint32_t vector_width() const { return width_; }
  std::uint64_t samples(std::uint32_t stream) const {
    return samples_[stream];
  }
  std::vector<double> vector_of(std::uint32_t stream, EncodingMode mode) const;

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  std::uint32_t width_ = 0;
  std::vector<std::vector<std::uint64_t>> counts_;
  std::vector<std::uint64_t> samples_;
};

// Cosine of two dense vectors; absent when either has zero norm.
std::optional<double> cosine(const std::vector<double>& a,
                             const std::vector<double>& b);

// Pairwise cosine among one accumulator's streams.
std::vector<std::vector<std::optional<double>>> similarity_matrix(
    const EncodingAccumulator& acc, EncodingMode mode);

// Whole-representation similarity: cosine of the two flattened stream x
// cell matrices. Accumulators must agree on geometry.
std::optional<double> matrix_cosine(const EncodingAccumulator& before,
                                    const EncodingAccumulator& after,
                                    EncodingMode mode);

// Per-stream representational drift, in degrees.
std::vector<std::optional<double>> drift_angles_deg(
    const EncodingAccumulator& before, const EncodingAccumulator& after,
    EncodingMode mode);

// Hierarchical power budget: p0 * n * sum_{i=0}^{n-1} a^i. Requires
// 0 < a < 1. Note the source's own worked example does not follow from
// this formula; the formula is what ships.
double power_estimate(double p0_watts, std::uint32_t n, double a);

// CSV exports.
struct LoadSample {
  std::uint64_t cycle = 0;
  std::vector<std::uint64_t> rung_load;
};
struct StabilitySample {
  std::uint64_t cycle = 0;
  std::vector<double> known;
  std::vector<double> stable;
};

void write_eos_csv(std::ostream& os, const EosLedger& ledger);
void write_load_csv(std::ostream& os, const std::vector<LoadSample>& rows);
void write_stability_csv(std::ostream& os,
                         const std::vector<StabilitySample>& rows);
void write_similarity_csv(
    std::ostream& os,
    const std::vector<std::vector<std::optional<double>>>& matrix);

}  // namespace her
