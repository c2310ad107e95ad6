#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "her/hippocampus.hpp"
#include "her/sdr.hpp"
#include "her/serialize.hpp"

namespace her {

// Size window a speculative match must fall into before it may leave the
// column. The wiring layer defaults both bounds to the exact symbol sparsity
// so only a perfectly narrowed prediction is forwarded.
struct MatchLimits {
  std::uint32_t min_bits = 0;
  std::uint32_t max_bits = 0;
  bool operator==(const MatchLimits&) const = default;
};

// Intersection of a unanimous forward prediction with every successor
// expectation (AND over the multiset supports). Absent when there is no
// partner, any partner is silent, or the match size falls outside the
// limits (a too-wide match is the union of several symbols).
std::optional<Sdr> ctloop_match(
    const Sdr& l5_pred, std::span<const PredictionMultiset> expectations,
    const MatchLimits& limits);

// A column may speculate only under attention and only into successors that
// are themselves running on speculation (or are the attention boundary).
bool forwarding_eligibility(bool attention_on,
                            std::span<const std::uint8_t> successors_forwarding);

// Familiarity tracker over a top-rung column's output stream. Attention is
// on exactly while the internal slice is deallocated, i.e. while the output
// stream is fully familiar. The tracker itself must never stop watching, so
// it is stepped under forced allocation and the flag is recomputed from the
// voted state afterwards.
class AttentionGenerator {
 public:
  AttentionGenerator(const FilteringSliceConfig& cfg, std::uint64_t master_seed,
                     const std::string& rng_path);

  // Consume one output symbol; returns attention_on afterwards.
  bool observe(const Sdr& symbol);

  bool attention_on() const { return !slice_.allocated(); }
  const FilteringSlice& slice() const { return slice_; }

  void save(BinWriter& w) const { slice_.save(w); }
  void load(BinReader& r) { slice_.load(r); }

 private:
  FilteringSlice slice_;
};

// Per-column verdict of one speculation pass.
struct CtDecision {
  std::optional<Sdr> forward;  // deliver to every successor as a symbol event
  bool mute = false;           // entered speculation this cycle
  bool unmute = false;         // mismatch / runaway: back to the real stream
};

// Speculation state machine. Owns, per column: whether it currently runs on
// forwarded predictions, the last forwarded symbol, and the consecutive
// identical-forward count (runaway brake). The wiring layer drives one
// evaluate() per column per cycle, upper rungs first, so a broken stage cuts
// eligibility below it within the same pass while rungs above are untouched.
class CtLoop {
 public:
  explicit CtLoop(std::uint32_t n_columns, std::uint32_t runaway_limit = 3);

  CtDecision evaluate(std::uint32_t column, bool eligible,
                      const std::optional<Sdr>& l5_prediction,
                      std::span<const PredictionMultiset> expectations,
                      const MatchLimits& limits);

  bool forwarding(std::uint32_t column) const { return forwarding_[column]; }
  std::uint64_t forward_count(std::uint32_t column) const {
    return forwards_[column];
  }
  std::uint64_t total_forwards() const;

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  std::uint32_t runaway_limit_;
  std::vector<std::uint8_t> forwarding_;
  std::vector<Sdr> last_;
  std::vector<std::uint32_t> identical_;
  std::vector<std::uint64_t> forwards_;
};

// Sensory front door of one input flow: suppresses a value that has sat
// unchanged for t_rep consecutive cycles, and while no slice is allocated
// above the flow masks the input down to the expected bits.
class MgnFilter {
 public:
  explicit MgnFilter(std::uint32_t t_rep = 2) : t_rep_(t_rep) {}

  std::optional<TaggedSdr> filter(const TaggedSdr& flow,
                                  const PredictionMultiset* expectation,
                                  bool ca3_above_present);

  std::uint64_t suppressed_count() const { return suppressed_; }
  std::uint64_t passed_count() const { return passed_; }

  void save(BinWriter& w) const;
  void load(BinReader& r);

 private:
  std::uint32_t t_rep_;
  Sdr last_;
  std::uint32_t repeats_ = 0;
  std::uint64_t suppressed_ = 0;
  std::uint64_t passed_ = 0;
};

}  // namespace her
