#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "her/rng.hpp"

namespace her {

// Sparse distributed representation: a fixed width plus the sorted, unique
// indices of the active bits. Width is capped at 2^16 so indices fit in 16
// bits; all cross-module signals use this one format.
struct Sdr {
  std::uint32_t width = 0;
  std::vector<std::uint16_t> active;  // sorted ascending, unique

  Sdr() = default;
  Sdr(std::uint32_t w, std::vector<std::uint16_t> bits);

  bool empty() const { return active.empty(); }
  std::size_t count() const { return active.size(); }
  bool contains(std::uint16_t bit) const;
  bool operator==(const Sdr&) const = default;

  // Text form "width:i1,i2,..." ("width:" when empty).
  std::string to_text() const;
  static Sdr parse(std::string_view text);
};

std::uint32_t overlap(const Sdr& a, const Sdr& b);
Sdr union_all(std::span<const Sdr> parts);
// Concatenation: widths add, indices of later parts are offset.
Sdr concat_all(std::span<const Sdr> parts);

// Prediction with per-bit multiplicity (how many independent sources predict
// the bit). Support is the plain Sdr of bits with count >= 1.
struct PredictionMultiset {
  std::uint32_t width = 0;
  std::vector<std::pair<std::uint16_t, std::uint32_t>> counts;  // sorted by bit

  bool empty() const { return counts.empty(); }
  std::uint32_t count_of(std::uint16_t bit) const;
  std::uint32_t max_count() const;
  Sdr support() const;
  // Pointwise count addition; widths must match.
  void add(const PredictionMultiset& other);
  // Restrict to bit range [begin, begin+w), re-based to width w.
  PredictionMultiset slice(std::uint32_t begin, std::uint32_t w) const;
  bool operator==(const PredictionMultiset&) const = default;
};

PredictionMultiset multiset_merge(std::span<const Sdr> predictions);

// Identifies where in the input corpus a signal originated.
struct StreamTag {
  std::uint32_t stream_id = 0;
  std::uint32_t offset = 0;
  bool operator==(const StreamTag&) const = default;
};

struct TaggedSdr {
  Sdr sdr;
  StreamTag tag;
  bool operator==(const TaggedSdr&) const = default;
};

// n_active distinct bits drawn uniformly from [0, width).
Sdr random_sdr(std::uint32_t width, std::uint32_t n_active, RngStream& rng);

}  // namespace her
