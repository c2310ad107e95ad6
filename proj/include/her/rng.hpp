#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace her {

// Counter-based deterministic random stream. Each component instance owns one
// stream whose key is derived from (master_seed, component_path); draw i is a
// pure function of (key, i), so streams are independent of every other
// component's draw order and of thread scheduling. The counter is part of the
// persisted state: restoring it resumes the exact sequence.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t master_seed, std::string_view component_path);

  std::uint64_t next_u64();
  // Uniform in [0, bound); bound must be > 0.
  std::uint32_t below(std::uint32_t bound);
  // Uniform in [0, 1), 53-bit resolution.
  double unit();
  bool bernoulli(double p);

  // k distinct values from [0, n), ascending. k must be <= n.
  std::vector<std::uint32_t> sample(std::uint32_t n, std::uint32_t k);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Stable 64-bit hash of a byte string (used for stream keys and config
// digests; never for untrusted input).
std::uint64_t fnv1a64(std::string_view bytes);

// SplitMix64 finalizer; pure mixing function used by RngStream.
std::uint64_t mix64(std::uint64_t x);

}  // namespace her
