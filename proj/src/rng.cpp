#include "her/rng.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace her {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

RngStream::RngStream(std::uint64_t master_seed, std::string_view component_path)
    : key_(mix64(master_seed ^ mix64(fnv1a64(component_path)))) {}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGamma);
}

std::uint32_t RngStream::below(std::uint32_t bound) {
  assert(bound > 0);
  // Truncated 64x32 multiply: deterministic, negligible bias for our bounds.
  std::uint64_t r = next_u64() >> 32;
  return static_cast<std::uint32_t>((r * bound) >> 32);
}

double RngStream::unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

bool RngStream::bernoulli(double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return unit() < p;
}

std::vector<std::uint32_t> RngStream::sample(std::uint32_t n, std::uint32_t k) {
  if (k > n) throw std::invalid_argument("RngStream::sample: k > n");
  // Partial Fisher-Yates over an index vector; n is small everywhere we
  // sample (input pools, previous-active sets).
  std::vector<std::uint32_t> idx(n);
  for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
  for (std::uint32_t i = 0; i < k; ++i) {
    std::uint32_t j = i + below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace her
