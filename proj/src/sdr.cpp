#include "her/sdr.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

namespace her {

namespace {
constexpr std::uint32_t kMaxWidth = 1u << 16;

void check_width(std::uint32_t width) {
  if (width == 0 || width > kMaxWidth)
    throw std::invalid_argument("Sdr width must be in [1, 65536]");
}
}  // namespace

Sdr::Sdr(std::uint32_t w, std::vector<std::uint16_t> bits)
    : width(w), active(std::move(bits)) {
  check_width(width);
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  if (!active.empty() && active.back() >= width)
    throw std::invalid_argument("Sdr index out of range");
}

bool Sdr::contains(std::uint16_t bit) const {
  return std::binary_search(active.begin(), active.end(), bit);
}

std::string Sdr::to_text() const {
  std::string out = std::to_string(width);
  out += ':';
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(active[i]);
  }
  return out;
}

Sdr Sdr::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("Sdr text missing ':'");
  auto parse_u32 = [](std::string_view tok) {
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw std::invalid_argument("Sdr text: bad number");
    return v;
  };
  std::uint32_t width = parse_u32(text.substr(0, colon));
  check_width(width);
  std::vector<std::uint16_t> bits;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    auto comma = rest.find(',');
    std::string_view tok = rest.substr(0, comma);
    std::uint32_t v = parse_u32(tok);
    if (v >= width) throw std::invalid_argument("Sdr text: index out of range");
    bits.push_back(static_cast<std::uint16_t>(v));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return Sdr(width, std::move(bits));
}

std::uint32_t overlap(const Sdr& a, const Sdr& b) {
  if (a.width != b.width)
    throw std::invalid_argument("overlap: width mismatch");
  std::uint32_t n = 0;
  auto ia = a.active.begin();
  auto ib = b.active.begin();
  while (ia != a.active.end() && ib != b.active.end()) {
    if (*ia < *ib)
      ++ia;
    else if (*ib < *ia)
      ++ib;
    else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

Sdr union_all(std::span<const Sdr> parts) {
  if (parts.empty()) throw std::invalid_argument("union_all: empty input");
  Sdr out;
  out.width = parts.front().width;
  for (const Sdr& p : parts) {
    if (p.width != out.width)
      throw std::invalid_argument("union_all: width mismatch");
    std::vector<std::uint16_t> merged;
    merged.reserve(out.active.size() + p.active.size());
    std::set_union(out.active.begin(), out.active.end(), p.active.begin(),
                   p.active.end(), std::back_inserter(merged));
    out.active = std::move(merged);
  }
  return out;
}

Sdr concat_all(std::span<const Sdr> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_all: empty input");
  std::uint64_t total = 0;
  for (const Sdr& p : parts) total += p.width;
  if (total > kMaxWidth)
    throw std::invalid_argument("concat_all: combined width exceeds 65536");
  Sdr out;
  out.width = static_cast<std::uint32_t>(total);
  std::uint32_t offset = 0;
  for (const Sdr& p : parts) {
    for (std::uint16_t bit : p.active)
      out.active.push_back(static_cast<std::uint16_t>(bit + offset));
    offset += p.width;
  }
  return out;
}

std::uint32_t PredictionMultiset::count_of(std::uint16_t bit) const {
  auto it = std::lower_bound(
      counts.begin(), counts.end(), bit,
      [](const auto& entry, std::uint16_t b) { return entry.first < b; });
  if (it != counts.end() && it->first == bit) return it->second;
  return 0;
}

std::uint32_t PredictionMultiset::max_count() const {
  std::uint32_t m = 0;
  for (const auto& [bit, n] : counts) m = std::max(m, n);
  return m;
}

Sdr PredictionMultiset::support() const {
  Sdr out;
  out.width = width;
  out.active.reserve(counts.size());
  for (const auto& [bit, n] : counts) out.active.push_back(bit);
  return out;
}

void PredictionMultiset::add(const PredictionMultiset& other) {
  if (width == 0) {
    *this = other;
    return;
  }
  if (other.width != width)
    throw std::invalid_argument("PredictionMultiset::add: width mismatch");
  std::vector<std::pair<std::uint16_t, std::uint32_t>> merged;
  merged.reserve(counts.size() + other.counts.size());
  auto ia = counts.begin();
  auto ib = other.counts.begin();
  while (ia != counts.end() || ib != other.counts.end()) {
    if (ib == other.counts.end() ||
        (ia != counts.end() && ia->first < ib->first)) {
      merged.push_back(*ia++);
    } else if (ia == counts.end() || ib->first < ia->first) {
      merged.push_back(*ib++);
    } else {
      merged.emplace_back(ia->first, ia->second + ib->second);
      ++ia;
      ++ib;
    }
  }
  counts = std::move(merged);
}

PredictionMultiset PredictionMultiset::slice(std::uint32_t begin,
                                             std::uint32_t w) const {
  if (begin + w > width)
    throw std::invalid_argument("PredictionMultiset::slice: out of range");
  PredictionMultiset out;
  out.width = w;
  for (const auto& [bit, n] : counts)
    if (bit >= begin && bit < begin + w)
      out.counts.emplace_back(static_cast<std::uint16_t>(bit - begin), n);
  return out;
}

PredictionMultiset multiset_merge(std::span<const Sdr> predictions) {
  if (predictions.empty())
    throw std::invalid_argument("multiset_merge: empty input");
  PredictionMultiset out;
  out.width = predictions.front().width;
  std::vector<std::uint32_t> tally;
  tally.assign(out.width, 0);
  for (const Sdr& p : predictions) {
    if (p.width != out.width)
      throw std::invalid_argument("multiset_merge: width mismatch");
    for (std::uint16_t bit : p.active) ++tally[bit];
  }
  for (std::uint32_t bit = 0; bit < out.width; ++bit)
    if (tally[bit])
      out.counts.emplace_back(static_cast<std::uint16_t>(bit), tally[bit]);
  return out;
}

Sdr random_sdr(std::uint32_t width, std::uint32_t n_active, RngStream& rng) {
  check_width(width);
  if (n_active > width)
    throw std::invalid_argument("random_sdr: n_active > width");
  Sdr out;
  out.width = width;
  for (std::uint32_t v : rng.sample(width, n_active))
    out.active.push_back(static_cast<std::uint16_t>(v));
  return out;
}

}  // namespace her
