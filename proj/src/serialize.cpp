#include "her/serialize.hpp"

#include <bit>
#include <stdexcept>

#include "her/sdr.hpp"

namespace her {

void BinWriter::u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

void BinWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v));
  u8(static_cast<std::uint8_t>(v >> 8));
}

void BinWriter::u32(std::uint32_t v) {
  u16(static_cast<std::uint16_t>(v));
  u16(static_cast<std::uint16_t>(v >> 16));
}

void BinWriter::u64(std::uint64_t v) {
  u32(static_cast<std::uint32_t>(v));
  u32(static_cast<std::uint32_t>(v >> 32));
}

void BinWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinWriter::bytes(std::string_view v) {
  u64(v.size());
  buf_.append(v);
}

void BinReader::need(std::size_t n) {
  if (data_.size() - pos_ < n)
    throw std::out_of_range("checkpoint data truncated");
}

std::uint8_t BinReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint16_t BinReader::u16() {
  std::uint16_t lo = u8();
  std::uint16_t hi = u8();
  return static_cast<std::uint16_t>(lo | (hi << 8));
}

std::uint32_t BinReader::u32() {
  std::uint32_t lo = u16();
  std::uint32_t hi = u16();
  return lo | (hi << 16);
}

std::uint64_t BinReader::u64() {
  std::uint64_t lo = u32();
  std::uint64_t hi = u32();
  return lo | (hi << 32);
}

double BinReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinReader::bytes() {
  std::uint64_t n = u64();
  need(n);
  std::string out(data_.substr(pos_, n));
  pos_ += n;
  return out;
}

void write_sdr(BinWriter& w, const Sdr& s) {
  w.u32(s.width);
  w.vec16(s.active);
}

Sdr read_sdr(BinReader& r) {
  Sdr s;
  s.width = r.u32();
  s.active = r.vec16<std::uint16_t>();
  return s;
}

void write_multiset(BinWriter& w, const PredictionMultiset& m) {
  w.u32(m.width);
  w.u64(m.counts.size());
  for (const auto& [bit, n] : m.counts) {
    w.u16(bit);
    w.u32(n);
  }
}

PredictionMultiset read_multiset(BinReader& r) {
  PredictionMultiset m;
  m.width = r.u32();
  m.counts.assign(r.u64(), {});
  for (auto& [bit, n] : m.counts) {
    bit = r.u16();
    n = r.u32();
  }
  return m;
}

}  // namespace her
