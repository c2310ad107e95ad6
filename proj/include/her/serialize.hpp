#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace her {

// Little-endian binary encoding used by the checkpoint format. Fixed-width
// fields only; doubles travel as their IEEE-754 bit pattern so a save/load
// round trip is byte-identical.
class BinWriter {
 public:
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::string_view v);   // length-prefixed (u64)
  template <typename T>
  void vec16(const std::vector<T>& v);  // u64 count + raw u16 elements

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class BinReader {
 public:
  explicit BinReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string bytes();
  template <typename T>
  std::vector<T> vec16();

  bool exhausted() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n);
  std::string_view data_;
  std::size_t pos_ = 0;
};

template <typename T>
void BinWriter::vec16(const std::vector<T>& v) {
  static_assert(sizeof(T) == 2);
  u64(v.size());
  for (const T& e : v) u16(static_cast<std::uint16_t>(e));
}

template <typename T>
std::vector<T> BinReader::vec16() {
  static_assert(sizeof(T) == 2);
  std::uint64_t n = u64();
  std::vector<T> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(static_cast<T>(u16()));
  return out;
}

struct Sdr;
struct PredictionMultiset;

void write_sdr(BinWriter& w, const Sdr& s);
Sdr read_sdr(BinReader& r);
void write_multiset(BinWriter& w, const PredictionMultiset& m);
PredictionMultiset read_multiset(BinReader& r);

}  // namespace her
