// Bit I/O and the canonical Huffman coding shared by the grayscale baseline
// coder and the hermetic intra codec. Code lengths follow the conventional
// baseline luminance tables, extended with longer codes for the larger
// magnitude categories a 10-bit source can produce (DC up to category 14 at
// lengths 10-12, AC run/size pairs with size 11-14 at length 22). The
// extensions fill the remaining Kraft slack, so 8-bit content still gets the
// standard codewords.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace nwrap::entropy {

class BitWriter {
 public:
  void put(uint32_t code, int nbits) {
    for (int i = nbits - 1; i >= 0; --i) put_bit((code >> i) & 1u);
  }
  void put_bit(uint32_t b) {
    if (fill_ == 0) bytes_.push_back(0);
    bytes_.back() = static_cast<uint8_t>(bytes_.back() | ((b & 1u) << (7 - fill_)));
    fill_ = (fill_ + 1) & 7;
    ++bits_;
  }
  uint64_t bit_count() const { return bits_; }
  const std::vector<uint8_t>& bytes() const { return bytes_; }
  std::vector<uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
  int fill_ = 0;
  uint64_t bits_ = 0;
};

class BitReader {
 public:
  BitReader(std::span<const uint8_t> bytes, uint64_t bit_count)
      : bytes_(bytes), bits_(bit_count) {}

  uint32_t get_bit() {
    if (pos_ >= bits_) throw std::runtime_error("bitstream exhausted at bit " +
                                                std::to_string(pos_));
    const uint64_t byte = pos_ >> 3;
    const uint32_t b = (bytes_[static_cast<size_t>(byte)] >> (7 - (pos_ & 7))) & 1u;
    ++pos_;
    return b;
  }
  uint32_t get(int nbits) {
    uint32_t v = 0;
    for (int i = 0; i < nbits; ++i) v = (v << 1) | get_bit();
    return v;
  }
  uint64_t position() const { return pos_; }
  uint64_t remaining() const { return bits_ - pos_; }

 private:
  std::span<const uint8_t> bytes_;
  uint64_t bits_;
  uint64_t pos_ = 0;
};

constexpr int kMaxCodeLen = 22;

struct HuffTable {
  // encode side, indexed by symbol
  std::vector<uint32_t> code;
  std::vector<uint8_t> len;
  // canonical decode side
  std::array<int32_t, kMaxCodeLen + 1> min_code{};
  std::array<int32_t, kMaxCodeLen + 1> max_code{};  // -1 = no codes at this length
  std::array<int32_t, kMaxCodeLen + 1> val_ptr{};
  std::vector<uint16_t> symbols_by_code;

  void build(std::span<const uint16_t> symbols, std::span<const uint8_t> lengths,
             int symbol_space) {
    code.assign(static_cast<size_t>(symbol_space), 0);
    len.assign(static_cast<size_t>(symbol_space), 0);
    symbols_by_code.clear();
    max_code.fill(-1);
    uint32_t next = 0;
    int prev_len = 0;
    for (size_t i = 0; i < symbols.size(); ++i) {
      const int l = lengths[i];
      if (l < prev_len) throw std::logic_error("huffman lengths must be nondecreasing");
      next <<= (l - prev_len);
      if (max_code[static_cast<size_t>(l)] < 0) {
        min_code[static_cast<size_t>(l)] = static_cast<int32_t>(next);
        val_ptr[static_cast<size_t>(l)] = static_cast<int32_t>(symbols_by_code.size());
      }
      max_code[static_cast<size_t>(l)] = static_cast<int32_t>(next);
      code[symbols[i]] = next;
      len[symbols[i]] = static_cast<uint8_t>(l);
      symbols_by_code.push_back(symbols[i]);
      ++next;
      prev_len = l;
    }
    if (prev_len > kMaxCodeLen) throw std::logic_error("huffman code too long");
  }

  void put(BitWriter& bw, uint16_t symbol) const {
    if (symbol >= len.size() || len[symbol] == 0)
      throw std::logic_error("no huffman code for symbol " + std::to_string(symbol));
    bw.put(code[symbol], len[symbol]);
  }

  uint16_t get(BitReader& br) const {
    int32_t c = 0;
    for (int l = 1; l <= kMaxCodeLen; ++l) {
      c = (c << 1) | static_cast<int32_t>(br.get_bit());
      if (max_code[static_cast<size_t>(l)] >= 0 && c <= max_code[static_cast<size_t>(l)]) {
        return symbols_by_code[static_cast<size_t>(
            val_ptr[static_cast<size_t>(l)] + c - min_code[static_cast<size_t>(l)])];
      }
    }
    throw std::runtime_error("invalid huffman code near bit " +
                             std::to_string(br.position()));
  }

  double kraft_sum() const {
    double s = 0.0;
    for (uint8_t l : len)
      if (l) s += std::pow(2.0, -static_cast<double>(l));
    return s;
  }
};

/// DC table: symbol = magnitude category 0..14.
const HuffTable& dc_table();
/// AC table: symbol = (run << 4) | size, EOB = 0x00, ZRL = 0xF0, size <= 14.
const HuffTable& ac_table();

inline int magnitude_category(int32_t v) {
  uint32_t a = static_cast<uint32_t>(v < 0 ? -v : v);
  int n = 0;
  while (a) {
    ++n;
    a >>= 1;
  }
  return n;
}

inline uint32_t amplitude_bits(int32_t v, int size) {
  return static_cast<uint32_t>(v >= 0 ? v : v + (1 << size) - 1);
}

inline int32_t extend_amplitude(uint32_t bits, int size) {
  if (size == 0) return 0;
  const int32_t v = static_cast<int32_t>(bits);
  return v < (1 << (size - 1)) ? v - (1 << size) + 1 : v;
}

extern const std::array<uint8_t, 64> kZigzag;  // zigzag position -> natural index

/// Writes one quantized 8x8 block (natural order) with differential DC and
/// run-length coded ACs. Updates the DC predictor.
void encode_block(BitWriter& bw, const int32_t* block, int32_t& dc_pred);
/// Inverse; fills the block in natural order.
void decode_block(BitReader& br, int32_t* block, int32_t& dc_pred);
/// True when encode_block would code DC delta 0 and no ACs.
bool block_is_skippable(const int32_t* block, int32_t dc_pred);

}  // namespace nwrap::entropy
