#include "entropy.hpp"

#include <cmath>

namespace nwrap::entropy {

const std::array<uint8_t, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

namespace {

struct SymLen {
  uint16_t sym;
  uint8_t len;
};

HuffTable build_dc() {
  // categories 0..11 at the conventional lengths, 12..14 appended deeper
  static const SymLen spec[] = {
      {0, 2},  {1, 3},  {2, 3},  {3, 3},   {4, 3},   {5, 3},   {6, 4},  {7, 5},
      {8, 6},  {9, 7},  {10, 8}, {11, 9},  {12, 10}, {13, 11}, {14, 12}};
  std::vector<uint16_t> syms;
  std::vector<uint8_t> lens;
  for (const auto& s : spec) {
    syms.push_back(s.sym);
    lens.push_back(s.len);
  }
  HuffTable t;
  t.build(syms, lens, 16);
  return t;
}

// conventional luminance AC value order; index in this array plus the
// per-length counts below defines the canonical code assignment
const uint16_t kAcValues[] = {
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
    0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08,
    0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72,
    0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75,
    0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3,
    0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
    0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9,
    0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4,
    0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa};
const uint8_t kAcBits[16] = {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125};

HuffTable build_ac() {
  std::vector<uint16_t> syms;
  std::vector<uint8_t> lens;
  size_t idx = 0;
  for (int l = 1; l <= 16; ++l) {
    for (int i = 0; i < kAcBits[l - 1]; ++i) {
      syms.push_back(kAcValues[idx++]);
      lens.push_back(static_cast<uint8_t>(l));
    }
  }
  // run/size pairs with size 11..14; exactly fills the remaining slack at 22
  for (int run = 0; run < 16; ++run)
    for (int size = 11; size <= 14; ++size) {
      syms.push_back(static_cast<uint16_t>((run << 4) | size));
      lens.push_back(22);
    }
  HuffTable t;
  t.build(syms, lens, 256);
  return t;
}

}  // namespace

const HuffTable& dc_table() {
  static const HuffTable t = build_dc();
  return t;
}

const HuffTable& ac_table() {
  static const HuffTable t = build_ac();
  return t;
}

void encode_block(BitWriter& bw, const int32_t* block, int32_t& dc_pred) {
  const auto& dc = dc_table();
  const auto& ac = ac_table();
  const int32_t diff = block[0] - dc_pred;
  dc_pred = block[0];
  const int size = magnitude_category(diff);
  dc.put(bw, static_cast<uint16_t>(size));
  if (size) bw.put(amplitude_bits(diff, size), size);

  int run = 0;
  int last_nonzero = 0;
  for (int z = 63; z >= 1; --z) {
    if (block[kZigzag[z]] != 0) {
      last_nonzero = z;
      break;
    }
  }
  for (int z = 1; z <= last_nonzero; ++z) {
    const int32_t v = block[kZigzag[z]];
    if (v == 0) {
      ++run;
      continue;
    }
    while (run > 15) {
      ac.put(bw, 0xf0);
      run -= 16;
    }
    const int s = magnitude_category(v);
    ac.put(bw, static_cast<uint16_t>((run << 4) | s));
    bw.put(amplitude_bits(v, s), s);
    run = 0;
  }
  if (last_nonzero != 63) ac.put(bw, 0x00);
}

void decode_block(BitReader& br, int32_t* block, int32_t& dc_pred) {
  const auto& dc = dc_table();
  const auto& ac = ac_table();
  for (int i = 0; i < 64; ++i) block[i] = 0;
  const int size = dc.get(br);
  const int32_t diff = size ? extend_amplitude(br.get(size), size) : 0;
  dc_pred += diff;
  block[0] = dc_pred;
  int z = 1;
  while (z < 64) {
    const uint16_t sym = ac.get(br);
    if (sym == 0x00) break;
    if (sym == 0xf0) {
      z += 16;
      continue;
    }
    const int run = sym >> 4;
    const int s = sym & 0xf;
    z += run;
    if (z > 63)
      throw std::runtime_error("run past block end near bit " +
                               std::to_string(br.position()));
    block[kZigzag[z]] = extend_amplitude(br.get(s), s);
    ++z;
  }
}

bool block_is_skippable(const int32_t* block, int32_t dc_pred) {
  if (block[0] != dc_pred) return false;
  for (int i = 1; i < 64; ++i)
    if (block[i] != 0) return false;
  return true;
}

}  // namespace nwrap::entropy
