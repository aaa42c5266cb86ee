#include "nwrap/jpeg_gray.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dct.hpp"
#include "entropy.hpp"

namespace nwrap {

namespace {

const int kBaseTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

std::vector<double> pad_to_blocks(const std::vector<uint16_t>& plane, int w, int h,
                                  int& pw, int& ph) {
  pw = (w + 7) & ~7;
  ph = (h + 7) & ~7;
  std::vector<double> out(static_cast<size_t>(pw) * ph);
  for (int i = 0; i < ph; ++i) {
    const int si = std::min(i, h - 1);
    for (int j = 0; j < pw; ++j)
      out[static_cast<size_t>(i) * pw + j] =
          static_cast<double>(plane[static_cast<size_t>(si) * w + std::min(j, w - 1)]) -
          128.0;
  }
  return out;
}

}  // namespace

std::vector<int> gray_quant_table(int qf) {
  if (qf < 1 || qf > 100)
    throw std::invalid_argument("quality factor must be in [1,100], got " +
                                std::to_string(qf));
  const int scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  std::vector<int> t(64);
  for (int i = 0; i < 64; ++i)
    t[static_cast<size_t>(i)] = std::clamp((kBaseTable[i] * scale + 50) / 100, 1, 255);
  return t;
}

GrayBitstream baseline_gray_encode(const std::vector<uint16_t>& plane, int width,
                                   int height, int qf) {
  if (width < 1 || height < 1 ||
      plane.size() != static_cast<size_t>(width) * static_cast<size_t>(height))
    throw std::invalid_argument("baseline_gray_encode: plane does not match extents");
  for (uint16_t v : plane)
    if (v > 255)
      throw std::invalid_argument("baseline_gray_encode: sample " + std::to_string(v) +
                                  " exceeds 8 bits; pass the most significant 8 bits");
  const auto quant = gray_quant_table(qf);
  int pw = 0, ph = 0;
  const auto shifted = pad_to_blocks(plane, width, height, pw, ph);

  entropy::BitWriter bw;
  int32_t dc_pred = 0;
  std::vector<double> coeffs(64);
  int32_t block[64];
  for (int bi = 0; bi < ph; bi += 8)
    for (int bj = 0; bj < pw; bj += 8) {
      dct::transform_block(shifted.data() + static_cast<size_t>(bi) * pw + bj, pw, 8,
                           dct::cached_basis(8).data(), false, coeffs.data(), 8);
      for (int i = 0; i < 64; ++i)
        block[i] = static_cast<int32_t>(std::lround(coeffs[static_cast<size_t>(i)] /
                                                    quant[static_cast<size_t>(i)]));
      entropy::encode_block(bw, block, dc_pred);
    }

  GrayBitstream bs;
  bs.payload_bits = bw.bit_count();
  bs.bytes = bw.take();
  bs.width = width;
  bs.height = height;
  bs.qf = qf;
  return bs;
}

std::vector<uint16_t> baseline_gray_decode(const GrayBitstream& bs) {
  const auto quant = gray_quant_table(bs.qf);
  const int pw = (bs.width + 7) & ~7;
  const int ph = (bs.height + 7) & ~7;
  entropy::BitReader br(bs.bytes, bs.payload_bits);
  std::vector<double> recon(static_cast<size_t>(pw) * ph);
  int32_t dc_pred = 0;
  int32_t block[64];
  std::vector<double> deq(64), pix(64);
  for (int bi = 0; bi < ph; bi += 8)
    for (int bj = 0; bj < pw; bj += 8) {
      entropy::decode_block(br, block, dc_pred);
      for (int i = 0; i < 64; ++i)
        deq[static_cast<size_t>(i)] =
            static_cast<double>(block[i]) * quant[static_cast<size_t>(i)];
      dct::transform_block(deq.data(), 8, 8, dct::cached_basis(8).data(), true,
                           pix.data(), 8);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          recon[static_cast<size_t>(bi + i) * pw + bj + j] = pix[static_cast<size_t>(i) * 8 + j];
    }
  std::vector<uint16_t> out(static_cast<size_t>(bs.width) * bs.height);
  for (int i = 0; i < bs.height; ++i)
    for (int j = 0; j < bs.width; ++j)
      out[static_cast<size_t>(i) * bs.width + j] = static_cast<uint16_t>(
          std::clamp<long>(std::lround(recon[static_cast<size_t>(i) * pw + j] + 128.0), 0, 255));
  return out;
}

}  // namespace nwrap
