// Baseline grayscale transform coder: 8x8 DCT, quality-scaled quantization,
// zigzag run-length and canonical Huffman coding. Used to measure the real
// bitrate that calibrates the training rate loss, and reused by the internal
// intra codec. The entropy layout follows baseline conventions but the
// container is our own, so the payload bit count is exact and deterministic.
#pragma once

#include <cstdint>
#include <vector>

namespace nwrap {

struct GrayBitstream {
  std::vector<uint8_t> bytes;   // entropy-coded payload only
  uint64_t payload_bits = 0;    // exact number of coded bits
  int width = 0;
  int height = 0;
  int qf = 0;
};

/// Quality-scaled 8x8 luminance quantization table (values clamped to
/// [1, 255]); qf in [1, 100], larger is finer.
std::vector<int> gray_quant_table(int qf);

/// Encodes one 8-bit plane (values <= 255). Extents are padded to blocks of
/// 8 by edge replication before coding.
GrayBitstream baseline_gray_encode(const std::vector<uint16_t>& plane, int width,
                                   int height, int qf);

/// Decodes back to the quantized reconstruction (exactly the values the
/// encoder's dequantize + inverse transform produce).
std::vector<uint16_t> baseline_gray_decode(const GrayBitstream& bs);

}  // namespace nwrap
