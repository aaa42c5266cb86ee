// Raw 4:2:0 video ingestion, PPM stills, color conversion and quality metrics.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nwrap/tensor.hpp"

namespace nwrap {

/// One planar 4:2:0 frame. Samples are stored as uint16 regardless of depth;
/// every value must fit the declared bit depth and extents must be even.
struct FrameYUV420 {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8 or 10
  std::vector<uint16_t> y, u, v;

  int chroma_width() const { return width / 2; }
  int chroma_height() const { return height / 2; }
  int max_value() const { return (1 << bit_depth) - 1; }
  static FrameYUV420 filled(int width, int height, int bit_depth, uint16_t luma,
                            uint16_t chroma);
};

struct Sequence {
  std::vector<FrameYUV420> frames;
  uint32_t fps_num = 30;
  uint32_t fps_den = 1;

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int bit_depth() const { return frames.empty() ? 0 : frames.front().bit_depth; }
  double fps() const { return static_cast<double>(fps_num) / fps_den; }
};

/// Reads a raw planar YUV 4:2:0 file (Y then U then V per frame). 10-bit
/// samples are 2 bytes little-endian, values <= 1023. max_frames = 0 reads
/// the whole file. Throws on truncated files (reporting the byte offset)
/// and on out-of-range 10-bit samples.
Sequence read_yuv420(const std::string& path, int width, int height, int bit_depth,
                     int max_frames = 0);
void write_yuv420(const Sequence& seq, const std::string& path);

/// Loads a binary PPM (P6, maxval 255) and converts to BT.709 limited-range
/// YUV 4:2:0 with 2x2 box-averaged chroma. Odd extents lose one row/column.
FrameYUV420 load_image_as_yuv420(const std::string& path);

enum class PsnrWeighting {
  WeightedPsnr,  // (6*psnr_y + psnr_u + psnr_v) / 8
  WeightedMse,   // psnr of (6*mse_y + mse_u + mse_v) / 8
};

struct PsnrResult {
  double y = 0, u = 0, v = 0, weighted = 0;
};

/// Per-plane PSNR against peak 2^depth - 1, capped at 100 dB for identical
/// planes so rate-distortion curves stay finite.
PsnrResult psnr_yuv(const FrameYUV420& a, const FrameYUV420& b,
                    PsnrWeighting weighting = PsnrWeighting::WeightedPsnr);
PsnrResult psnr_yuv(const Sequence& a, const Sequence& b,
                    PsnrWeighting weighting = PsnrWeighting::WeightedPsnr);

struct PlaneTensors {
  Tensor y, u, v;
};

/// Maps integer samples affinely onto [-1, 1].
PlaneTensors normalize(const FrameYUV420& f);
/// Clips to [-1, 1], rescales to [0, 2^depth - 1] and rounds to nearest,
/// ties away from zero.
FrameYUV420 denormalize(const PlaneTensors& t, int bit_depth);

/// normalize/denormalize through the target depth in one rounding step.
FrameYUV420 convert_bit_depth(const FrameYUV420& f, int bit_depth);

}  // namespace nwrap
