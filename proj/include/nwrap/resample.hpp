// Linear resamplers for the four resolution modes and the pixel-shuffle
// packing that feeds the upsampling network.
#pragma once

#include <array>
#include <string>

#include "nwrap/frame.hpp"
#include "nwrap/tensor.hpp"

namespace nwrap {

/// Resolution scale a/b from the fixed set {1/1, 1/2, 2/3, 1/4}, indexed
/// k = 1..4 as signaled in the container.
struct Ratio {
  int num = 1;
  int den = 1;
  int index = 1;

  bool identity() const { return num == den; }
  int scale_extent(int v) const { return v * num / den; }
  int invert_extent(int v) const { return v * den / num; }
  std::string str() const;
  bool operator==(const Ratio&) const = default;
};

const std::array<Ratio, 4>& all_ratios();
Ratio ratio_from_index(int k);
/// Parses "1", "1/1", "1/2", "2/3" or "1/4".
Ratio ratio_parse(const std::string& text);

/// Source extents must be divisible by this before the ratio (and the
/// two-level half-resolution network) apply cleanly.
int pad_modulus(const Ratio& r);
/// Replicates the right/bottom border up to the next multiple of the modulus.
FrameYUV420 pad_frame_replicate(const FrameYUV420& f, int modulus);
FrameYUV420 crop_frame(const FrameYUV420& f, int width, int height);

enum class Filter { Bilinear, Lanczos4 };
enum class Direction { Down, Up };

/// Scales all three planes by the ratio (Down: H -> aH/b, Up: the inverse).
/// Extents must divide exactly; pad_frame_replicate first if they do not.
FrameYUV420 resample_frame(const FrameYUV420& f, const Ratio& r, Filter filter,
                           Direction dir);
/// Same, but rounds once into the requested output depth.
FrameYUV420 resample_frame_to_depth(const FrameYUV420& f, const Ratio& r, Filter filter,
                                    Direction dir, int out_depth);

/// Lanczos-4 tap weights for one output position; exposed so the
/// partition-of-unity property is testable. Weights sum to 1.
std::vector<double> lanczos4_weights(int in_extent, int out_extent, int out_index,
                                     std::vector<int>* taps);

/// Repacks a decoded reduced-resolution frame into the 6-channel network
/// input at half the full resolution: planes are bilinearly resized to full
/// scale, luma is split 2x2 into 4 channels (TL,TR,BL,BR), chroma appended,
/// everything normalized to [-1, 1].
Tensor pack_bottleneck(const FrameYUV420& bottleneck, const Ratio& r);

}  // namespace nwrap
