// f32 plane conversions shared by the resamplers and the inference runner.
// Both sides must round identically so the residual-zero network reproduces
// plain bilinear upsampling bit for bit.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace nwrap::planes {

inline std::vector<float> to_unit(const std::vector<uint16_t>& plane, int max_value) {
  std::vector<float> out(plane.size());
  const float s = 2.0f / static_cast<float>(max_value);
  for (size_t i = 0; i < plane.size(); ++i)
    out[i] = s * static_cast<float>(plane[i]) - 1.0f;
  return out;
}

inline std::vector<uint16_t> from_unit(const std::vector<float>& unit, int max_value) {
  std::vector<uint16_t> out(unit.size());
  for (size_t i = 0; i < unit.size(); ++i) {
    const double c = std::clamp(static_cast<double>(unit[i]), -1.0, 1.0);
    out[i] = static_cast<uint16_t>(std::lround((c + 1.0) * 0.5 * max_value));
  }
  return out;
}

}  // namespace nwrap::planes
