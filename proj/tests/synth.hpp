// Deterministic synthetic content for the test suites: smooth gradients,
// soft blobs and low-frequency gratings with a touch of noise, so transform
// coders see something statistically closer to camera footage than white
// noise.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include "nwrap/frame.hpp"

namespace synth {

struct Field {
  int w, h;
  std::vector<double> v;  // roughly [0, 1]
};

inline Field smooth_field(std::mt19937_64& g, int w, int h, double detail = 1.0) {
  auto uni = [&g](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(g() >> 11) * 0x1.0p-53);
  };
  Field f{w, h, std::vector<double>(static_cast<size_t>(w) * h, 0.0)};
  const double gx = uni(-0.3, 0.3), gy = uni(-0.3, 0.3), base = uni(0.3, 0.7);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      f.v[static_cast<size_t>(i) * w + j] = base + gx * (j - w / 2.0) / w + gy * (i - h / 2.0) / h;
  const int n_waves = 2 + static_cast<int>(g() % 3);
  for (int k = 0; k < n_waves; ++k) {
    const double period = uni(30.0, 160.0) / detail;
    const double angle = uni(0.0, std::numbers::pi);
    const double phase = uni(0.0, 2 * std::numbers::pi);
    const double amp = uni(0.03, 0.12);
    const double cx = std::cos(angle) * 2 * std::numbers::pi / period;
    const double cy = std::sin(angle) * 2 * std::numbers::pi / period;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        f.v[static_cast<size_t>(i) * w + j] += amp * std::sin(cx * j + cy * i + phase);
  }
  const int n_blobs = 3 + static_cast<int>(g() % 4);
  for (int k = 0; k < n_blobs; ++k) {
    const double bx = uni(0.0, w), by = uni(0.0, h);
    const double r = uni(0.08, 0.3) * std::min(w, h) / detail;
    const double amp = uni(-0.25, 0.25);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double d2 = (j - bx) * (j - bx) + (i - by) * (i - by);
        f.v[static_cast<size_t>(i) * w + j] += amp * std::exp(-d2 / (2 * r * r));
      }
  }
  for (auto& x : f.v) x = std::clamp(x + uni(-0.004, 0.004), 0.0, 1.0);
  return f;
}

inline std::vector<uint16_t> to_plane(const Field& f, int max_value) {
  std::vector<uint16_t> p(f.v.size());
  for (size_t i = 0; i < p.size(); ++i)
    p[i] = static_cast<uint16_t>(std::lround(f.v[i] * max_value));
  return p;
}

inline nwrap::FrameYUV420 frame(std::mt19937_64& g, int w, int h, int depth,
                                double detail = 1.0) {
  nwrap::FrameYUV420 f = nwrap::FrameYUV420::filled(w, h, depth, 0, 0);
  const int maxv = f.max_value();
  f.y = to_plane(smooth_field(g, w, h, detail), maxv);
  // chroma sits near mid-gray with gentle variation
  Field u = smooth_field(g, w / 2, h / 2, detail);
  Field v = smooth_field(g, w / 2, h / 2, detail);
  for (size_t i = 0; i < u.v.size(); ++i) {
    f.u[i] = static_cast<uint16_t>(std::lround((0.5 + 0.2 * (u.v[i] - 0.5)) * maxv));
    f.v[i] = static_cast<uint16_t>(std::lround((0.5 + 0.2 * (v.v[i] - 0.5)) * maxv));
  }
  return f;
}

/// Slowly panning clip built from one larger field, subpixel motion per frame.
inline nwrap::Sequence clip(std::mt19937_64& g, int w, int h, int depth, int n_frames,
                            double detail = 1.0) {
  const int mw = w + 16, mh = h + 16;
  Field fy = smooth_field(g, mw, mh, detail);
  Field fu = smooth_field(g, mw / 2, mh / 2, detail);
  Field fv = smooth_field(g, mw / 2, mh / 2, detail);
  nwrap::Sequence seq;
  const int maxv = (1 << depth) - 1;
  auto sample = [](const Field& f, double x, double y) {
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const double fx = x - x0, fy2 = y - y0;
    auto at = [&f](int i, int j) {
      return f.v[static_cast<size_t>(std::clamp(i, 0, f.h - 1)) * f.w +
                 std::clamp(j, 0, f.w - 1)];
    };
    return (1 - fy2) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
           fy2 * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
  };
  for (int t = 0; t < n_frames; ++t) {
    const double dx = 0.8 * t, dy = 0.45 * t;
    nwrap::FrameYUV420 f = nwrap::FrameYUV420::filled(w, h, depth, 0, 0);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        f.y[static_cast<size_t>(i) * w + j] =
            static_cast<uint16_t>(std::lround(sample(fy, j + dx, i + dy) * maxv));
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j) {
        f.u[static_cast<size_t>(i) * (w / 2) + j] = static_cast<uint16_t>(
            std::lround((0.5 + 0.2 * (sample(fu, j + dx / 2, i + dy / 2) - 0.5)) * maxv));
        f.v[static_cast<size_t>(i) * (w / 2) + j] = static_cast<uint16_t>(
            std::lround((0.5 + 0.2 * (sample(fv, j + dx / 2, i + dy / 2) - 0.5)) * maxv));
      }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

/// Writes a corpus of synthetic PPM stills; returns the directory.
inline std::string write_ppm_corpus(const std::string& dir, std::mt19937_64& g,
                                    int count, int w, int h) {
  std::filesystem::create_directories(dir);
  for (int n = 0; n < count; ++n) {
    Field luma = smooth_field(g, w, h);
    Field tint_r = smooth_field(g, w, h, 0.5);
    Field tint_b = smooth_field(g, w, h, 0.5);
    std::ofstream out(dir + "/img" + std::to_string(n) + ".ppm", std::ios::binary);
    out << "P6\n" << w << " " << h << "\n255\n";
    for (size_t i = 0; i < luma.v.size(); ++i) {
      const double l = luma.v[i];
      const double r = std::clamp(l + 0.15 * (tint_r.v[i] - 0.5), 0.0, 1.0);
      const double b = std::clamp(l + 0.15 * (tint_b.v[i] - 0.5), 0.0, 1.0);
      const std::array<uint8_t, 3> px = {static_cast<uint8_t>(std::lround(r * 255)),
                                         static_cast<uint8_t>(std::lround(l * 255)),
                                         static_cast<uint8_t>(std::lround(b * 255))};
      out.write(reinterpret_cast<const char*>(px.data()), 3);
    }
  }
  return dir;
}

}  // namespace synth
