#include "nwrap/resample.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "kernels.hpp"
#include "planes.hpp"

namespace nwrap {

namespace {

const std::array<Ratio, 4> kRatios = {Ratio{1, 1, 1}, Ratio{1, 2, 2}, Ratio{2, 3, 3},
                                      Ratio{1, 4, 4}};

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::vector<float> resize_plane(const std::vector<float>& in, int h, int w, int oh,
                                int ow, Filter filter) {
  if (filter == Filter::Bilinear) {
    std::vector<float> out(static_cast<size_t>(oh) * ow);
    kern::bilinear_resize_plane(in.data(), h, w, out.data(), oh, ow);
    return out;
  }
  // Lanczos-4, separable, horizontal pass then vertical
  std::vector<float> mid(static_cast<size_t>(h) * ow);
  for (int o = 0; o < ow; ++o) {
    std::vector<int> taps;
    const auto wts = lanczos4_weights(w, ow, o, &taps);
    for (int i = 0; i < h; ++i) {
      double acc = 0.0;
      for (size_t t = 0; t < taps.size(); ++t)
        acc += wts[t] * in[static_cast<size_t>(i) * w + taps[t]];
      mid[static_cast<size_t>(i) * ow + o] = static_cast<float>(acc);
    }
  }
  std::vector<float> out(static_cast<size_t>(oh) * ow);
  for (int o = 0; o < oh; ++o) {
    std::vector<int> taps;
    const auto wts = lanczos4_weights(h, oh, o, &taps);
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (size_t t = 0; t < taps.size(); ++t)
        acc += wts[t] * mid[static_cast<size_t>(taps[t]) * ow + j];
      out[static_cast<size_t>(o) * ow + j] = static_cast<float>(acc);
    }
  }
  return out;
}

void check_ratio(const Ratio& r) {
  for (const auto& known : kRatios)
    if (known == r) return;
  throw std::invalid_argument("unsupported ratio " + r.str());
}

}  // namespace

std::string Ratio::str() const {
  return std::to_string(num) + "/" + std::to_string(den);
}

const std::array<Ratio, 4>& all_ratios() { return kRatios; }

Ratio ratio_from_index(int k) {
  if (k < 1 || k > 4)
    throw std::invalid_argument("ratio index must be 1..4, got " + std::to_string(k));
  return kRatios[static_cast<size_t>(k - 1)];
}

Ratio ratio_parse(const std::string& text) {
  if (text == "1" || text == "1/1") return kRatios[0];
  if (text == "1/2") return kRatios[1];
  if (text == "2/3") return kRatios[2];
  if (text == "1/4") return kRatios[3];
  throw std::invalid_argument("unsupported ratio \"" + text +
                              "\" (expected 1, 1/2, 2/3 or 1/4)");
}

int pad_modulus(const Ratio& r) {
  check_ratio(r);
  // the 2/3 mode needs extents divisible by 3 on both the full and half grid;
  // everything needs the two half-resolution stride-2 levels to stay integral
  return r.den == 3 ? 24 : 8;
}

FrameYUV420 pad_frame_replicate(const FrameYUV420& f, int modulus) {
  if (modulus < 2 || modulus % 2)
    throw std::invalid_argument("pad modulus must be even, got " + std::to_string(modulus));
  const int w = (f.width + modulus - 1) / modulus * modulus;
  const int h = (f.height + modulus - 1) / modulus * modulus;
  if (w == f.width && h == f.height) return f;
  auto pad_plane = [](const std::vector<uint16_t>& p, int pw, int ph, int nw, int nh) {
    std::vector<uint16_t> out(static_cast<size_t>(nw) * nh);
    for (int i = 0; i < nh; ++i) {
      const int si = std::min(i, ph - 1);
      for (int j = 0; j < nw; ++j)
        out[static_cast<size_t>(i) * nw + j] =
            p[static_cast<size_t>(si) * pw + std::min(j, pw - 1)];
    }
    return out;
  };
  FrameYUV420 out;
  out.width = w;
  out.height = h;
  out.bit_depth = f.bit_depth;
  out.y = pad_plane(f.y, f.width, f.height, w, h);
  out.u = pad_plane(f.u, f.chroma_width(), f.chroma_height(), w / 2, h / 2);
  out.v = pad_plane(f.v, f.chroma_width(), f.chroma_height(), w / 2, h / 2);
  return out;
}

FrameYUV420 crop_frame(const FrameYUV420& f, int width, int height) {
  if (width > f.width || height > f.height || width % 2 || height % 2 || width < 2 ||
      height < 2)
    throw std::invalid_argument("crop_frame: bad target " + std::to_string(width) + "x" +
                                std::to_string(height) + " from " +
                                std::to_string(f.width) + "x" + std::to_string(f.height));
  if (width == f.width && height == f.height) return f;
  auto crop_plane = [](const std::vector<uint16_t>& p, int pw, int nw, int nh) {
    std::vector<uint16_t> out(static_cast<size_t>(nw) * nh);
    for (int i = 0; i < nh; ++i)
      std::copy_n(p.begin() + static_cast<size_t>(i) * pw, nw,
                  out.begin() + static_cast<size_t>(i) * nw);
    return out;
  };
  FrameYUV420 out;
  out.width = width;
  out.height = height;
  out.bit_depth = f.bit_depth;
  out.y = crop_plane(f.y, f.width, width, height);
  out.u = crop_plane(f.u, f.chroma_width(), width / 2, height / 2);
  out.v = crop_plane(f.v, f.chroma_width(), width / 2, height / 2);
  return out;
}

std::vector<double> lanczos4_weights(int in_extent, int out_extent, int out_index,
                                     std::vector<int>* taps) {
  const double scale = static_cast<double>(out_extent) / in_extent;
  const double center = (out_index + 0.5) / scale - 0.5;
  const double kscale = scale < 1.0 ? scale : 1.0;
  const double support = 4.0 / kscale;
  const int first = static_cast<int>(std::ceil(center - support));
  const int last = static_cast<int>(std::floor(center + support));
  std::vector<double> weights;
  taps->clear();
  double total = 0.0;
  for (int i = first; i <= last; ++i) {
    const double t = (i - center) * kscale;
    if (std::abs(t) >= 4.0) continue;
    const double w = sinc(t) * sinc(t / 4.0);
    weights.push_back(w);
    taps->push_back(std::clamp(i, 0, in_extent - 1));  // edge replication
    total += w;
  }
  for (double& w : weights) w /= total;
  return weights;
}

FrameYUV420 resample_frame_to_depth(const FrameYUV420& f, const Ratio& r, Filter filter,
                                    Direction dir, int out_depth) {
  check_ratio(r);
  int ow, oh;
  if (dir == Direction::Down) {
    if ((f.width % (2 * r.den)) || (f.height % (2 * r.den)))
      throw std::invalid_argument("resample_frame: " + std::to_string(f.width) + "x" +
                                  std::to_string(f.height) + " not divisible for ratio " +
                                  r.str() + "; pad_frame_replicate first");
    ow = r.scale_extent(f.width);
    oh = r.scale_extent(f.height);
  } else {
    if ((f.width * r.den) % (2 * r.num) || (f.height * r.den) % (2 * r.num))
      throw std::invalid_argument("resample_frame: bottleneck " + std::to_string(f.width) +
                                  "x" + std::to_string(f.height) +
                                  " does not invert for ratio " + r.str());
    ow = r.invert_extent(f.width);
    oh = r.invert_extent(f.height);
  }
  if (r.identity() && out_depth == f.bit_depth) return f;

  FrameYUV420 out;
  out.width = ow;
  out.height = oh;
  out.bit_depth = out_depth;
  const int in_max = f.max_value();
  const int out_max = (1 << out_depth) - 1;
  auto run = [&](const std::vector<uint16_t>& p, int ph, int pw, int th, int tw) {
    const auto unit = planes::to_unit(p, in_max);
    if (th == ph && tw == pw && filter == Filter::Bilinear)
      return planes::from_unit(unit, out_max);
    return planes::from_unit(resize_plane(unit, ph, pw, th, tw, filter), out_max);
  };
  out.y = run(f.y, f.height, f.width, oh, ow);
  out.u = run(f.u, f.chroma_height(), f.chroma_width(), oh / 2, ow / 2);
  out.v = run(f.v, f.chroma_height(), f.chroma_width(), oh / 2, ow / 2);
  return out;
}

FrameYUV420 resample_frame(const FrameYUV420& f, const Ratio& r, Filter filter,
                           Direction dir) {
  return resample_frame_to_depth(f, r, filter, dir, f.bit_depth);
}

Tensor pack_bottleneck(const FrameYUV420& bottleneck, const Ratio& r) {
  check_ratio(r);
  if ((bottleneck.width * r.den) % (2 * r.num) || (bottleneck.height * r.den) % (2 * r.num))
    throw std::invalid_argument("pack_bottleneck: extents " +
                                std::to_string(bottleneck.width) + "x" +
                                std::to_string(bottleneck.height) +
                                " inconsistent with ratio " + r.str());
  const int W = r.invert_extent(bottleneck.width);
  const int H = r.invert_extent(bottleneck.height);
  PlaneTensors t = normalize(bottleneck);
  Tensor y_full = r.identity() ? t.y : bilinear_resize(t.y, H, W);
  Tensor u_full = r.identity() ? t.u : bilinear_resize(t.u, H / 2, W / 2);
  Tensor v_full = r.identity() ? t.v : bilinear_resize(t.v, H / 2, W / 2);
  std::vector<Tensor> parts{space_to_depth2(y_full), u_full, v_full};
  return concat_channels(parts);
}

}  // namespace nwrap
