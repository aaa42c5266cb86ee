#include "nwrap/frame.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace nwrap {

namespace {

constexpr double kPsnrCap = 100.0;

void check_frame_geometry(int width, int height, int bit_depth) {
  if (width < 2 || height < 2 || width % 2 || height % 2)
    throw std::invalid_argument("frame extents must be positive and even, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  if (bit_depth != 8 && bit_depth != 10)
    throw std::invalid_argument("bit depth must be 8 or 10, got " +
                                std::to_string(bit_depth));
}

int64_t frame_bytes(int width, int height, int bit_depth) {
  const int64_t samples = static_cast<int64_t>(width) * height * 3 / 2;
  return bit_depth == 8 ? samples : samples * 2;
}

void read_plane(std::ifstream& in, std::vector<uint16_t>& plane, size_t n,
                int bit_depth, const std::string& path, int64_t& offset) {
  plane.resize(n);
  if (bit_depth == 8) {
    std::vector<uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    for (size_t i = 0; i < n; ++i) plane[i] = raw[i];
    offset += static_cast<int64_t>(n);
  } else {
    std::vector<uint8_t> raw(n * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
    for (size_t i = 0; i < n; ++i) {
      const uint16_t v = static_cast<uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
      if (v > 1023)
        throw std::runtime_error(path + ": 10-bit sample " + std::to_string(v) +
                                 " out of range at byte offset " +
                                 std::to_string(offset + static_cast<int64_t>(2 * i)));
      plane[i] = v;
    }
    offset += static_cast<int64_t>(n * 2);
  }
}

void write_plane(std::ofstream& out, const std::vector<uint16_t>& plane, int bit_depth) {
  if (bit_depth == 8) {
    std::vector<uint8_t> raw(plane.size());
    for (size_t i = 0; i < plane.size(); ++i) raw[i] = static_cast<uint8_t>(plane[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<uint8_t> raw(plane.size() * 2);
    for (size_t i = 0; i < plane.size(); ++i) {
      raw[2 * i] = static_cast<uint8_t>(plane[i] & 0xff);
      raw[2 * i + 1] = static_cast<uint8_t>(plane[i] >> 8);
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
  }
}

double plane_mse(const std::vector<uint16_t>& a, const std::vector<uint16_t>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double mse_to_psnr(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

Tensor plane_to_unit(const std::vector<uint16_t>& plane, int h, int w, int max_value) {
  std::vector<double> v(plane.size());
  const double s = 2.0 / max_value;
  for (size_t i = 0; i < plane.size(); ++i) v[i] = s * plane[i] - 1.0;
  return Tensor(Shape{1, h, w}, std::move(v));
}

std::vector<uint16_t> unit_to_plane(const Tensor& t, int max_value) {
  std::vector<uint16_t> out(t.value().size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double c = std::clamp(t.value()[i], -1.0, 1.0);
    out[i] = static_cast<uint16_t>(std::lround((c + 1.0) * 0.5 * max_value));
  }
  return out;
}

}  // namespace

FrameYUV420 FrameYUV420::filled(int width, int height, int bit_depth, uint16_t luma,
                                uint16_t chroma) {
  check_frame_geometry(width, height, bit_depth);
  FrameYUV420 f;
  f.width = width;
  f.height = height;
  f.bit_depth = bit_depth;
  f.y.assign(static_cast<size_t>(width) * height, luma);
  f.u.assign(static_cast<size_t>(width / 2) * (height / 2), chroma);
  f.v.assign(static_cast<size_t>(width / 2) * (height / 2), chroma);
  return f;
}

Sequence read_yuv420(const std::string& path, int width, int height, int bit_depth,
                     int max_frames) {
  check_frame_geometry(width, height, bit_depth);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  in.seekg(0, std::ios::end);
  const int64_t file_size = in.tellg();
  in.seekg(0);
  const int64_t per_frame = frame_bytes(width, height, bit_depth);
  if (file_size % per_frame != 0)
    throw std::runtime_error(path + ": size " + std::to_string(file_size) +
                             " is not a whole number of frames; last full frame ends at byte " +
                             std::to_string((file_size / per_frame) * per_frame));
  int64_t n_frames = file_size / per_frame;
  if (n_frames == 0) throw std::runtime_error(path + ": no frames");
  if (max_frames > 0) n_frames = std::min<int64_t>(n_frames, max_frames);

  Sequence seq;
  int64_t offset = 0;
  const size_t ny = static_cast<size_t>(width) * height;
  const size_t nc = static_cast<size_t>(width / 2) * (height / 2);
  for (int64_t f = 0; f < n_frames; ++f) {
    FrameYUV420 frame;
    frame.width = width;
    frame.height = height;
    frame.bit_depth = bit_depth;
    read_plane(in, frame.y, ny, bit_depth, path, offset);
    read_plane(in, frame.u, nc, bit_depth, path, offset);
    read_plane(in, frame.v, nc, bit_depth, path, offset);
    if (!in)
      throw std::runtime_error(path + ": truncated read at byte offset " +
                               std::to_string(offset));
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void write_yuv420(const Sequence& seq, const std::string& path) {
  if (seq.frames.empty()) throw std::invalid_argument("refusing to write empty sequence");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& f : seq.frames) {
    write_plane(out, f.y, f.bit_depth);
    write_plane(out, f.u, f.bit_depth);
    write_plane(out, f.v, f.bit_depth);
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

namespace {

int ppm_token(std::ifstream& in, const std::string& path) {
  // skips whitespace and '#' comments between header fields
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c))
    throw std::runtime_error(path + ": malformed PPM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

FrameYUV420 load_image_as_yuv420(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6')
    throw std::runtime_error(path + ": malformed PPM header (expected P6)");
  const int w_in = ppm_token(in, path);
  const int h_in = ppm_token(in, path);
  const int maxval = ppm_token(in, path);
  if (maxval != 255)
    throw std::runtime_error(path + ": only maxval 255 PPM is supported");
  const int width = w_in & ~1;
  const int height = h_in & ~1;
  if (width < 2 || height < 2)
    throw std::runtime_error(path + ": image too small after even-crop");

  std::vector<uint8_t> rgb(static_cast<size_t>(w_in) * h_in * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!in) throw std::runtime_error(path + ": truncated pixel data");

  FrameYUV420 f;
  f.width = width;
  f.height = height;
  f.bit_depth = 8;
  f.y.resize(static_cast<size_t>(width) * height);
  f.u.resize(static_cast<size_t>(width / 2) * (height / 2));
  f.v.resize(f.u.size());

  // BT.709 limited range
  std::vector<double> cb(f.y.size()), cr(f.y.size());
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const size_t p = (static_cast<size_t>(i) * w_in + j) * 3;
      const double r = rgb[p] / 255.0;
      const double gch = rgb[p + 1] / 255.0;
      const double b = rgb[p + 2] / 255.0;
      const double ey = 0.2126 * r + 0.7152 * gch + 0.0722 * b;
      const size_t q = static_cast<size_t>(i) * width + j;
      f.y[q] = static_cast<uint16_t>(std::clamp(std::lround(16.0 + 219.0 * ey), 0L, 255L));
      cb[q] = (b - ey) / 1.8556;
      cr[q] = (r - ey) / 1.5748;
    }
  }
  for (int i = 0; i < height / 2; ++i) {
    for (int j = 0; j < width / 2; ++j) {
      const size_t q0 = static_cast<size_t>(2 * i) * width + 2 * j;
      const size_t q1 = q0 + width;
      const double cb4 = (cb[q0] + cb[q0 + 1] + cb[q1] + cb[q1 + 1]) / 4.0;
      const double cr4 = (cr[q0] + cr[q0 + 1] + cr[q1] + cr[q1 + 1]) / 4.0;
      const size_t q = static_cast<size_t>(i) * (width / 2) + j;
      f.u[q] = static_cast<uint16_t>(std::clamp(std::lround(128.0 + 224.0 * cb4), 0L, 255L));
      f.v[q] = static_cast<uint16_t>(std::clamp(std::lround(128.0 + 224.0 * cr4), 0L, 255L));
    }
  }
  return f;
}

PsnrResult psnr_yuv(const FrameYUV420& a, const FrameYUV420& b, PsnrWeighting weighting) {
  if (a.width != b.width || a.height != b.height || a.bit_depth != b.bit_depth)
    throw std::invalid_argument("psnr_yuv: geometry mismatch " + std::to_string(a.width) +
                                "x" + std::to_string(a.height) + "/" +
                                std::to_string(a.bit_depth) + "b vs " +
                                std::to_string(b.width) + "x" + std::to_string(b.height) +
                                "/" + std::to_string(b.bit_depth) + "b");
  const double peak = a.max_value();
  const double my = plane_mse(a.y, b.y);
  const double mu = plane_mse(a.u, b.u);
  const double mv = plane_mse(a.v, b.v);
  PsnrResult r;
  r.y = mse_to_psnr(my, peak);
  r.u = mse_to_psnr(mu, peak);
  r.v = mse_to_psnr(mv, peak);
  r.weighted = weighting == PsnrWeighting::WeightedPsnr
                   ? (6.0 * r.y + r.u + r.v) / 8.0
                   : mse_to_psnr((6.0 * my + mu + mv) / 8.0, peak);
  return r;
}

PsnrResult psnr_yuv(const Sequence& a, const Sequence& b, PsnrWeighting weighting) {
  if (a.frames.size() != b.frames.size() || a.frames.empty())
    throw std::invalid_argument("psnr_yuv: sequences must be non-empty and equal length");
  // average MSE across frames, then convert once
  double my = 0, mu = 0, mv = 0;
  const double peak = a.frames.front().max_value();
  for (size_t i = 0; i < a.frames.size(); ++i) {
    const auto& fa = a.frames[i];
    const auto& fb = b.frames[i];
    if (fa.width != fb.width || fa.height != fb.height || fa.bit_depth != fb.bit_depth)
      throw std::invalid_argument("psnr_yuv: frame " + std::to_string(i) +
                                  " geometry mismatch");
    my += plane_mse(fa.y, fb.y);
    mu += plane_mse(fa.u, fb.u);
    mv += plane_mse(fa.v, fb.v);
  }
  const double n = static_cast<double>(a.frames.size());
  my /= n;
  mu /= n;
  mv /= n;
  PsnrResult r;
  r.y = mse_to_psnr(my, peak);
  r.u = mse_to_psnr(mu, peak);
  r.v = mse_to_psnr(mv, peak);
  r.weighted = weighting == PsnrWeighting::WeightedPsnr
                   ? (6.0 * r.y + r.u + r.v) / 8.0
                   : mse_to_psnr((6.0 * my + mu + mv) / 8.0, peak);
  return r;
}

PlaneTensors normalize(const FrameYUV420& f) {
  PlaneTensors t;
  t.y = plane_to_unit(f.y, f.height, f.width, f.max_value());
  t.u = plane_to_unit(f.u, f.chroma_height(), f.chroma_width(), f.max_value());
  t.v = plane_to_unit(f.v, f.chroma_height(), f.chroma_width(), f.max_value());
  return t;
}

FrameYUV420 denormalize(const PlaneTensors& t, int bit_depth) {
  const int h = t.y.dim(1), w = t.y.dim(2);
  check_frame_geometry(w, h, bit_depth);
  if (t.u.dim(1) != h / 2 || t.u.dim(2) != w / 2 || t.v.shape() != t.u.shape())
    throw std::invalid_argument("denormalize: chroma tensors must be half-extent, got " +
                                shape_str(t.u.shape()));
  FrameYUV420 f;
  f.width = w;
  f.height = h;
  f.bit_depth = bit_depth;
  f.y = unit_to_plane(t.y, f.max_value());
  f.u = unit_to_plane(t.u, f.max_value());
  f.v = unit_to_plane(t.v, f.max_value());
  return f;
}

FrameYUV420 convert_bit_depth(const FrameYUV420& f, int bit_depth) {
  if (f.bit_depth == bit_depth) return f;
  return denormalize(normalize(f), bit_depth);
}

}  // namespace nwrap
