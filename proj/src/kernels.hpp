// Scalar conv/resize kernels shared by the f64 training ops and the f32
// inference runner. Layout is channels-first, row-major, W contiguous.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace nwrap::kern {

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void dwconv2d(const T* x, int C, int H, int W, const T* k, int kh, int kw,
              int stride, int pad, T* out, int oH, int oW) {
  for (int c = 0; c < C; ++c) {
    const T* xc = x + static_cast<int64_t>(c) * H * W;
    const T* kc = k + static_cast<int64_t>(c) * kh * kw;
    T* oc = out + static_cast<int64_t>(c) * oH * oW;
    for (int oi = 0; oi < oH; ++oi) {
      for (int oj = 0; oj < oW; ++oj) {
        T acc = 0;
        const int i0 = oi * stride - pad;
        const int j0 = oj * stride - pad;
        for (int di = 0; di < kh; ++di) {
          const int i = i0 + di;
          if (i < 0 || i >= H) continue;
          for (int dj = 0; dj < kw; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= W) continue;
            acc += kc[di * kw + dj] * xc[i * W + j];
          }
        }
        oc[oi * oW + oj] = acc;
      }
    }
  }
}

template <typename T>
void pwconv2d(const T* x, int Cin, int64_t hw, const T* k, const T* b, int Cout,
              T* out) {
  for (int co = 0; co < Cout; ++co) {
    T* oc = out + co * hw;
    const T bias = b ? b[co] : T(0);
    std::fill(oc, oc + hw, bias);
    for (int ci = 0; ci < Cin; ++ci) {
      const T w = k[co * Cin + ci];
      if (w == T(0)) continue;
      const T* xc = x + ci * hw;
      for (int64_t p = 0; p < hw; ++p) oc[p] += w * xc[p];
    }
  }
}

// full conv, kernel extent == stride, no padding
template <typename T>
void sconv2d(const T* x, int Cin, int H, int W, const T* k, const T* b,
             int Cout, int s, T* out) {
  const int oH = H / s, oW = W / s;
  for (int co = 0; co < Cout; ++co) {
    T* oc = out + static_cast<int64_t>(co) * oH * oW;
    const T bias = b ? b[co] : T(0);
    for (int oi = 0; oi < oH; ++oi)
      for (int oj = 0; oj < oW; ++oj) {
        T acc = bias;
        for (int ci = 0; ci < Cin; ++ci) {
          const T* xc = x + static_cast<int64_t>(ci) * H * W;
          const T* kc = k + ((static_cast<int64_t>(co) * Cin + ci) * s) * s;
          for (int di = 0; di < s; ++di)
            for (int dj = 0; dj < s; ++dj)
              acc += kc[di * s + dj] * xc[(oi * s + di) * W + oj * s + dj];
        }
        oc[oi * oW + oj] = acc;
      }
  }
}

// full 3x3 conv, stride 1, same padding
template <typename T>
void conv3x3_same(const T* x, int Cin, int H, int W, const T* k, const T* b, int Cout,
                  T* out) {
  for (int co = 0; co < Cout; ++co) {
    T* oc = out + static_cast<int64_t>(co) * H * W;
    const T bias = b ? b[co] : T(0);
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        T acc = bias;
        for (int ci = 0; ci < Cin; ++ci) {
          const T* xc = x + static_cast<int64_t>(ci) * H * W;
          const T* kc = k + (static_cast<int64_t>(co) * Cin + ci) * 9;
          for (int di = -1; di <= 1; ++di) {
            const int ii = i + di;
            if (ii < 0 || ii >= H) continue;
            for (int dj = -1; dj <= 1; ++dj) {
              const int jj = j + dj;
              if (jj < 0 || jj >= W) continue;
              acc += kc[(di + 1) * 3 + dj + 1] * xc[ii * W + jj];
            }
          }
        }
        oc[i * W + j] = acc;
      }
  }
}

// transposed conv, kernel extent == stride: every output pixel has one tap
template <typename T>
void tconv2d(const T* x, int Cin, int H, int W, const T* k, const T* b,
             int Cout, int s, T* out) {
  const int oH = H * s, oW = W * s;
  for (int co = 0; co < Cout; ++co) {
    T* oc = out + static_cast<int64_t>(co) * oH * oW;
    const T bias = b ? b[co] : T(0);
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int di = 0; di < s; ++di)
          for (int dj = 0; dj < s; ++dj) {
            T acc = bias;
            for (int ci = 0; ci < Cin; ++ci) {
              acc += k[((static_cast<int64_t>(co) * Cin + ci) * s + di) * s + dj] *
                     x[(static_cast<int64_t>(ci) * H + i) * W + j];
            }
            oc[(i * s + di) * oW + j * s + dj] = acc;
          }
  }
}

struct ResizeTap {
  int i0, i1;
  double w;  // weight of i1; i0 gets 1-w
};

inline std::vector<ResizeTap> bilinear_taps(int in, int out) {
  std::vector<ResizeTap> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double f = std::floor(src);
    double w = src - f;
    int i0 = static_cast<int>(f);
    int i1 = i0 + 1;
    if (i0 < 0) { i0 = 0; i1 = 0; w = 0.0; }
    if (i1 > in - 1) { i1 = in - 1; if (i0 > in - 1) i0 = in - 1; }
    taps[static_cast<size_t>(o)] = {i0, i1, w};
  }
  return taps;
}

template <typename T>
void bilinear_resize_plane(const T* x, int H, int W, T* out, int oH, int oW) {
  const auto rows = bilinear_taps(H, oH);
  const auto cols = bilinear_taps(W, oW);
  for (int oi = 0; oi < oH; ++oi) {
    const auto& r = rows[static_cast<size_t>(oi)];
    const T wr = static_cast<T>(r.w);
    const T* top = x + static_cast<int64_t>(r.i0) * W;
    const T* bot = x + static_cast<int64_t>(r.i1) * W;
    T* o = out + static_cast<int64_t>(oi) * oW;
    for (int oj = 0; oj < oW; ++oj) {
      const auto& c = cols[static_cast<size_t>(oj)];
      const T wc = static_cast<T>(c.w);
      const T a = top[c.i0] + wc * (top[c.i1] - top[c.i0]);
      const T bv = bot[c.i0] + wc * (bot[c.i1] - bot[c.i0]);
      o[oj] = a + wr * (bv - a);
    }
  }
}

template <typename T>
void space_to_depth2(const T* x, int C, int H, int W, T* out) {
  const int oH = H / 2, oW = W / 2;
  for (int c = 0; c < C; ++c)
    for (int q = 0; q < 4; ++q) {
      const int di = q / 2, dj = q % 2;
      T* oc = out + (static_cast<int64_t>(c) * 4 + q) * oH * oW;
      const T* xc = x + static_cast<int64_t>(c) * H * W;
      for (int i = 0; i < oH; ++i)
        for (int j = 0; j < oW; ++j)
          oc[i * oW + j] = xc[(2 * i + di) * W + 2 * j + dj];
    }
}

template <typename T>
void depth_to_space2(const T* x, int C4, int H, int W, T* out) {
  const int C = C4 / 4, oH = H * 2, oW = W * 2;
  for (int c = 0; c < C; ++c)
    for (int q = 0; q < 4; ++q) {
      const int di = q / 2, dj = q % 2;
      const T* xc = x + (static_cast<int64_t>(c) * 4 + q) * H * W;
      T* oc = out + static_cast<int64_t>(c) * oH * oW;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          oc[(2 * i + di) * oW + 2 * j + dj] = xc[i * W + j];
    }
}

}  // namespace nwrap::kern
