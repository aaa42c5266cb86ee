// Orthonormal 2D DCT-II over square blocks, as one matrix per block size.
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace nwrap::dct {

inline std::vector<double> basis_matrix(int L) {
  std::vector<double> m(static_cast<size_t>(L) * L);
  for (int u = 0; u < L; ++u) {
    const double c = u == 0 ? std::sqrt(1.0 / L) : std::sqrt(2.0 / L);
    for (int i = 0; i < L; ++i)
      m[static_cast<size_t>(u) * L + i] =
          c * std::cos((2 * i + 1) * u * std::numbers::pi / (2.0 * L));
  }
  return m;
}

inline const std::vector<double>& cached_basis(int L) {
  static const std::vector<double> m4 = basis_matrix(4);
  static const std::vector<double> m8 = basis_matrix(8);
  static const std::vector<double> m16 = basis_matrix(16);
  static const std::vector<double> m32 = basis_matrix(32);
  switch (L) {
    case 4: return m4;
    case 8: return m8;
    case 16: return m16;
    case 32: return m32;
    default: {
      static thread_local std::vector<double> other;
      other = basis_matrix(L);
      return other;
    }
  }
}

// out = M . block . M^T (forward) or M^T . block . M (inverse)
inline void transform_block(const double* x, int stride, int L, const double* m,
                            bool inverse, double* out, int out_stride) {
  thread_local std::vector<double> tmp;
  tmp.resize(static_cast<size_t>(L) * L);
  for (int u = 0; u < L; ++u)
    for (int j = 0; j < L; ++j) {
      double acc = 0.0;
      for (int i = 0; i < L; ++i) {
        const double a = inverse ? m[static_cast<size_t>(i) * L + u]
                                 : m[static_cast<size_t>(u) * L + i];
        acc += a * x[i * stride + j];
      }
      tmp[static_cast<size_t>(u) * L + j] = acc;
    }
  for (int u = 0; u < L; ++u)
    for (int v = 0; v < L; ++v) {
      double acc = 0.0;
      for (int j = 0; j < L; ++j) {
        const double a = inverse ? m[static_cast<size_t>(j) * L + v]
                                 : m[static_cast<size_t>(v) * L + j];
        acc += tmp[static_cast<size_t>(u) * L + j] * a;
      }
      out[u * out_stride + v] = acc;
    }
}

// whole-plane helper; extents must divide by L
inline void transform_plane(const double* x, int H, int W, int L, bool inverse,
                            double* out) {
  const auto& m = cached_basis(L);
  for (int bi = 0; bi < H; bi += L)
    for (int bj = 0; bj < W; bj += L)
      transform_block(x + static_cast<size_t>(bi) * W + bj, W, L, m.data(), inverse,
                      out + static_cast<size_t>(bi) * W + bj, W);
}

}  // namespace nwrap::dct
