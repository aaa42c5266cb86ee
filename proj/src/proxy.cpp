#include "nwrap/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dct.hpp"

namespace nwrap {

namespace {

void check_block_size(int L) {
  if (L != 4 && L != 8 && L != 16 && L != 32)
    throw std::invalid_argument("block size must be one of {4,8,16,32}, got " +
                                std::to_string(L));
}

Tensor block_transform(const Tensor& x, int L, bool inverse) {
  check_block_size(L);
  if (x.rank() != 3)
    throw std::invalid_argument("block transform input must be C,H,W, got " +
                                shape_str(x.shape()));
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % L || W % L)
    throw std::invalid_argument("extents " + shape_str(x.shape()) +
                                " not divisible by block size " + std::to_string(L) +
                                "; pad the input first");
  auto run = [C, H, W, L](bool inv, const std::vector<double>& in, std::vector<double>& out) {
    for (int c = 0; c < C; ++c)
      dct::transform_plane(in.data() + static_cast<size_t>(c) * H * W, H, W, L, inv,
                           out.data() + static_cast<size_t>(c) * H * W);
  };
  return record_op(
      {x}, x.shape(),
      [run, inverse](const auto& in, TensorNode& out) {
        run(inverse, in[0]->value, out.value);
      },
      [run, inverse](const auto& in, const TensorNode& out) {
        // orthonormal transform: the adjoint is the inverse direction
        std::vector<double> tmp(out.grad.size());
        run(!inverse, out.grad, tmp);
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
      });
}

}  // namespace

Tensor block_dct2d(const Tensor& x, int block_size) {
  return block_transform(x, block_size, false);
}

Tensor block_idct2d(const Tensor& coeffs, int block_size) {
  return block_transform(coeffs, block_size, true);
}

double log_q_for_qf(double qf) {
  // inverse of q_to_qf: q = (50 + 32*(100 - qf)) / 100
  return std::log((50.0 + 32.0 * (100.0 - qf)) / 100.0);
}

int q_to_qf(double q) {
  if (q <= 0.0) throw std::invalid_argument("stepsize must be positive");
  const double qf = 100.0 - (100.0 * q - 50.0) / 32.0;
  return static_cast<int>(std::clamp(std::lround(qf), 1L, 100L));
}

ProxyOut proxy_apply_plane(const Tensor& x, const Tensor& q, int block_size,
                           int bit_depth, bool quantize) {
  check_block_size(block_size);
  if (bit_depth != 8 && bit_depth != 10)
    throw std::invalid_argument("proxy bit depth must be 8 or 10");
  const int H = x.dim(1), W = x.dim(2);
  const double maxv = static_cast<double>((1 << bit_depth) - 1);
  Tensor clipped = clip_ste(x, 0.0, maxv);
  const int ph = (H + block_size - 1) / block_size * block_size;
  const int pw = (W + block_size - 1) / block_size * block_size;
  Tensor padded =
      (ph == H && pw == W) ? clipped : edge_pad2d(clipped, ph - H, pw - W);
  ProxyOut out;
  out.coeffs = block_dct2d(padded, block_size);
  out.quantized = quantize ? quantize_ste(out.coeffs, q) : out.coeffs;
  Tensor recon = block_idct2d(out.quantized, block_size);
  out.xhat = (ph == H && pw == W) ? recon : crop2d(recon, H, W);
  return out;
}

ProxyOut proxy_apply(const Tensor& x, const ProxyConfig& cfg) {
  if (x.rank() != 3 || x.dim(0) != 3)
    throw std::invalid_argument("proxy_apply expects a 3,H,W tensor, got " +
                                shape_str(x.shape()));
  return proxy_apply_plane(x, cfg.stepsize(), cfg.block_size, cfg.bit_depth,
                           cfg.quantize);
}

RateLossRecord rate_loss(std::span<const Tensor> coeff_planes, const Tensor& q,
                         double measured_rate) {
  if (measured_rate < 0.0)
    throw std::invalid_argument("measured rate must be nonnegative");
  constexpr double kEps = 1e-8;
  RateLossRecord rec;
  Tensor s = log_abs_rate_sum(coeff_planes, q);
  rec.s = s.scalar();
  rec.r = measured_rate;
  rec.a = measured_rate / std::max(rec.s, kEps);
  rec.loss = scale(s, rec.a);
  return rec;
}

RateLossRecord rate_loss(const Tensor& coeffs, const Tensor& q, double measured_rate) {
  const Tensor planes[] = {coeffs};
  return rate_loss(std::span<const Tensor>(planes, 1), q, measured_rate);
}

}  // namespace nwrap
