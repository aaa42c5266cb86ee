// Differentiable stand-in for a transform codec used only during training:
// clip to the codec range, blockwise DCT, uniform quantization with a learned
// stepsize and straight-through gradients, plus the rate surrogate that is
// rescaled to match a real coder's measured bitrate each step.
#pragma once

#include <span>

#include "nwrap/tensor.hpp"

namespace nwrap {

struct ProxyConfig {
  Tensor log_q;        // scalar parameter; stepsize q = exp(log_q) stays positive
  int block_size = 8;  // L in {4, 8, 16, 32}
  int bit_depth = 10;  // codec range is [0, 2^d - 1]
  bool quantize = true;  // false = the q -> 0+ limit, used by gradient checks

  Tensor stepsize() const { return nwrap::exp(log_q); }
};

/// Initial log-stepsize such that q_to_qf(q) lands at the given quality.
double log_q_for_qf(double qf);

/// Blockwise orthonormal DCT of each channel; extents must divide by L.
Tensor block_dct2d(const Tensor& x, int block_size);
Tensor block_idct2d(const Tensor& coeffs, int block_size);

struct ProxyOut {
  Tensor xhat;    // reconstruction, same extents as the input
  Tensor coeffs;  // unquantized transform coefficients (padded extents)
  Tensor quantized;
};

/// clip -> pad to block multiples -> DCT -> quantize -> inverse -> crop.
/// The backward pass passes gradients through the quantizer and gates them
/// at the clip boundaries.
ProxyOut proxy_apply_plane(const Tensor& x, const Tensor& q, int block_size,
                           int bit_depth, bool quantize = true);
/// Convenience for an equal-extent 3-channel frame.
ProxyOut proxy_apply(const Tensor& x, const ProxyConfig& cfg);

/// Quality factor a DC stepsize of q corresponds to, clamped to [1, 100].
int q_to_qf(double q);

struct RateLossRecord {
  Tensor loss;   // scalar; evaluates to exactly measured_bits when s > eps
  double s = 0;  // sum of log(1 + |coeff|/q)
  double r = 0;  // measured rate passed in
  double a = 0;  // r / s, gradient-stopped
};

/// a * sum(log(1 + |Y|/q)) with a = r/s held constant, so the loss value
/// equals the measured rate while gradients flow only through the sum.
RateLossRecord rate_loss(std::span<const Tensor> coeff_planes, const Tensor& q,
                         double measured_rate);
RateLossRecord rate_loss(const Tensor& coeffs, const Tensor& q, double measured_rate);

}  // namespace nwrap
