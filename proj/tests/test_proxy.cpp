#include "nwrap/proxy.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "entropy.hpp"
#include "nwrap/jpeg_gray.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace nwrap;

namespace {

// straightforward O(L^4) reference transform, kept independent of the
// implementation's matrix form
std::vector<double> naive_dct(const std::vector<double>& x, int L) {
  std::vector<double> out(static_cast<size_t>(L) * L, 0.0);
  for (int u = 0; u < L; ++u)
    for (int v = 0; v < L; ++v) {
      const double cu = u == 0 ? std::sqrt(1.0 / L) : std::sqrt(2.0 / L);
      const double cv = v == 0 ? std::sqrt(1.0 / L) : std::sqrt(2.0 / L);
      double acc = 0.0;
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j)
          acc += x[static_cast<size_t>(i) * L + j] *
                 std::cos((2 * i + 1) * u * std::numbers::pi / (2.0 * L)) *
                 std::cos((2 * j + 1) * v * std::numbers::pi / (2.0 * L));
      out[static_cast<size_t>(u) * L + v] = cu * cv * acc;
    }
  return out;
}

}  // namespace

TEST_CASE("constant block transforms to a lone DC of v*L") {
  for (int L : {4, 8, 16, 32}) {
    Tensor x(Shape{1, L, L}, 3.5);
    Tensor y = block_dct2d(x, L);
    CHECK(y.value()[0] == doctest::Approx(3.5 * L).epsilon(1e-12));
    for (size_t i = 1; i < y.value().size(); ++i)
      CHECK(std::abs(y.value()[i]) < 1e-9);
  }
}

TEST_CASE("idct inverts dct to 1e-9 and preserves energy") {
  auto g = testutil::rng(12);
  for (int L : {4, 8, 16, 32}) {
    Tensor x = testutil::random_tensor(g, {2, 2 * L, L}, -100.0, 100.0);
    Tensor y = block_dct2d(x, L);
    Tensor back = block_idct2d(y, L);
    double e_x = 0, e_y = 0, max_err = 0;
    for (size_t i = 0; i < x.value().size(); ++i) {
      max_err = std::max(max_err, std::abs(back.value()[i] - x.value()[i]));
      e_x += x.value()[i] * x.value()[i];
      e_y += y.value()[i] * y.value()[i];
    }
    CHECK(max_err < 1e-9);
    CHECK(std::abs(e_x - e_y) / e_x < 1e-9);
  }
}

TEST_CASE("matrix transform agrees with the quadruple-loop reference") {
  auto g = testutil::rng(9);
  for (int L : {4, 8}) {
    std::vector<double> block =
        testutil::random_values(g, static_cast<size_t>(L) * L, -128.0, 128.0);
    Tensor x(Shape{1, L, L}, block);
    Tensor y = block_dct2d(x, L);
    const auto ref = naive_dct(block, L);
    for (size_t i = 0; i < ref.size(); ++i)
      CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
  }
}

TEST_CASE("dct linearity") {
  auto g = testutil::rng(44);
  Tensor a = testutil::random_tensor(g, {1, 8, 8}, -5, 5);
  Tensor b = testutil::random_tensor(g, {1, 8, 8}, -5, 5);
  Tensor lhs = block_dct2d(add(scale(a, 2.0), b), 8);
  Tensor rhs = add(scale(block_dct2d(a, 8), 2.0), block_dct2d(b, 8));
  for (size_t i = 0; i < lhs.value().size(); ++i)
    CHECK(lhs.value()[i] == doctest::Approx(rhs.value()[i]).epsilon(1e-12));
}

TEST_CASE("dct rejects non-divisible extents") {
  Tensor x(Shape{1, 12, 12}, 0.0);
  CHECK_THROWS_WITH_AS(block_dct2d(x, 8), doctest::Contains("pad"),
                       std::invalid_argument);
}

TEST_CASE("proxy without quantization reduces to the clip") {
  auto g = testutil::rng(3);
  Graph gr;
  Tensor q = gr.parameter("log_q", Shape{1}, std::vector<double>{0.0});
  Tensor x(Shape{1, 12, 20}, testutil::random_values(g, 240, -30.0, 290.0));
  ProxyOut out = proxy_apply_plane(x, nwrap::exp(q), 8, 8, /*quantize=*/false);
  for (size_t i = 0; i < x.value().size(); ++i) {
    const double expect = std::clamp(x.value()[i], 0.0, 255.0);
    CHECK(out.xhat.value()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("quantizer rounds 1.6 to 2 at q=1") {
  Tensor q(Shape{1}, 1.0);
  Tensor y(Shape{1, 1, 1}, 1.6);
  Tensor z = quantize_ste(y, q);
  CHECK(z.value()[0] == doctest::Approx(2.0));
}

TEST_CASE("proxy reconstruction gradient w.r.t. input matches finite differences") {
  // run in the vanishing-quantization limit so the finite differences see the
  // same function the tape recorded
  auto g = testutil::rng(7);
  Graph gr;
  Tensor x = gr.parameter("x", Shape{1, 8, 12},
                          testutil::random_values(g, 96, 40.0, 200.0));
  Tensor q(Shape{1}, 4.0);
  ProxyOut out = proxy_apply_plane(x, q, 4, 8, /*quantize=*/false);
  Tensor loss = mse(x, out.xhat);
  auto report = grad_check(gr, loss, 1e-5, 1 << 20);
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("quantizer straight-through Jacobian equals the bypass Jacobian") {
  auto input_grad = [](bool quantize) {
    auto gx = testutil::rng(70);
    auto gw = testutil::rng(71);
    Graph gr;
    Tensor x = gr.parameter("x", Shape{1, 8, 8},
                            testutil::random_values(gx, 64, 20.0, 230.0));
    Tensor q(Shape{1}, 3.0);
    ProxyOut out = proxy_apply_plane(x, q, 8, 8, quantize);
    Tensor w(Shape{1, 8, 8}, testutil::random_values(gw, 64, -1.0, 1.0));
    gr.backward(sum(mul(out.xhat, w)));
    return x.grad();
  };
  const auto with_quant = input_grad(true);
  const auto without = input_grad(false);
  REQUIRE(with_quant.size() == without.size());
  for (size_t i = 0; i < with_quant.size(); ++i)
    CHECK(with_quant[i] == doctest::Approx(without[i]).epsilon(1e-12));
}

TEST_CASE("q_to_qf spot values") {
  CHECK(q_to_qf(0.5) == 100);
  CHECK(q_to_qf(16.5) == 50);
  CHECK(q_to_qf(32.5) == 1);
  CHECK(q_to_qf(std::exp(log_q_for_qf(75.0))) == 75);
}

TEST_CASE("rate loss is guarded at zero coefficients") {
  Graph gr;
  Tensor q = gr.parameter("log_q", Shape{1}, std::vector<double>{0.0});
  Tensor y(Shape{1, 4, 4}, 0.0);
  auto rec = rate_loss(y, nwrap::exp(q), 1234.0);
  CHECK(rec.loss.scalar() == 0.0);
}

TEST_CASE("rate loss evaluates to the measured rate") {
  auto g = testutil::rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor q(Shape{1}, testutil::uniform(g, 0.5, 20.0));
    Tensor y = testutil::random_tensor(g, {3, 8, 8}, -200.0, 200.0);
    const double measured = testutil::uniform(g, 10.0, 1e6);
    auto rec = rate_loss(y, q, measured);
    CHECK(rec.loss.scalar() == doctest::Approx(measured).epsilon(1e-12));
  }
}

TEST_CASE("rate loss pushes the stepsize up") {
  auto g = testutil::rng(25);
  Graph gr;
  Tensor logq = gr.parameter("log_q", Shape{1}, std::vector<double>{1.0});
  Tensor q = nwrap::exp(logq);
  Tensor y = gr.parameter("y", Shape{1, 6, 6},
                          testutil::random_values_off_zero(g, 36, -50.0, 50.0, 1.0));
  auto rec = rate_loss(y, q, 5000.0);
  auto report = grad_check(gr, rec.loss, 1e-6, 1 << 20);
  CHECK(report.max_rel_err < 1e-4);
  gr.backward(rec.loss);
  CHECK(logq.grad()[0] < 0.0);  // descent increases q, lowering the rate term
}

TEST_CASE("rate gradient direction is independent of the measured rate") {
  auto grad_for = [](double measured) {
    auto g = testutil::rng(33);
    Graph gr;
    Tensor q(Shape{1}, 2.0);
    Tensor y = gr.parameter("y", Shape{1, 8, 8},
                            testutil::random_values(g, 64, -90.0, 90.0));
    auto rec = rate_loss(y, q, measured);
    gr.backward(rec.loss);
    return y.grad();
  };
  const auto g1 = grad_for(1000.0);
  const auto g2 = grad_for(7000.0);
  double dot = 0, n1 = 0, n2 = 0;
  for (size_t i = 0; i < g1.size(); ++i) {
    dot += g1[i] * g2[i];
    n1 += g1[i] * g1[i];
    n2 += g2[i] * g2[i];
  }
  CHECK(dot / std::sqrt(n1 * n2) == doctest::Approx(1.0).epsilon(1e-9));
}

// --- grayscale baseline coder -------------------------------------------------

TEST_CASE("huffman tables are valid prefix codes with room for deep categories") {
  CHECK(entropy::dc_table().kraft_sum() <= 1.0 + 1e-12);
  CHECK(entropy::ac_table().kraft_sum() <= 1.0 + 1e-12);
  CHECK(entropy::dc_table().len[14] > 0);
  CHECK(entropy::ac_table().len[(3 << 4) | 13] > 0);
}

TEST_CASE("amplitude coding round-trips across the extended range") {
  for (int32_t v : {-16383, -2048, -255, -1, 1, 3, 255, 2047, 16383}) {
    const int s = entropy::magnitude_category(v);
    CHECK(s <= 14);
    CHECK(entropy::extend_amplitude(entropy::amplitude_bits(v, s), s) == v);
  }
}

TEST_CASE("constant plane codes almost nothing") {
  std::vector<uint16_t> plane(64 * 64, 200);
  GrayBitstream bs = baseline_gray_encode(plane, 64, 64, 50);
  const int blocks = 8 * 8;
  CHECK(bs.payload_bits <= static_cast<uint64_t>(6 * blocks + 24));
  auto g = testutil::rng(5);
  std::vector<uint16_t> noisy(64 * 64);
  for (auto& v : noisy) v = static_cast<uint16_t>(g() % 256);
  CHECK(baseline_gray_encode(noisy, 64, 64, 50).payload_bits > 4 * bs.payload_bits);
}

TEST_CASE("rate rises with quality on a natural image") {
  auto g = testutil::rng(77);
  auto img = synth::smooth_field(g, 96, 80);
  const auto plane = synth::to_plane(img, 255);
  uint64_t prev = 0;
  for (int qf : {30, 50, 70, 90}) {
    const uint64_t bits = baseline_gray_encode(plane, 96, 80, qf).payload_bits;
    CHECK(bits >= prev);
    prev = bits;
  }
}

TEST_CASE("decode reproduces the quantized reconstruction bit-exactly") {
  auto g = testutil::rng(31);
  const int w = 24, h = 16;
  auto img = synth::smooth_field(g, w, h);
  const auto plane = synth::to_plane(img, 255);
  GrayBitstream bs = baseline_gray_encode(plane, w, h, 40);
  const auto decoded = baseline_gray_decode(bs);

  // independent reference: quadruple-loop DCT, quantize, dequantize, invert
  const auto quant = gray_quant_table(40);
  std::vector<uint16_t> expect(plane.size());
  for (int bi = 0; bi < h; bi += 8)
    for (int bj = 0; bj < w; bj += 8) {
      std::vector<double> block(64);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          block[static_cast<size_t>(i) * 8 + j] =
              static_cast<double>(plane[static_cast<size_t>(bi + i) * w + bj + j]) - 128.0;
      auto coeffs = naive_dct(block, 8);
      for (int i = 0; i < 64; ++i)
        coeffs[static_cast<size_t>(i)] =
            static_cast<double>(std::lround(coeffs[static_cast<size_t>(i)] /
                                            quant[static_cast<size_t>(i)])) *
            quant[static_cast<size_t>(i)];
      // invert with the same quadruple loop, transposed
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          double acc = 0.0;
          for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 8; ++v) {
              const double cu = u == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
              const double cv = v == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
              acc += cu * cv * coeffs[static_cast<size_t>(u) * 8 + v] *
                     std::cos((2 * i + 1) * u * std::numbers::pi / 16.0) *
                     std::cos((2 * j + 1) * v * std::numbers::pi / 16.0);
            }
          expect[static_cast<size_t>(bi + i) * w + bj + j] = static_cast<uint16_t>(
              std::clamp<long>(std::lround(acc + 128.0), 0, 255));
        }
    }
  CHECK(decoded == expect);
}

TEST_CASE("encoder rejects bad inputs") {
  std::vector<uint16_t> plane(16, 300);
  CHECK_THROWS_AS(baseline_gray_encode(plane, 4, 4, 50), std::invalid_argument);
  std::vector<uint16_t> ok(16, 100);
  CHECK_THROWS_AS(baseline_gray_encode(ok, 4, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(baseline_gray_encode(ok, 4, 4, 101), std::invalid_argument);
}
