#include "nwrap/audit.hpp"

#include <cmath>
#include <random>

#include "nwrap/proxy.hpp"
#include "nwrap/trainer.hpp"

namespace nwrap {

namespace {

double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(g() >> 11) * 0x1.0p-53);
}

std::vector<double> random_values(std::mt19937_64& g, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(g, lo, hi);
  return v;
}

std::vector<double> random_off_zero(std::mt19937_64& g, size_t n, double lo, double hi,
                                    double margin) {
  std::vector<double> v(n);
  for (auto& x : v) {
    do {
      x = uniform(g, lo, hi);
    } while (std::abs(x) < margin);
  }
  return v;
}

AuditLine check(const std::string& name, Graph& g, const Tensor& loss, double eps,
                double tolerance, int components = 1 << 20) {
  const auto report = grad_check(g, loss, eps, components);
  return {name, report.max_rel_err, tolerance, report.max_rel_err < tolerance};
}

}  // namespace

std::vector<AuditLine> gradient_audit() {
  std::vector<AuditLine> lines;
  constexpr double kOpTol = 1e-4;

  {
    std::mt19937_64 rg(11);
    Graph g;
    Tensor x = g.parameter("x", {2, 8, 8}, random_values(rg, 128, -2, 2));
    Tensor k = g.parameter("k", {2, 3, 3}, random_values(rg, 18, -2, 2));
    Tensor loss = mse(depthwise_conv2d(x, k, 1, Pad::Same), Tensor(Shape{2, 8, 8}, 0.1));
    lines.push_back(check("depthwise_conv2d", g, loss, 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(12);
    Graph g;
    Tensor x = g.parameter("x", {2, 8, 8}, random_values(rg, 128, -2, 2));
    Tensor k = g.parameter("k", {2, 3, 3}, random_values(rg, 18, -2, 2));
    Tensor loss = sum(mul(depthwise_conv2d(x, k, 2, Pad::Same),
                          Tensor(Shape{2, 4, 4}, 0.7)));
    lines.push_back(check("depthwise_conv2d stride 2", g, loss, 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(13);
    Graph g;
    Tensor x = g.parameter("x", {4, 5, 5}, random_values(rg, 100, -2, 2));
    Tensor k = g.parameter("k", {6, 4}, random_values(rg, 24, -2, 2));
    Tensor b = g.parameter("b", {6}, random_values(rg, 6, -1, 1));
    Tensor loss = mse(pointwise_conv2d(x, k, b), Tensor(Shape{6, 5, 5}, 0.0));
    lines.push_back(check("pointwise_conv2d", g, loss, 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(14);
    Graph g;
    Tensor x = g.parameter("x", {2, 6, 6}, random_values(rg, 72, -2, 2));
    Tensor kd = g.parameter("kd", {3, 2, 2, 2}, random_values(rg, 24, -2, 2));
    Tensor bd = g.parameter("bd", {3}, random_values(rg, 3, -1, 1));
    Tensor ku = g.parameter("ku", {2, 3, 2, 2}, random_values(rg, 24, -2, 2));
    Tensor bu = g.parameter("bu", {2}, random_values(rg, 2, -1, 1));
    Tensor y = transposed_conv2d(strided_conv2d(x, kd, bd, 2), ku, bu, 2);
    lines.push_back(check("strided+transposed conv", g, mse(y, Tensor(y.shape(), 0.1)),
                          1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(15);
    Graph g;
    Tensor x = g.parameter("x", {2, 6, 6}, random_values(rg, 72, -2, 2));
    Tensor k = g.parameter("k", {3, 2, 3, 3}, random_values(rg, 54, -2, 2));
    Tensor b = g.parameter("b", {3}, random_values(rg, 3, -1, 1));
    Tensor loss = mse(conv2d_3x3_same(x, k, b), Tensor(Shape{3, 6, 6}, 0.1));
    lines.push_back(check("conv2d_3x3_same", g, loss, 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(16);
    Graph g;
    Tensor x = g.parameter("x", {1, 6, 6}, random_off_zero(rg, 36, -2, 2, 1e-3));
    Tensor loss = sum(mul(leaky_relu(x, 0.2), Tensor(Shape{1, 6, 6}, 0.7)));
    lines.push_back(check("leaky_relu", g, loss, 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(17);
    Graph g;
    Tensor x = g.parameter("x", {1, 4, 4}, random_values(rg, 16, -2, 2));
    Tensor loss = mse(bilinear_resize(x, 6, 6), Tensor(Shape{1, 6, 6}, 0.3));
    lines.push_back(check("bilinear_resize", g, loss, 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(18);
    Graph g;
    Tensor x = g.parameter("x", {1, 4, 6}, random_values(rg, 24, -2, 2));
    Tensor path = crop2d(edge_pad2d(space_to_depth2(x), 1, 1), 3, 3);
    Tensor w(Shape{4, 3, 3}, random_values(rg, 36, -1, 1));
    lines.push_back(check("space_to_depth/pad/crop", g, sum(mul(path, w)), 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(19);
    Graph g;
    Tensor x = g.parameter("x", {1, 4, 4}, random_off_zero(rg, 16, -1.5, 1.5, 1e-2));
    Tensor loss = sum(clip_ste(x, -1.0, 1.0));
    // clip inputs sit away from the boundaries by construction
    lines.push_back(check("clip (interior)", g, loss, 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(20);
    Graph g;
    Tensor x = g.parameter("x", {1, 8, 8}, random_values(rg, 64, 20.0, 230.0));
    Tensor q(Shape{1}, 4.0);
    ProxyOut out = proxy_apply_plane(x, q, 8, 8, /*quantize=*/false);
    lines.push_back(check("block dct/idct round trip", g, mse(x, out.xhat), 1e-5, kOpTol));
  }
  {
    std::mt19937_64 rg(21);
    Graph g;
    Tensor logq = g.parameter("log_q", {1}, std::vector<double>{0.8});
    Tensor y = g.parameter("y", {1, 8, 8}, random_off_zero(rg, 64, -60, 60, 0.5));
    auto rec = rate_loss(y, nwrap::exp(logq), 4096.0);
    lines.push_back(check("rate surrogate", g, rec.loss, 1e-6, kOpTol));
  }

  {
    // one-image micro configuration through both networks and the proxy in
    // the vanishing-quantization limit; heads jittered so every parameter
    // carries gradient while the bottleneck stays inside the codec range
    std::mt19937_64 rg(2001);
    TrainConfig cfg;
    cfg.ratio = ratio_parse("1/2");
    cfg.flag = WrapperFlag::Pair;
    cfg.crop = 64;
    cfg.lambda = 0.0;
    WrapperModel post = build_postprocessor(31);
    post.ratio = cfg.ratio;
    WrapperModel pre = build_preprocessor(cfg.ratio, 32);
    std::mt19937_64 jg(606);
    for (auto* model : {&post, &pre}) {
      for (size_t li = 0; li < model->layers.size(); ++li) {
        const bool gentle =
            model->kind == ModelKind::Pre && model->layers[li].init == ParamInit::Zero;
        const double s = gentle ? 0.002 : 0.05;
        for (const char* suffix : {".w", ".b"}) {
          auto it = model->params.find("L" + std::to_string(li) + suffix);
          if (it == model->params.end()) continue;
          for (auto& w : it->second.v) w += static_cast<float>(s * uniform(jg, -1, 1));
        }
      }
    }
    FrameYUV420 img = FrameYUV420::filled(64, 64, 8, 0, 0);
    for (auto* plane : {&img.y, &img.u, &img.v})
      for (auto& v : *plane) v = static_cast<uint16_t>(30 + rg() % 190);
    PlaneTensors source = normalize(img);
    Graph g;
    PipelineLoss pl =
        build_pipeline_loss(g, post, &pre, source, cfg, 8, /*quantize=*/false);
    lines.push_back(check("full pipeline (micro)", g, pl.loss, 1e-7, 1e-3, 4));
  }
  return lines;
}

}  // namespace nwrap
