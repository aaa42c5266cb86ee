#include "nwrap/model.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "kernels.hpp"
#include "planes.hpp"

namespace nwrap {

namespace {

std::string param_w(size_t layer) { return "L" + std::to_string(layer) + ".w"; }
std::string param_b(size_t layer) { return "L" + std::to_string(layer) + ".b"; }

bool has_weights(LayerOp op) {
  switch (op) {
    case LayerOp::Pointwise:
    case LayerOp::Depthwise:
    case LayerOp::StridedConv:
    case LayerOp::TransposedConv:
    case LayerOp::Conv3x3:
      return true;
    default:
      return false;
  }
}

bool has_bias(LayerOp op) { return has_weights(op) && op != LayerOp::Depthwise; }

Shape weight_shape(const LayerDesc& d) {
  switch (d.op) {
    case LayerOp::Pointwise: return {d.cout, d.cin};
    case LayerOp::Depthwise: return {d.cin, 3, 3};
    case LayerOp::StridedConv:
    case LayerOp::TransposedConv: return {d.cout, d.cin, d.stride, d.stride};
    case LayerOp::Conv3x3: return {d.cout, d.cin, 3, 3};
    default: return {};
  }
}

// --- initialization ---------------------------------------------------------

double gaussian(std::mt19937_64& g) {
  // Box-Muller on explicitly constructed uniforms, deterministic across builds
  const double u1 = (static_cast<double>(g() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(g() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
}

FTensor init_weight(const LayerDesc& d, std::mt19937_64& g) {
  const Shape shape = weight_shape(d);
  FTensor t;
  t.shape = shape;
  t.v.assign(static_cast<size_t>(shape_size(shape)), 0.0f);
  switch (d.init) {
    case ParamInit::Zero:
      break;
    case ParamInit::He: {
      int fan_in = d.cin;
      if (d.op == LayerOp::Depthwise) fan_in = 9;
      else if (d.op == LayerOp::Conv3x3) fan_in = 9 * d.cin;
      else if (d.op == LayerOp::StridedConv || d.op == LayerOp::TransposedConv)
        fan_in = d.stride * d.stride * d.cin;
      const double std = std::sqrt(2.0 / fan_in);
      for (auto& x : t.v) x = static_cast<float>(std * gaussian(g));
      break;
    }
    case ParamInit::DiagOnes:
      for (int c = 0; c < std::min(d.cin, d.cout); ++c)
        t.v[static_cast<size_t>(c) * d.cin + c] = 1.0f;
      break;
    case ParamInit::PairSplit:
      // input c feeds unit 2c positively and 2c+1 negatively; spare units get
      // ordinary random rows (the merge layer zeroes their columns, so the
      // identity is unaffected)
      for (int c = 0; c < d.cin; ++c) {
        t.v[static_cast<size_t>(2 * c) * d.cin + c] = 1.0f;
        t.v[static_cast<size_t>(2 * c + 1) * d.cin + c] = -1.0f;
      }
      for (int u = 2 * d.cin; u < d.cout; ++u)
        for (int c = 0; c < d.cin; ++c)
          t.v[static_cast<size_t>(u) * d.cin + c] = static_cast<float>(0.4 * gaussian(g));
      break;
    case ParamInit::PairMerge: {
      // exact inverse of PairSplit through two leaky activations
      const float s = static_cast<float>(1.0 / (1.0 + kLeakySlope * kLeakySlope));
      for (int c = 0; c < d.cout; ++c) {
        t.v[static_cast<size_t>(c) * d.cin + 2 * c] = s;
        t.v[static_cast<size_t>(c) * d.cin + 2 * c + 1] = -s;
      }
      break;
    }
    case ParamInit::CenterPass:
      for (int c = 0; c < std::min(d.cin, d.cout); ++c)
        t.v[(static_cast<size_t>(c) * d.cin + c) * 9 + 4] = 1.0f;
      break;
  }
  return t;
}

void materialize_params(WrapperModel& m, uint64_t seed) {
  std::mt19937_64 g(seed ^ 0x9e3779b97f4a7c15ull);
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerDesc& d = m.layers[i];
    if (!has_weights(d.op)) continue;
    m.params[param_w(i)] = init_weight(d, g);
    if (has_bias(d.op)) {
      FTensor b;
      b.shape = {d.cout};
      b.v.assign(static_cast<size_t>(d.cout), 0.0f);
      m.params[param_b(i)] = b;
    }
  }
}

// --- builders ----------------------------------------------------------------

struct DagBuilder {
  std::vector<LayerDesc> layers;
  int last = 0;  // value ref of the previous output

  int push(LayerDesc d) {
    if (d.in0 < 0) d.in0 = last;
    layers.push_back(d);
    last = static_cast<int>(layers.size());
    return last;
  }
  int pw(int cin, int cout, ParamInit init = ParamInit::He, int from = -1) {
    return push({LayerOp::Pointwise, init, cin, cout, 1, 0, 0, from, -1});
  }
  int dw(int c, int stride) {
    return push({LayerOp::Depthwise, ParamInit::He, c, c, stride, 0, 0, -1, -1});
  }
  int sconv(int cin, int cout, int s) {
    return push({LayerOp::StridedConv, ParamInit::He, cin, cout, s, 0, 0, -1, -1});
  }
  int tconv(int cin, int cout, int s) {
    return push({LayerOp::TransposedConv, ParamInit::He, cin, cout, s, 0, 0, -1, -1});
  }
  int conv3(int cin, int cout, ParamInit init, int from = -1) {
    return push({LayerOp::Conv3x3, init, cin, cout, 1, 0, 0, from, -1});
  }
  int lrelu() { return push({LayerOp::LeakyRelu, ParamInit::He, 0, 0, 1, 0, 0, -1, -1}); }
  int resize(int num, int den, int from = -1) {
    return push({LayerOp::Resize, ParamInit::He, 0, 0, 1, num, den, from, -1});
  }
  int add(int other) {
    return push({LayerOp::Add, ParamInit::He, 0, 0, 1, 0, 0, -1, other});
  }
  int slice(int begin, int end, int from) {
    return push({LayerOp::Slice, ParamInit::He, 0, 0, 1, begin, end, from, -1});
  }
};

}  // namespace

WrapperModel build_postprocessor(uint64_t seed) {
  // widths picked so the whole decoder lands on the published budget:
  // ~8.1K parameters, ~340 MACs per source pixel (see count_macs)
  constexpr int c0 = 10, c1 = 20, c2 = 40;
  DagBuilder b;
  b.pw(6, c0);
  b.lrelu();
  b.dw(c0, 1);
  b.pw(c0, c0);
  const int skip0 = b.lrelu();
  b.dw(c0, 2);
  b.pw(c0, c1);
  b.lrelu();
  b.dw(c1, 1);
  b.pw(c1, c1);
  const int skip1 = b.lrelu();
  b.dw(c1, 2);
  b.pw(c1, c2);
  b.lrelu();
  b.dw(c2, 1);
  b.pw(c2, c2);
  b.lrelu();
  b.dw(c2, 1);
  b.pw(c2, c2);
  b.lrelu();
  b.pw(c2, c1);
  b.resize(2, 1);
  b.add(skip1);
  b.dw(c1, 1);
  b.pw(c1, c1);
  b.lrelu();
  b.pw(c1, c0);
  b.resize(2, 1);
  b.add(skip0);
  b.dw(c0, 1);
  b.pw(c0, c0);
  b.lrelu();
  const int residual = b.pw(c0, 6, ParamInit::Zero);
  const int chroma_in = b.slice(4, 6, 0);
  const int chroma = b.conv3(2, 2, ParamInit::CenterPass, chroma_in);

  WrapperModel m;
  m.kind = ModelKind::Post;
  m.ratio = ratio_from_index(1);  // caller re-tags per trained ratio
  m.layers = std::move(b.layers);
  m.residual_out = residual;
  m.chroma_out = chroma;
  materialize_params(m, seed);
  return m;
}

WrapperModel build_preprocessor(const Ratio& ratio, uint64_t seed) {
  constexpr int c0 = 16, c1 = 32;
  DagBuilder b;
  b.pw(6, c0);
  b.lrelu();
  b.dw(c0, 1);
  b.pw(c0, c0);
  const int skip = b.lrelu();
  b.dw(c0, 2);
  b.pw(c0, c1);
  b.lrelu();
  b.dw(c1, 1);
  b.pw(c1, c1);
  b.lrelu();
  b.pw(c1, c0);
  b.resize(2, 1);
  b.add(skip);
  b.dw(c0, 1);
  b.pw(c0, c0);
  b.lrelu();
  // the stride-configured stage realizing the resolution change
  if (ratio.num == 1 && ratio.den == 2) {
    b.sconv(c0, c0, 2);
    b.lrelu();
  } else if (ratio.num == 1 && ratio.den == 4) {
    b.sconv(c0, c0, 2);
    b.lrelu();
    b.sconv(c0, c0, 2);
    b.lrelu();
  } else if (ratio.num == 2 && ratio.den == 3) {
    b.sconv(c0, c0, 3);
    b.lrelu();
    b.tconv(c0, c0, 2);
    b.lrelu();
  } else if (!ratio.identity()) {
    throw std::invalid_argument("unsupported ratio " + ratio.str());
  }
  b.dw(c0, 1);
  b.pw(c0, c0);
  b.lrelu();
  const int unet_out = b.pw(c0, 6, ParamInit::Zero);

  // parallel 3-layer 1x1 path over the plainly resampled input
  const int resampled = b.resize(ratio.num, ratio.den, 0);
  b.pw(6, c0, ParamInit::PairSplit, resampled);
  b.lrelu();
  b.pw(c0, c0, ParamInit::DiagOnes);
  b.lrelu();
  const int mlp_out = b.pw(c0, 6, ParamInit::PairMerge);
  b.push({LayerOp::Add, ParamInit::He, 0, 0, 1, 0, 0, unet_out, mlp_out});

  WrapperModel m;
  m.kind = ModelKind::Pre;
  m.ratio = ratio;
  m.layers = std::move(b.layers);
  m.main_out = static_cast<int>(m.layers.size());
  materialize_params(m, seed);
  return m;
}

// --- shape walking / cost ------------------------------------------------------

namespace {

Shape layer_out_shape(const LayerDesc& d, const Shape& in, const Shape& in1) {
  const int C = in[0], H = in[1], W = in[2];
  switch (d.op) {
    case LayerOp::Pointwise:
      return {d.cout, H, W};
    case LayerOp::Depthwise: {
      const int p = 1;
      return {C, kern::conv_out_extent(H, 3, d.stride, p),
              kern::conv_out_extent(W, 3, d.stride, p)};
    }
    case LayerOp::StridedConv:
      if (H % d.stride || W % d.stride)
        throw std::invalid_argument("layer input " + shape_str(in) +
                                    " not divisible by stride " + std::to_string(d.stride));
      return {d.cout, H / d.stride, W / d.stride};
    case LayerOp::TransposedConv:
      return {d.cout, H * d.stride, W * d.stride};
    case LayerOp::Conv3x3:
      return {d.cout, H, W};
    case LayerOp::LeakyRelu:
      return in;
    case LayerOp::Resize:
      if ((H * d.a) % d.b || (W * d.a) % d.b)
        throw std::invalid_argument("resize " + std::to_string(d.a) + "/" +
                                    std::to_string(d.b) + " does not divide " +
                                    shape_str(in));
      return {C, H * d.a / d.b, W * d.a / d.b};
    case LayerOp::Add:
      if (in != in1)
        throw std::invalid_argument("add operands differ: " + shape_str(in) + " vs " +
                                    shape_str(in1));
      return in;
    case LayerOp::Slice:
      return {d.b - d.a, H, W};
  }
  throw std::logic_error("unhandled layer op");
}

std::vector<Shape> walk_shapes(const WrapperModel& m, const Shape& input) {
  std::vector<Shape> shapes;
  shapes.push_back(input);
  for (const auto& d : m.layers) {
    const Shape& in = shapes[static_cast<size_t>(d.in0)];
    const Shape in1 = d.in1 >= 0 ? shapes[static_cast<size_t>(d.in1)] : Shape{};
    shapes.push_back(layer_out_shape(d, in, in1));
  }
  return shapes;
}

}  // namespace

ModelCost count_macs(const WrapperModel& m, int width, int height) {
  const Shape input{6, height / 2, width / 2};
  const auto shapes = walk_shapes(m, input);
  double macs = 0;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerDesc& d = m.layers[i];
    const Shape& out = shapes[i + 1];
    const double out_hw = static_cast<double>(out[1]) * out[2];
    switch (d.op) {
      case LayerOp::Pointwise: macs += static_cast<double>(d.cin) * d.cout * out_hw; break;
      case LayerOp::Depthwise: macs += 9.0 * d.cin * out_hw; break;
      case LayerOp::StridedConv:
      case LayerOp::TransposedConv:
        macs += static_cast<double>(d.stride) * d.stride * d.cin * d.cout *
                (d.op == LayerOp::StridedConv
                     ? out_hw
                     : static_cast<double>(shapes[static_cast<size_t>(d.in0)][1]) *
                           shapes[static_cast<size_t>(d.in0)][2]);
        break;
      case LayerOp::Conv3x3: macs += 9.0 * d.cin * d.cout * out_hw; break;
      case LayerOp::Resize: macs += 4.0 * out[0] * out_hw; break;
      default: break;
    }
  }
  ModelCost cost;
  cost.macs_per_pixel = macs / (static_cast<double>(width) * height);
  for (const auto& [name, t] : m.params) cost.parameters += t.size();
  return cost;
}

uint64_t topology_hash(const WrapperModel& m) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](int64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= static_cast<uint64_t>(v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<int64_t>(m.layers.size()));
  for (const auto& d : m.layers) {
    mix(static_cast<int>(d.op));
    mix(static_cast<int>(d.init));
    mix(d.cin);
    mix(d.cout);
    mix(d.stride);
    mix(d.a);
    mix(d.b);
    mix(d.in0);
    mix(d.in1);
  }
  mix(m.residual_out);
  mix(m.chroma_out);
  mix(m.main_out);
  return h;
}

// --- executors ------------------------------------------------------------------

namespace {

struct InferExec {
  using V = FTensor;
  const WrapperModel* m;

  const FTensor& weight(size_t i) const { return m->params.at(param_w(i)); }
  const float* bias(size_t i, LayerOp op) const {
    return has_bias(op) ? m->params.at(param_b(i)).v.data() : nullptr;
  }

  V run_layer(const LayerDesc& d, size_t i, const V& x, const V* x1) const {
    V out;
    switch (d.op) {
      case LayerOp::Pointwise: {
        out.shape = {d.cout, x.dim(1), x.dim(2)};
        out.v.resize(static_cast<size_t>(shape_size(out.shape)));
        kern::pwconv2d(x.v.data(), d.cin, static_cast<int64_t>(x.dim(1)) * x.dim(2),
                       weight(i).v.data(), bias(i, d.op), d.cout, out.v.data());
        break;
      }
      case LayerOp::Depthwise: {
        const int oh = kern::conv_out_extent(x.dim(1), 3, d.stride, 1);
        const int ow = kern::conv_out_extent(x.dim(2), 3, d.stride, 1);
        out.shape = {d.cin, oh, ow};
        out.v.resize(static_cast<size_t>(shape_size(out.shape)));
        kern::dwconv2d(x.v.data(), d.cin, x.dim(1), x.dim(2), weight(i).v.data(), 3, 3,
                       d.stride, 1, out.v.data(), oh, ow);
        break;
      }
      case LayerOp::StridedConv: {
        out.shape = {d.cout, x.dim(1) / d.stride, x.dim(2) / d.stride};
        out.v.resize(static_cast<size_t>(shape_size(out.shape)));
        kern::sconv2d(x.v.data(), d.cin, x.dim(1), x.dim(2), weight(i).v.data(),
                      bias(i, d.op), d.cout, d.stride, out.v.data());
        break;
      }
      case LayerOp::TransposedConv: {
        out.shape = {d.cout, x.dim(1) * d.stride, x.dim(2) * d.stride};
        out.v.resize(static_cast<size_t>(shape_size(out.shape)));
        kern::tconv2d(x.v.data(), d.cin, x.dim(1), x.dim(2), weight(i).v.data(),
                      bias(i, d.op), d.cout, d.stride, out.v.data());
        break;
      }
      case LayerOp::Conv3x3: {
        out.shape = {d.cout, x.dim(1), x.dim(2)};
        out.v.resize(static_cast<size_t>(shape_size(out.shape)));
        kern::conv3x3_same(x.v.data(), d.cin, x.dim(1), x.dim(2), weight(i).v.data(),
                           bias(i, d.op), d.cout, out.v.data());
        break;
      }
      case LayerOp::LeakyRelu: {
        out = x;
        const float s = static_cast<float>(kLeakySlope);
        for (auto& v : out.v) v = v > 0.0f ? v : s * v;
        break;
      }
      case LayerOp::Resize: {
        const int oh = x.dim(1) * d.a / d.b, ow = x.dim(2) * d.a / d.b;
        if (oh == x.dim(1) && ow == x.dim(2)) {
          out = x;
          break;
        }
        out.shape = {x.dim(0), oh, ow};
        out.v.resize(static_cast<size_t>(shape_size(out.shape)));
        for (int c = 0; c < x.dim(0); ++c)
          kern::bilinear_resize_plane(
              x.v.data() + static_cast<int64_t>(c) * x.dim(1) * x.dim(2), x.dim(1),
              x.dim(2), out.v.data() + static_cast<int64_t>(c) * oh * ow, oh, ow);
        break;
      }
      case LayerOp::Add: {
        out = x;
        for (size_t p = 0; p < out.v.size(); ++p) out.v[p] += x1->v[p];
        break;
      }
      case LayerOp::Slice: {
        const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
        out.shape = {d.b - d.a, x.dim(1), x.dim(2)};
        out.v.assign(x.v.begin() + d.a * hw, x.v.begin() + d.b * hw);
        break;
      }
    }
    return out;
  }
};

struct TrainExec {
  using V = Tensor;
  const WrapperModel* m;
  Graph* g;
  std::string prefix;

  Tensor weight(size_t i) const { return fetch(param_w(i)); }
  Tensor bias(size_t i) const { return fetch(param_b(i)); }
  Tensor fetch(const std::string& name) const {
    const FTensor& f = m->params.at(name);
    std::vector<double> init(f.v.begin(), f.v.end());
    return g->parameter(prefix + name, f.shape, init);
  }

  V run_layer(const LayerDesc& d, size_t i, const V& x, const V* x1) const {
    switch (d.op) {
      case LayerOp::Pointwise: return pointwise_conv2d(x, weight(i), bias(i));
      case LayerOp::Depthwise: return depthwise_conv2d(x, weight(i), d.stride, Pad::Same);
      case LayerOp::StridedConv: return strided_conv2d(x, weight(i), bias(i), d.stride);
      case LayerOp::TransposedConv:
        return transposed_conv2d(x, weight(i), bias(i), d.stride);
      case LayerOp::Conv3x3: return conv2d_3x3_same(x, weight(i), bias(i));
      case LayerOp::LeakyRelu: return leaky_relu(x, kLeakySlope);
      case LayerOp::Resize: {
        const int oh = x.dim(1) * d.a / d.b, ow = x.dim(2) * d.a / d.b;
        if (oh == x.dim(1) && ow == x.dim(2)) return x;
        return bilinear_resize(x, oh, ow);
      }
      case LayerOp::Add: return add(x, *x1);
      case LayerOp::Slice: return slice_channels(x, d.a, d.b);
    }
    throw std::logic_error("unhandled layer op");
  }
};

template <class E>
std::vector<typename E::V> run_dag(const WrapperModel& m, E& ex,
                                   const typename E::V& input) {
  std::vector<typename E::V> vals;
  vals.reserve(m.layers.size() + 1);
  vals.push_back(input);
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerDesc& d = m.layers[i];
    const auto& x = vals[static_cast<size_t>(d.in0)];
    const auto* x1 = d.in1 >= 0 ? &vals[static_cast<size_t>(d.in1)] : nullptr;
    vals.push_back(ex.run_layer(d, i, x, x1));
  }
  return vals;
}

FTensor pack_frame_f32(const FrameYUV420& f, int full_w, int full_h) {
  const int maxv = f.max_value();
  const auto y = planes::to_unit(f.y, maxv);
  const auto u = planes::to_unit(f.u, maxv);
  const auto v = planes::to_unit(f.v, maxv);
  std::vector<float> y_full, u_full, v_full;
  if (full_w == f.width && full_h == f.height) {
    y_full = y;
    u_full = u;
    v_full = v;
  } else {
    y_full.resize(static_cast<size_t>(full_w) * full_h);
    kern::bilinear_resize_plane(y.data(), f.height, f.width, y_full.data(), full_h,
                                full_w);
    u_full.resize(static_cast<size_t>(full_w / 2) * (full_h / 2));
    v_full.resize(u_full.size());
    kern::bilinear_resize_plane(u.data(), f.chroma_height(), f.chroma_width(),
                                u_full.data(), full_h / 2, full_w / 2);
    kern::bilinear_resize_plane(v.data(), f.chroma_height(), f.chroma_width(),
                                v_full.data(), full_h / 2, full_w / 2);
  }
  FTensor packed;
  packed.shape = {6, full_h / 2, full_w / 2};
  packed.v.resize(static_cast<size_t>(shape_size(packed.shape)));
  kern::space_to_depth2(y_full.data(), 1, full_h, full_w, packed.v.data());
  const size_t plane = static_cast<size_t>(full_h / 2) * (full_w / 2);
  std::copy(u_full.begin(), u_full.end(), packed.v.begin() + 4 * plane);
  std::copy(v_full.begin(), v_full.end(), packed.v.begin() + 5 * plane);
  return packed;
}

}  // namespace

FrameYUV420 run_postprocess(const WrapperModel& m, const FrameYUV420& bottleneck,
                            const Ratio& ratio, int target_width, int target_height,
                            int out_depth) {
  if (m.kind != ModelKind::Post)
    throw std::invalid_argument("run_postprocess needs an upsampling model");
  if (!(m.ratio == ratio))
    throw std::invalid_argument("model was trained for ratio " + m.ratio.str() +
                                ", requested " + ratio.str());
  if ((bottleneck.width * ratio.den) % (2 * ratio.num) ||
      (bottleneck.height * ratio.den) % (2 * ratio.num))
    throw std::invalid_argument("bottleneck " + std::to_string(bottleneck.width) + "x" +
                                std::to_string(bottleneck.height) +
                                " inconsistent with ratio " + ratio.str());
  const int full_w = ratio.invert_extent(bottleneck.width);
  const int full_h = ratio.invert_extent(bottleneck.height);
  if (target_width > full_w || target_height > full_h)
    throw std::invalid_argument("target extents exceed the upsampled frame");

  InferExec ex{&m};
  const FTensor packed = pack_frame_f32(bottleneck, full_w, full_h);
  const auto vals = run_dag(m, ex, packed);
  const FTensor& residual = vals[static_cast<size_t>(m.residual_out)];
  const FTensor& chroma = vals[static_cast<size_t>(m.chroma_out)];

  const size_t plane = static_cast<size_t>(full_h / 2) * (full_w / 2);
  std::vector<float> y_half(4 * plane);
  for (size_t i = 0; i < 4 * plane; ++i) y_half[i] = packed.v[i] + residual.v[i];
  std::vector<float> y_full(static_cast<size_t>(full_w) * full_h);
  kern::depth_to_space2(y_half.data(), 4, full_h / 2, full_w / 2, y_full.data());
  std::vector<float> u_out(plane), v_out(plane);
  for (size_t i = 0; i < plane; ++i) {
    u_out[i] = chroma.v[i] + residual.v[4 * plane + i];
    v_out[i] = chroma.v[plane + i] + residual.v[5 * plane + i];
  }

  FrameYUV420 out;
  out.width = full_w;
  out.height = full_h;
  out.bit_depth = out_depth;
  const int maxv = out.max_value();
  out.y = planes::from_unit(y_full, maxv);
  out.u = planes::from_unit(u_out, maxv);
  out.v = planes::from_unit(v_out, maxv);
  return crop_frame(out, target_width, target_height);
}

FrameYUV420 run_preprocess(const WrapperModel& m, const FrameYUV420& source) {
  if (m.kind != ModelKind::Pre)
    throw std::invalid_argument("run_preprocess needs a downsampling model");
  const FrameYUV420 padded = pad_frame_replicate(source, pad_modulus(m.ratio));
  InferExec ex{&m};
  const FTensor packed = pack_frame_f32(padded, padded.width, padded.height);
  const auto vals = run_dag(m, ex, packed);
  const FTensor& out6 = vals[static_cast<size_t>(m.main_out)];

  const int bh = 2 * out6.dim(1), bw = 2 * out6.dim(2);
  const size_t plane = static_cast<size_t>(out6.dim(1)) * out6.dim(2);
  std::vector<float> y_full(static_cast<size_t>(bh) * bw);
  kern::depth_to_space2(out6.v.data(), 4, out6.dim(1), out6.dim(2), y_full.data());

  FrameYUV420 bn;
  bn.width = bw;
  bn.height = bh;
  bn.bit_depth = 10;
  bn.y = planes::from_unit(y_full, 1023);
  bn.u = planes::from_unit({out6.v.begin() + 4 * plane, out6.v.begin() + 5 * plane}, 1023);
  bn.v = planes::from_unit({out6.v.begin() + 5 * plane, out6.v.begin() + 6 * plane}, 1023);
  return bn;
}

void bind_parameters(const WrapperModel& m, Graph& g, const std::string& prefix) {
  TrainExec ex{&m, &g, prefix};
  for (size_t i = 0; i < m.layers.size(); ++i) {
    if (!has_weights(m.layers[i].op)) continue;
    ex.fetch(param_w(i));
    if (has_bias(m.layers[i].op)) ex.fetch(param_b(i));
  }
}

void store_parameters(WrapperModel& m, const Graph& g, const std::string& prefix) {
  for (auto& [name, f] : m.params) {
    const Tensor t = g.get_parameter(prefix + name);
    if (t.shape() != f.shape)
      throw std::logic_error("parameter " + name + " changed shape during training");
    for (size_t i = 0; i < f.v.size(); ++i)
      f.v[i] = static_cast<float>(t.value()[i]);
  }
}

Tensor run_pre_train(const WrapperModel& m, Graph& g, const Tensor& packed,
                     const std::string& prefix) {
  if (m.kind != ModelKind::Pre) throw std::invalid_argument("expected a Pre model");
  TrainExec ex{&m, &g, prefix};
  auto vals = run_dag(m, ex, packed);
  return vals[static_cast<size_t>(m.main_out)];
}

PlaneTensors run_post_train(const WrapperModel& m, Graph& g, const Tensor& packed,
                            const std::string& prefix) {
  if (m.kind != ModelKind::Post) throw std::invalid_argument("expected a Post model");
  TrainExec ex{&m, &g, prefix};
  auto vals = run_dag(m, ex, packed);
  const Tensor& residual = vals[static_cast<size_t>(m.residual_out)];
  const Tensor& chroma = vals[static_cast<size_t>(m.chroma_out)];
  PlaneTensors out;
  out.y = depth_to_space2(add(slice_channels(packed, 0, 4), slice_channels(residual, 0, 4)));
  Tensor uv = add(chroma, slice_channels(residual, 4, 6));
  out.u = slice_channels(uv, 0, 1);
  out.v = slice_channels(uv, 1, 2);
  return out;
}

Tensor pack_planes_train(const PlaneTensors& t, const Ratio& ratio, int target_h,
                         int target_w) {
  (void)ratio;
  Tensor y = (t.y.dim(1) == target_h && t.y.dim(2) == target_w)
                 ? t.y
                 : bilinear_resize(t.y, target_h, target_w);
  Tensor u = (t.u.dim(1) == target_h / 2 && t.u.dim(2) == target_w / 2)
                 ? t.u
                 : bilinear_resize(t.u, target_h / 2, target_w / 2);
  Tensor v = (t.v.dim(1) == target_h / 2 && t.v.dim(2) == target_w / 2)
                 ? t.v
                 : bilinear_resize(t.v, target_h / 2, target_w / 2);
  std::vector<Tensor> parts{space_to_depth2(y), u, v};
  return concat_channels(parts);
}

// --- serialization ---------------------------------------------------------------

namespace {

void put_u32(std::ofstream& o, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  o.write(reinterpret_cast<char*>(b), 4);
}
void put_i32(std::ofstream& o, int32_t v) { put_u32(o, static_cast<uint32_t>(v)); }
void put_u16(std::ofstream& o, uint16_t v) {
  uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  o.write(reinterpret_cast<char*>(b), 2);
}

uint32_t get_u32(std::ifstream& i, const std::string& path) {
  uint8_t b[4];
  i.read(reinterpret_cast<char*>(b), 4);
  if (!i) throw std::runtime_error(path + ": truncated weight file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
int32_t get_i32(std::ifstream& i, const std::string& path) {
  return static_cast<int32_t>(get_u32(i, path));
}
uint16_t get_u16(std::ifstream& i, const std::string& path) {
  uint8_t b[2];
  i.read(reinterpret_cast<char*>(b), 2);
  if (!i) throw std::runtime_error(path + ": truncated weight file");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

void save_weights(const WrapperModel& m, const std::string& path) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw std::runtime_error("cannot open " + path + " for writing");
  o.write("NWRP", 4);
  put_u32(o, m.version);
  const uint8_t head[8] = {static_cast<uint8_t>(m.kind),
                           static_cast<uint8_t>(m.ratio.num),
                           static_cast<uint8_t>(m.ratio.den),
                           static_cast<uint8_t>(m.ratio.index),
                           0 /* luma packing: row-major TL,TR,BL,BR */,
                           0 /* conv padding: zeros */,
                           0,
                           0};
  o.write(reinterpret_cast<const char*>(head), 8);
  put_i32(o, m.residual_out);
  put_i32(o, m.chroma_out);
  put_i32(o, m.main_out);
  put_u32(o, static_cast<uint32_t>(m.layers.size()));
  for (const auto& d : m.layers) {
    const uint8_t tag[2] = {static_cast<uint8_t>(d.op), static_cast<uint8_t>(d.init)};
    o.write(reinterpret_cast<const char*>(tag), 2);
    put_i32(o, d.cin);
    put_i32(o, d.cout);
    put_i32(o, d.stride);
    put_i32(o, d.a);
    put_i32(o, d.b);
    put_i32(o, d.in0);
    put_i32(o, d.in1);
  }
  put_u32(o, static_cast<uint32_t>(m.params.size()));
  for (const auto& [name, t] : m.params) {
    put_u16(o, static_cast<uint16_t>(name.size()));
    o.write(name.data(), static_cast<std::streamsize>(name.size()));
    const uint8_t nd = static_cast<uint8_t>(t.shape.size());
    o.write(reinterpret_cast<const char*>(&nd), 1);
    for (int e : t.shape) put_u32(o, static_cast<uint32_t>(e));
    o.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(float)));
  }
  if (!o) throw std::runtime_error("write failed for " + path);
}

WrapperModel load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NWRP", 4) != 0)
    throw std::runtime_error(path + ": not a weight file (bad magic)");
  WrapperModel m;
  m.version = get_u32(in, path);
  if (m.version != kWeightFormatVersion)
    throw std::runtime_error(path + ": unsupported format version " +
                             std::to_string(m.version));
  uint8_t head[8];
  in.read(reinterpret_cast<char*>(head), 8);
  if (!in) throw std::runtime_error(path + ": truncated weight file");
  m.kind = static_cast<ModelKind>(head[0]);
  m.ratio.num = head[1];
  m.ratio.den = head[2];
  m.ratio.index = head[3];
  if (head[4] != 0 || head[5] != 0)
    throw std::runtime_error(path + ": unknown packing/padding convention");
  m.residual_out = get_i32(in, path);
  m.chroma_out = get_i32(in, path);
  m.main_out = get_i32(in, path);
  const uint32_t n_layers = get_u32(in, path);
  if (n_layers > 4096) throw std::runtime_error(path + ": implausible layer count");
  for (uint32_t i = 0; i < n_layers; ++i) {
    uint8_t tag[2];
    in.read(reinterpret_cast<char*>(tag), 2);
    if (!in) throw std::runtime_error(path + ": truncated layer table");
    LayerDesc d;
    d.op = static_cast<LayerOp>(tag[0]);
    d.init = static_cast<ParamInit>(tag[1]);
    d.cin = get_i32(in, path);
    d.cout = get_i32(in, path);
    d.stride = get_i32(in, path);
    d.a = get_i32(in, path);
    d.b = get_i32(in, path);
    d.in0 = get_i32(in, path);
    d.in1 = get_i32(in, path);
    m.layers.push_back(d);
  }
  const uint32_t n_params = get_u32(in, path);
  for (uint32_t i = 0; i < n_params; ++i) {
    const uint16_t len = get_u16(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    uint8_t nd = 0;
    in.read(reinterpret_cast<char*>(&nd), 1);
    if (!in) throw std::runtime_error(path + ": truncated parameter table");
    FTensor t;
    for (int e = 0; e < nd; ++e)
      t.shape.push_back(static_cast<int>(get_u32(in, path)));
    t.v.resize(static_cast<size_t>(shape_size(t.shape)));
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(float)));
    if (!in) throw std::runtime_error(path + ": truncated tensor data for " + name);
    m.params[name] = std::move(t);
  }
  // validate stored tensors against the descriptor table
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerDesc& d = m.layers[i];
    if (!has_weights(d.op)) continue;
    auto it = m.params.find(param_w(i));
    if (it == m.params.end() || it->second.shape != weight_shape(d))
      throw std::runtime_error(path + ": tensor " + param_w(i) +
                               " missing or mismatched against the layer table");
    if (has_bias(d.op)) {
      auto bt = m.params.find(param_b(i));
      if (bt == m.params.end() || bt->second.shape != Shape{d.cout})
        throw std::runtime_error(path + ": tensor " + param_b(i) +
                                 " missing or mismatched against the layer table");
    }
  }
  return m;
}

WrapperModel load_weights(const std::string& path, ModelKind expected_kind) {
  WrapperModel m = load_weights(path);
  if (m.kind != expected_kind)
    throw std::runtime_error(path + ": expected a " +
                             (expected_kind == ModelKind::Pre ? std::string("downsampling")
                                                              : std::string("upsampling")) +
                             " model");
  return m;
}

// --- model bank --------------------------------------------------------------------

std::string ModelBank::file_name(ModelKind kind, WrapperFlag flag, int ratio_index) {
  if (kind == ModelKind::Pre) return "pre_r" + std::to_string(ratio_index) + ".nwrp";
  return (flag == WrapperFlag::Pair ? "post_pair_r" : "post_only_r") +
         std::to_string(ratio_index) + ".nwrp";
}

ModelBank ModelBank::load_dir(const std::string& dir) {
  ModelBank bank;
  for (int k = 1; k <= 4; ++k) {
    for (auto [kind, flag] : {std::pair{ModelKind::Pre, WrapperFlag::Pair},
                              {ModelKind::Post, WrapperFlag::Pair},
                              {ModelKind::Post, WrapperFlag::PostOnly}}) {
      const std::string name = file_name(kind, flag, k);
      const std::string path = dir + "/" + name;
      if (std::filesystem::exists(path)) bank.models_[name] = load_weights(path, kind);
    }
  }
  return bank;
}

void ModelBank::put(ModelKind kind, WrapperFlag flag, const WrapperModel& m) {
  models_[file_name(kind, flag, m.ratio.index)] = m;
}

bool ModelBank::has(ModelKind kind, WrapperFlag flag, int ratio_index) const {
  return models_.count(file_name(kind, flag, ratio_index)) > 0;
}

const WrapperModel& ModelBank::get(ModelKind kind, WrapperFlag flag,
                                   int ratio_index) const {
  auto it = models_.find(file_name(kind, flag, ratio_index));
  if (it == models_.end())
    throw std::runtime_error("model bank is missing " +
                             file_name(kind, flag, ratio_index) + " (kind=" +
                             (kind == ModelKind::Pre ? "pre" : "post") + ", ratio index " +
                             std::to_string(ratio_index) + ")");
  return it->second;
}

}  // namespace nwrap
