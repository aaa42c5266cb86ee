#include "nwrap/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "kernels.hpp"

namespace nwrap {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

double* TensorNode::grad_data() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad.data();
}

Tensor::Tensor(Shape shape, double fill) {
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->value.assign(static_cast<size_t>(shape_size(node_->shape)), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
}

double Tensor::scalar() const {
  if (!node_ || node_->size() != 1)
    throw std::invalid_argument("scalar() on tensor of shape " +
                                (node_ ? shape_str(node_->shape) : std::string("<null>")));
  return node_->value[0];
}

Tensor Tensor::wrap(std::shared_ptr<TensorNode> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

// --- graph ---------------------------------------------------------------

Tensor Graph::parameter(const std::string& name, const Shape& shape,
                        const std::vector<double>& init) {
  for (auto& [n, t] : params_) {
    if (n == name) {
      if (t.shape() != shape)
        throw std::invalid_argument("parameter " + name + " re-registered with shape " +
                                    shape_str(shape) + ", was " + shape_str(t.shape()));
      return t;
    }
  }
  Tensor t(shape, init);
  t.node()->graph = this;
  t.node()->id = next_id();
  t.node()->name = name;
  t.node()->trainable = true;
  params_.emplace_back(name, t);
  return t;
}

Tensor Graph::parameter(const std::string& name, const Shape& shape, double fill) {
  return parameter(name, shape,
                   std::vector<double>(static_cast<size_t>(shape_size(shape)), fill));
}

bool Graph::has_parameter(const std::string& name) const {
  for (auto& [n, t] : params_)
    if (n == name) return true;
  return false;
}

Tensor Graph::get_parameter(const std::string& name) const {
  for (auto& [n, t] : params_)
    if (n == name) return t;
  throw std::out_of_range("no parameter named " + name);
}

void Graph::record(std::function<void()> fwd, std::function<void()> bwd,
                   std::vector<std::shared_ptr<TensorNode>> keep_alive) {
  tape_.push_back({std::move(fwd), std::move(bwd), std::move(keep_alive)});
}

void Graph::reset_tape() { tape_.clear(); }

void Graph::zero_grad() {
  for (auto& [n, t] : params_) {
    auto& g = t.node()->grad;
    g.assign(t.node()->value.size(), 0.0);
  }
}

void Graph::replay() {
  for (auto& e : tape_) e.forward();
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));
  if (loss.graph() != this)
    throw std::invalid_argument("loss does not belong to this graph");
  for (auto& e : tape_)
    for (auto& n : e.nodes) n->grad.assign(n->value.size(), 0.0);
  zero_grad();
  loss.node()->grad_data()[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->backward();
}

void backward(Graph& g, const Tensor& loss) { g.backward(loss); }

// --- op plumbing -----------------------------------------------------------

namespace {

Graph* merged_graph(std::span<const Tensor> inputs) {
  Graph* g = nullptr;
  for (const auto& t : inputs) {
    if (!t.defined()) throw std::invalid_argument("undefined tensor passed to op");
    Graph* tg = t.graph();
    if (!tg) continue;
    if (g && tg != g) throw std::invalid_argument("op inputs belong to different graphs");
    g = tg;
  }
  return g;
}

void check_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3)
    throw std::invalid_argument(std::string(what) + " must be C,H,W, got " +
                                shape_str(t.shape()));
}

}  // namespace

Tensor record_op(
    std::vector<Tensor> inputs, Shape out_shape,
    std::function<void(const std::vector<std::shared_ptr<TensorNode>>&, TensorNode&)> forward,
    std::function<void(const std::vector<std::shared_ptr<TensorNode>>&, TensorNode&)> backward) {
  Graph* g = merged_graph(inputs);
  Tensor out(std::move(out_shape), 0.0);
  std::vector<std::shared_ptr<TensorNode>> in_nodes;
  in_nodes.reserve(inputs.size());
  for (auto& t : inputs) in_nodes.push_back(t.node());
  auto out_node = out.node();
  forward(in_nodes, *out_node);
  if (g) {
    out_node->graph = g;
    out_node->id = g->next_id();
    auto keep = in_nodes;
    keep.push_back(out_node);
    g->record([in_nodes, out_node, forward] { forward(in_nodes, *out_node); },
              [in_nodes, out_node, backward] { backward(in_nodes, *out_node); },
              std::move(keep));
  }
  return out;
}

// --- elementwise -----------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return record_op(
      {a, b}, a.shape(),
      [](const auto& in, TensorNode& out) {
        for (size_t i = 0; i < out.value.size(); ++i)
          out.value[i] = in[0]->value[i] + in[1]->value[i];
      },
      [](const auto& in, const TensorNode& out) {
        double* ga = in[0]->grad_data();
        double* gb = in[1]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i) {
          ga[i] += out.grad[i];
          gb[i] += out.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return record_op(
      {a, b}, a.shape(),
      [](const auto& in, TensorNode& out) {
        for (size_t i = 0; i < out.value.size(); ++i)
          out.value[i] = in[0]->value[i] - in[1]->value[i];
      },
      [](const auto& in, const TensorNode& out) {
        double* ga = in[0]->grad_data();
        double* gb = in[1]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i) {
          ga[i] += out.grad[i];
          gb[i] -= out.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return record_op(
      {a, b}, a.shape(),
      [](const auto& in, TensorNode& out) {
        for (size_t i = 0; i < out.value.size(); ++i)
          out.value[i] = in[0]->value[i] * in[1]->value[i];
      },
      [](const auto& in, const TensorNode& out) {
        double* ga = in[0]->grad_data();
        double* gb = in[1]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i) {
          ga[i] += out.grad[i] * in[1]->value[i];
          gb[i] += out.grad[i] * in[0]->value[i];
        }
      });
}

Tensor affine(const Tensor& x, double s, double shift) {
  return record_op(
      {x}, x.shape(),
      [s, shift](const auto& in, TensorNode& out) {
        for (size_t i = 0; i < out.value.size(); ++i)
          out.value[i] = s * in[0]->value[i] + shift;
      },
      [s](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i) g[i] += s * out.grad[i];
      });
}

Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

Tensor exp(const Tensor& x) {
  return record_op(
      {x}, x.shape(),
      [](const auto& in, TensorNode& out) {
        for (size_t i = 0; i < out.value.size(); ++i)
          out.value[i] = std::exp(in[0]->value[i]);
      },
      [](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i) g[i] += out.grad[i] * out.value[i];
      });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return record_op(
      {x}, x.shape(),
      [slope](const auto& in, TensorNode& out) {
        for (size_t i = 0; i < out.value.size(); ++i) {
          const double v = in[0]->value[i];
          out.value[i] = v > 0.0 ? v : slope * v;
        }
      },
      [slope](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i)
          g[i] += out.grad[i] * (in[0]->value[i] > 0.0 ? 1.0 : slope);
      });
}

Tensor clip_ste(const Tensor& x, double lo, double hi) {
  return record_op(
      {x}, x.shape(),
      [lo, hi](const auto& in, TensorNode& out) {
        for (size_t i = 0; i < out.value.size(); ++i)
          out.value[i] = std::min(hi, std::max(lo, in[0]->value[i]));
      },
      [lo, hi](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i) {
          const double v = in[0]->value[i];
          if (v >= lo && v <= hi) g[i] += out.grad[i];
        }
      });
}

Tensor quantize_ste(const Tensor& x, const Tensor& q) {
  if (q.size() != 1) throw std::invalid_argument("quantize_ste: q must be scalar");
  return record_op(
      {x, q}, x.shape(),
      [](const auto& in, TensorNode& out) {
        const double qv = in[1]->value[0];
        for (size_t i = 0; i < out.value.size(); ++i)
          out.value[i] = qv * std::round(in[0]->value[i] / qv);
      },
      [](const auto& in, const TensorNode& out) {
        const double qv = in[1]->value[0];
        double* gx = in[0]->grad_data();
        double* gq = in[1]->grad_data();
        double qacc = 0.0;
        for (size_t i = 0; i < out.value.size(); ++i) {
          gx[i] += out.grad[i];
          const double u = in[0]->value[i] / qv;
          qacc += out.grad[i] * (std::round(u) - u);
        }
        gq[0] += qacc;
      });
}

// --- reductions --------------------------------------------------------------

Tensor sum(const Tensor& x) {
  return record_op(
      {x}, Shape{1},
      [](const auto& in, TensorNode& out) {
        double acc = 0.0;
        for (double v : in[0]->value) acc += v;
        out.value[0] = acc;
      },
      [](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        const double go = out.grad[0];
        for (size_t i = 0; i < in[0]->value.size(); ++i) g[i] += go;
      });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  return record_op(
      {a, b}, Shape{1},
      [](const auto& in, TensorNode& out) {
        double acc = 0.0;
        for (size_t i = 0; i < in[0]->value.size(); ++i) {
          const double d = in[0]->value[i] - in[1]->value[i];
          acc += d * d;
        }
        out.value[0] = acc / static_cast<double>(in[0]->value.size());
      },
      [](const auto& in, const TensorNode& out) {
        double* ga = in[0]->grad_data();
        double* gb = in[1]->grad_data();
        const double c = 2.0 * out.grad[0] / static_cast<double>(in[0]->value.size());
        for (size_t i = 0; i < in[0]->value.size(); ++i) {
          const double d = c * (in[0]->value[i] - in[1]->value[i]);
          ga[i] += d;
          gb[i] -= d;
        }
      });
}

Tensor log_abs_rate_sum(std::span<const Tensor> coeffs, const Tensor& q) {
  if (coeffs.empty()) throw std::invalid_argument("log_abs_rate_sum: no coefficients");
  if (q.size() != 1) throw std::invalid_argument("log_abs_rate_sum: q must be scalar");
  std::vector<Tensor> inputs(coeffs.begin(), coeffs.end());
  inputs.push_back(q);
  const size_t nc = coeffs.size();
  return record_op(
      std::move(inputs), Shape{1},
      [nc](const auto& in, TensorNode& out) {
        const double qv = in[nc]->value[0];
        double acc = 0.0;
        for (size_t t = 0; t < nc; ++t)
          for (double v : in[t]->value) acc += std::log1p(std::abs(v) / qv);
        out.value[0] = acc;
      },
      [nc](const auto& in, const TensorNode& out) {
        const double qv = in[nc]->value[0];
        const double go = out.grad[0];
        double qacc = 0.0;
        for (size_t t = 0; t < nc; ++t) {
          double* g = in[t]->grad_data();
          const auto& v = in[t]->value;
          for (size_t i = 0; i < v.size(); ++i) {
            const double a = std::abs(v[i]);
            const double s = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
            g[i] += go * s / (qv + a);
            qacc += -a / (qv * (qv + a));
          }
        }
        in[nc]->grad_data()[0] += go * qacc;
      });
}

// --- structure ---------------------------------------------------------------

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: empty input");
  int C = 0;
  const int H = parts[0].dim(1), W = parts[0].dim(2);
  for (const auto& p : parts) {
    check_chw(p, "concat_channels input");
    if (p.dim(1) != H || p.dim(2) != W)
      throw std::invalid_argument("concat_channels: extent mismatch " +
                                  shape_str(p.shape()) + " vs " +
                                  shape_str(parts[0].shape()));
    C += p.dim(0);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record_op(
      std::move(inputs), Shape{C, H, W},
      [](const auto& in, TensorNode& out) {
        size_t off = 0;
        for (auto& p : in) {
          std::copy(p->value.begin(), p->value.end(), out.value.begin() + off);
          off += p->value.size();
        }
      },
      [](const auto& in, const TensorNode& out) {
        size_t off = 0;
        for (auto& p : in) {
          double* g = p->grad_data();
          for (size_t i = 0; i < p->value.size(); ++i) g[i] += out.grad[off + i];
          off += p->value.size();
        }
      });
}

Tensor slice_channels(const Tensor& x, int begin, int end) {
  check_chw(x, "slice_channels input");
  if (begin < 0 || end > x.dim(0) || begin >= end)
    throw std::invalid_argument("slice_channels: bad range [" + std::to_string(begin) +
                                "," + std::to_string(end) + ") for " + shape_str(x.shape()));
  const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  return record_op(
      {x}, Shape{end - begin, x.dim(1), x.dim(2)},
      [begin, hw](const auto& in, TensorNode& out) {
        std::copy_n(in[0]->value.begin() + begin * hw, out.value.size(),
                    out.value.begin());
      },
      [begin, hw](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < out.value.size(); ++i)
          g[static_cast<size_t>(begin * hw) + i] += out.grad[i];
      });
}

Tensor space_to_depth2(const Tensor& x) {
  check_chw(x, "space_to_depth2 input");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 || W % 2)
    throw std::invalid_argument("space_to_depth2 needs even extents, got " +
                                shape_str(x.shape()));
  return record_op(
      {x}, Shape{4 * C, H / 2, W / 2},
      [C, H, W](const auto& in, TensorNode& out) {
        kern::space_to_depth2(in[0]->value.data(), C, H, W, out.value.data());
      },
      [C, H, W](const auto& in, const TensorNode& out) {
        // permutation: route each output grad back to its source cell
        std::vector<double> tmp(out.value.size());
        kern::depth_to_space2(out.grad.data(), 4 * C, H / 2, W / 2, tmp.data());
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
      });
}

Tensor depth_to_space2(const Tensor& x) {
  check_chw(x, "depth_to_space2 input");
  const int C4 = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (C4 % 4)
    throw std::invalid_argument("depth_to_space2 needs 4k channels, got " +
                                shape_str(x.shape()));
  return record_op(
      {x}, Shape{C4 / 4, H * 2, W * 2},
      [C4, H, W](const auto& in, TensorNode& out) {
        kern::depth_to_space2(in[0]->value.data(), C4, H, W, out.value.data());
      },
      [C4, H, W](const auto& in, const TensorNode& out) {
        std::vector<double> tmp(out.value.size());
        kern::space_to_depth2(out.grad.data(), C4 / 4, H * 2, W * 2, tmp.data());
        double* g = in[0]->grad_data();
        for (size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
      });
}

Tensor crop2d(const Tensor& x, int out_h, int out_w) {
  check_chw(x, "crop2d input");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (out_h > H || out_w > W || out_h < 1 || out_w < 1)
    throw std::invalid_argument("crop2d: target " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " outside " + shape_str(x.shape()));
  return record_op(
      {x}, Shape{C, out_h, out_w},
      [C, H, W, out_h, out_w](const auto& in, TensorNode& out) {
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < out_h; ++i)
            std::copy_n(in[0]->value.begin() + (static_cast<int64_t>(c) * H + i) * W,
                        out_w,
                        out.value.begin() + (static_cast<int64_t>(c) * out_h + i) * out_w);
      },
      [C, H, W, out_h, out_w](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < out_h; ++i)
            for (int j = 0; j < out_w; ++j)
              g[(static_cast<int64_t>(c) * H + i) * W + j] +=
                  out.grad[(static_cast<int64_t>(c) * out_h + i) * out_w + j];
      });
}

Tensor edge_pad2d(const Tensor& x, int pad_bottom, int pad_right) {
  check_chw(x, "edge_pad2d input");
  if (pad_bottom < 0 || pad_right < 0)
    throw std::invalid_argument("edge_pad2d: negative padding");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int oH = H + pad_bottom, oW = W + pad_right;
  return record_op(
      {x}, Shape{C, oH, oW},
      [C, H, W, oH, oW](const auto& in, TensorNode& out) {
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < oH; ++i) {
            const int si = std::min(i, H - 1);
            for (int j = 0; j < oW; ++j) {
              const int sj = std::min(j, W - 1);
              out.value[(static_cast<int64_t>(c) * oH + i) * oW + j] =
                  in[0]->value[(static_cast<int64_t>(c) * H + si) * W + sj];
            }
          }
      },
      [C, H, W, oH, oW](const auto& in, const TensorNode& out) {
        double* g = in[0]->grad_data();
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < oH; ++i) {
            const int si = std::min(i, H - 1);
            for (int j = 0; j < oW; ++j) {
              const int sj = std::min(j, W - 1);
              g[(static_cast<int64_t>(c) * H + si) * W + sj] +=
                  out.grad[(static_cast<int64_t>(c) * oH + i) * oW + j];
            }
          }
      });
}

// --- convolutions --------------------------------------------------------------

Tensor depthwise_conv2d(const Tensor& x, const Tensor& k, int stride, Pad pad) {
  check_chw(x, "depthwise_conv2d input");
  check_chw(k, "depthwise_conv2d kernel");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int kh = k.dim(1), kw = k.dim(2);
  if (k.dim(0) != C)
    throw std::invalid_argument("depthwise_conv2d: kernel channels " + shape_str(k.shape()) +
                                " do not match input " + shape_str(x.shape()));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("depthwise_conv2d: kernel extents must be odd, got " +
                                shape_str(k.shape()));
  if (stride < 1) throw std::invalid_argument("depthwise_conv2d: stride must be >= 1");
  const int p = pad == Pad::Same ? kh / 2 : 0;
  const int oH = kern::conv_out_extent(H, kh, stride, p);
  const int oW = kern::conv_out_extent(W, kw, stride, p);
  if (oH < 1 || oW < 1)
    throw std::invalid_argument("depthwise_conv2d: empty output for input " +
                                shape_str(x.shape()) + " kernel " + shape_str(k.shape()));
  return record_op(
      {x, k}, Shape{C, oH, oW},
      [=](const auto& in, TensorNode& out) {
        kern::dwconv2d(in[0]->value.data(), C, H, W, in[1]->value.data(), kh, kw,
                       stride, p, out.value.data(), oH, oW);
      },
      [=](const auto& in, const TensorNode& out) {
        double* gx = in[0]->grad_data();
        double* gk = in[1]->grad_data();
        const auto& xv = in[0]->value;
        const auto& kv = in[1]->value;
        for (int c = 0; c < C; ++c)
          for (int oi = 0; oi < oH; ++oi)
            for (int oj = 0; oj < oW; ++oj) {
              const double go = out.grad[(static_cast<int64_t>(c) * oH + oi) * oW + oj];
              if (go == 0.0) continue;
              const int i0 = oi * stride - p, j0 = oj * stride - p;
              for (int di = 0; di < kh; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= H) continue;
                for (int dj = 0; dj < kw; ++dj) {
                  const int j = j0 + dj;
                  if (j < 0 || j >= W) continue;
                  const int64_t xi = (static_cast<int64_t>(c) * H + i) * W + j;
                  const int64_t ki = (static_cast<int64_t>(c) * kh + di) * kw + dj;
                  gx[xi] += go * kv[ki];
                  gk[ki] += go * xv[xi];
                }
              }
            }
      });
}

Tensor pointwise_conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
  check_chw(x, "pointwise_conv2d input");
  if (k.rank() != 2)
    throw std::invalid_argument("pointwise_conv2d: kernel must be Cout,Cin, got " +
                                shape_str(k.shape()));
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = k.dim(0);
  if (k.dim(1) != Cin)
    throw std::invalid_argument("pointwise_conv2d: kernel " + shape_str(k.shape()) +
                                " does not match input channels " + shape_str(x.shape()));
  if (b.rank() != 1 || b.dim(0) != Cout)
    throw std::invalid_argument("pointwise_conv2d: bias shape " + shape_str(b.shape()) +
                                " does not match Cout " + std::to_string(Cout));
  const int64_t hw = static_cast<int64_t>(H) * W;
  return record_op(
      {x, k, b}, Shape{Cout, H, W},
      [=](const auto& in, TensorNode& out) {
        kern::pwconv2d(in[0]->value.data(), Cin, hw, in[1]->value.data(),
                       in[2]->value.data(), Cout, out.value.data());
      },
      [=](const auto& in, const TensorNode& out) {
        double* gx = in[0]->grad_data();
        double* gk = in[1]->grad_data();
        double* gb = in[2]->grad_data();
        const auto& xv = in[0]->value;
        const auto& kv = in[1]->value;
        for (int co = 0; co < Cout; ++co) {
          const double* go = out.grad.data() + co * hw;
          double bacc = 0.0;
          for (int64_t p2 = 0; p2 < hw; ++p2) bacc += go[p2];
          gb[co] += bacc;
          for (int ci = 0; ci < Cin; ++ci) {
            const double w = kv[static_cast<size_t>(co) * Cin + ci];
            const double* xc = xv.data() + ci * hw;
            double* gxc = gx + ci * hw;
            double kacc = 0.0;
            for (int64_t p2 = 0; p2 < hw; ++p2) {
              gxc[p2] += w * go[p2];
              kacc += go[p2] * xc[p2];
            }
            gk[static_cast<size_t>(co) * Cin + ci] += kacc;
          }
        }
      });
}

namespace {

void check_stride_kernel(const Tensor& x, const Tensor& k, const Tensor& b, int stride,
                         const char* op) {
  check_chw(x, op);
  if (k.rank() != 4)
    throw std::invalid_argument(std::string(op) + ": kernel must be Cout,Cin,kh,kw, got " +
                                shape_str(k.shape()));
  if (stride != 2 && stride != 3)
    throw std::invalid_argument(std::string(op) + ": stride must be 2 or 3, got " +
                                std::to_string(stride));
  if (k.dim(2) != stride || k.dim(3) != stride)
    throw std::invalid_argument(std::string(op) + ": kernel extent must equal the stride, got " +
                                shape_str(k.shape()) + " stride " + std::to_string(stride));
  if (k.dim(1) != x.dim(0))
    throw std::invalid_argument(std::string(op) + ": kernel " + shape_str(k.shape()) +
                                " does not match input channels " + shape_str(x.shape()));
  if (b.rank() != 1 || b.dim(0) != k.dim(0))
    throw std::invalid_argument(std::string(op) + ": bias shape " + shape_str(b.shape()) +
                                " does not match Cout " + std::to_string(k.dim(0)));
}

}  // namespace

Tensor strided_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride) {
  check_stride_kernel(x, k, b, stride, "strided_conv2d");
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = k.dim(0);
  if (H % stride || W % stride)
    throw std::invalid_argument(
        "strided_conv2d: extents " + shape_str(x.shape()) + " not divisible by stride " +
        std::to_string(stride) + "; pad the input first");
  const int oH = H / stride, oW = W / stride;
  return record_op(
      {x, k, b}, Shape{Cout, oH, oW},
      [=](const auto& in, TensorNode& out) {
        kern::sconv2d(in[0]->value.data(), Cin, H, W, in[1]->value.data(),
                      in[2]->value.data(), Cout, stride, out.value.data());
      },
      [=](const auto& in, const TensorNode& out) {
        double* gx = in[0]->grad_data();
        double* gk = in[1]->grad_data();
        double* gb = in[2]->grad_data();
        const auto& xv = in[0]->value;
        const auto& kv = in[1]->value;
        for (int co = 0; co < Cout; ++co)
          for (int oi = 0; oi < oH; ++oi)
            for (int oj = 0; oj < oW; ++oj) {
              const double go = out.grad[(static_cast<int64_t>(co) * oH + oi) * oW + oj];
              if (go == 0.0) continue;
              gb[co] += go;
              for (int ci = 0; ci < Cin; ++ci)
                for (int di = 0; di < stride; ++di)
                  for (int dj = 0; dj < stride; ++dj) {
                    const int64_t xi =
                        (static_cast<int64_t>(ci) * H + oi * stride + di) * W +
                        oj * stride + dj;
                    const int64_t ki =
                        ((static_cast<int64_t>(co) * Cin + ci) * stride + di) * stride + dj;
                    gx[xi] += go * kv[ki];
                    gk[ki] += go * xv[xi];
                  }
            }
      });
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride) {
  check_stride_kernel(x, k, b, stride, "transposed_conv2d");
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = k.dim(0);
  const int oH = H * stride, oW = W * stride;
  return record_op(
      {x, k, b}, Shape{Cout, oH, oW},
      [=](const auto& in, TensorNode& out) {
        kern::tconv2d(in[0]->value.data(), Cin, H, W, in[1]->value.data(),
                      in[2]->value.data(), Cout, stride, out.value.data());
      },
      [=](const auto& in, const TensorNode& out) {
        double* gx = in[0]->grad_data();
        double* gk = in[1]->grad_data();
        double* gb = in[2]->grad_data();
        const auto& xv = in[0]->value;
        const auto& kv = in[1]->value;
        for (int co = 0; co < Cout; ++co)
          for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
              for (int di = 0; di < stride; ++di)
                for (int dj = 0; dj < stride; ++dj) {
                  const double go =
                      out.grad[(static_cast<int64_t>(co) * oH + i * stride + di) * oW +
                               j * stride + dj];
                  if (go == 0.0) continue;
                  gb[co] += go;
                  for (int ci = 0; ci < Cin; ++ci) {
                    const int64_t xi = (static_cast<int64_t>(ci) * H + i) * W + j;
                    const int64_t ki =
                        ((static_cast<int64_t>(co) * Cin + ci) * stride + di) * stride + dj;
                    gx[xi] += go * kv[ki];
                    gk[ki] += go * xv[xi];
                  }
                }
      });
}

Tensor conv2d_3x3_same(const Tensor& x, const Tensor& k, const Tensor& b) {
  check_chw(x, "conv2d_3x3_same input");
  if (k.rank() != 4 || k.dim(2) != 3 || k.dim(3) != 3)
    throw std::invalid_argument("conv2d_3x3_same: kernel must be Cout,Cin,3,3, got " +
                                shape_str(k.shape()));
  if (k.dim(1) != x.dim(0))
    throw std::invalid_argument("conv2d_3x3_same: kernel " + shape_str(k.shape()) +
                                " does not match input channels " + shape_str(x.shape()));
  if (b.rank() != 1 || b.dim(0) != k.dim(0))
    throw std::invalid_argument("conv2d_3x3_same: bias shape " + shape_str(b.shape()) +
                                " does not match Cout");
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = k.dim(0);
  return record_op(
      {x, k, b}, Shape{Cout, H, W},
      [=](const auto& in, TensorNode& out) {
        kern::conv3x3_same(in[0]->value.data(), Cin, H, W, in[1]->value.data(),
                           in[2]->value.data(), Cout, out.value.data());
      },
      [=](const auto& in, const TensorNode& out) {
        double* gx = in[0]->grad_data();
        double* gk = in[1]->grad_data();
        double* gb = in[2]->grad_data();
        const auto& xv = in[0]->value;
        const auto& kv = in[1]->value;
        for (int co = 0; co < Cout; ++co)
          for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
              const double go = out.grad[(static_cast<int64_t>(co) * H + i) * W + j];
              if (go == 0.0) continue;
              gb[co] += go;
              for (int ci = 0; ci < Cin; ++ci)
                for (int di = -1; di <= 1; ++di) {
                  const int ii = i + di;
                  if (ii < 0 || ii >= H) continue;
                  for (int dj = -1; dj <= 1; ++dj) {
                    const int jj = j + dj;
                    if (jj < 0 || jj >= W) continue;
                    const int64_t xi = (static_cast<int64_t>(ci) * H + ii) * W + jj;
                    const int64_t ki =
                        (static_cast<int64_t>(co) * Cin + ci) * 9 + (di + 1) * 3 + dj + 1;
                    gx[xi] += go * kv[ki];
                    gk[ki] += go * xv[xi];
                  }
                }
            }
      });
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  check_chw(x, "bilinear_resize input");
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_resize: target extents must be positive");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  return record_op(
      {x}, Shape{C, out_h, out_w},
      [=](const auto& in, TensorNode& out) {
        for (int c = 0; c < C; ++c)
          kern::bilinear_resize_plane(in[0]->value.data() + static_cast<int64_t>(c) * H * W,
                                      H, W,
                                      out.value.data() + static_cast<int64_t>(c) * out_h * out_w,
                                      out_h, out_w);
      },
      [=](const auto& in, const TensorNode& out) {
        const auto rows = kern::bilinear_taps(H, out_h);
        const auto cols = kern::bilinear_taps(W, out_w);
        double* gx = in[0]->grad_data();
        for (int c = 0; c < C; ++c) {
          double* gc = gx + static_cast<int64_t>(c) * H * W;
          const double* go = out.grad.data() + static_cast<int64_t>(c) * out_h * out_w;
          for (int oi = 0; oi < out_h; ++oi) {
            const auto& r = rows[static_cast<size_t>(oi)];
            for (int oj = 0; oj < out_w; ++oj) {
              const auto& cl = cols[static_cast<size_t>(oj)];
              const double g = go[static_cast<int64_t>(oi) * out_w + oj];
              if (g == 0.0) continue;
              gc[static_cast<int64_t>(r.i0) * W + cl.i0] += g * (1 - r.w) * (1 - cl.w);
              gc[static_cast<int64_t>(r.i0) * W + cl.i1] += g * (1 - r.w) * cl.w;
              gc[static_cast<int64_t>(r.i1) * W + cl.i0] += g * r.w * (1 - cl.w);
              gc[static_cast<int64_t>(r.i1) * W + cl.i1] += g * r.w * cl.w;
            }
          }
        }
      });
}

// --- gradient checking ----------------------------------------------------------

GradCheckReport grad_check(Graph& g, const Tensor& loss, double eps, int max_components) {
  g.backward(loss);
  GradCheckReport report;
  for (const auto& [name, param] : g.parameters()) {
    std::vector<double> analytic = param.node()->grad;
    auto& value = param.node()->value;
    const int64_t n = param.size();
    const int64_t step =
        n <= max_components ? 1 : (n + max_components - 1) / max_components;
    GradCheckEntry entry{name, 0.0, 0};
    for (int64_t i = 0; i < n; i += step) {
      const double saved = value[static_cast<size_t>(i)];
      value[static_cast<size_t>(i)] = saved + eps;
      g.replay();
      const double up = loss.value()[0];
      value[static_cast<size_t>(i)] = saved - eps;
      g.replay();
      const double down = loss.value()[0];
      value[static_cast<size_t>(i)] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = analytic[static_cast<size_t>(i)];
      const double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(fd - ad) / denom);
      ++entry.components;
    }
    g.replay();
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  // restore gradients to the state backward() left them in
  g.backward(loss);
  return report;
}

}  // namespace nwrap
