// Dense tensors with reverse-mode differentiation, sized for small
// convolutional models. Training math runs in f64; the model runners keep a
// separate f32 path for inference.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nwrap {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_size(const Shape& s);

class Graph;

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on first use during backward
  Graph* graph = nullptr;
  int id = -1;
  std::string name;  // parameters only
  bool trainable = false;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  double* grad_data();  // allocates (zeroed) if absent
};

/// Handle to one value in (or outside of) a differentiation graph.
/// Graph-free tensors are plain immutable buffers and safe to share across
/// threads; graph-attached tensors belong to their single-threaded graph.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, double fill);
  Tensor(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return node_->size(); }
  Graph* graph() const { return node_ ? node_->graph : nullptr; }
  const std::string& name() const { return node_->name; }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  double scalar() const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> n);

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Records operations in execution order and replays them backwards.
/// Holds the registry of named trainable parameters, which persist across
/// reset_tape() calls so an optimizer can step them between iterations.
class Graph {
 public:
  Tensor parameter(const std::string& name, const Shape& shape,
                   const std::vector<double>& init);
  Tensor parameter(const std::string& name, const Shape& shape, double fill = 0.0);
  bool has_parameter(const std::string& name) const;
  Tensor get_parameter(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }

  void backward(const Tensor& loss);
  void zero_grad();
  void reset_tape();
  size_t tape_size() const { return tape_.size(); }
  /// Recomputes every recorded value in recording order (used by grad_check
  /// after perturbing a parameter).
  void replay();

  // recording internals, used by the op implementations
  int next_id() { return id_counter_++; }
  void record(std::function<void()> fwd, std::function<void()> bwd,
              std::vector<std::shared_ptr<TensorNode>> keep_alive);

 private:
  struct TapeEntry {
    std::function<void()> forward;
    std::function<void()> backward;
    std::vector<std::shared_ptr<TensorNode>> nodes;
  };
  std::vector<TapeEntry> tape_;
  std::vector<std::pair<std::string, Tensor>> params_;
  int id_counter_ = 0;
};

enum class Pad { Same, Valid };

// --- op set ------------------------------------------------------------
// Every op validates shapes, computes eagerly, and records itself when any
// input is graph-attached. Mixing tensors from two graphs is an error.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, double scale, double shift);
Tensor scale(const Tensor& x, double s);
Tensor exp(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
/// Clamp with pass-through gradient inside [lo, hi] and zero outside.
Tensor clip_ste(const Tensor& x, double lo, double hi);
/// q * round(x / q) with round treated as identity in the chain rule:
/// d/dx = 1, d/dq = round(x/q) - x/q. q is a positive scalar tensor.
Tensor quantize_ste(const Tensor& x, const Tensor& q);

Tensor sum(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& x, int begin, int end);
/// C,H,W -> 4C,H/2,W/2; per 2x2 block the order is TL, TR, BL, BR.
Tensor space_to_depth2(const Tensor& x);
Tensor depth_to_space2(const Tensor& x);
Tensor crop2d(const Tensor& x, int out_h, int out_w);
Tensor edge_pad2d(const Tensor& x, int pad_bottom, int pad_right);

/// Per-channel conv, kernel [C,kh,kw], odd kh/kw. Same padding uses k/2 on
/// each side with floor output arithmetic, so stride 2 on even extents
/// halves them.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& k, int stride, Pad pad);
/// 1x1 cross-channel conv; k is [Cout,Cin], b is [Cout].
Tensor pointwise_conv2d(const Tensor& x, const Tensor& k, const Tensor& b);
/// Downsampling conv with kernel extent equal to the stride (2 or 3), no
/// padding; input extents must divide by the stride.
Tensor strided_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride);
/// Exact inverse shape-wise: scatters each input pixel to a stride x stride
/// output block.
Tensor transposed_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride);
/// Full cross-channel 3x3, stride 1, same padding; k is [Cout,Cin,3,3].
Tensor conv2d_3x3_same(const Tensor& x, const Tensor& k, const Tensor& b);
/// align-corners=false sampling; identity when extents are unchanged.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

/// Sum over all inputs of log(1 + |y|/q); the rate surrogate both losses
/// and its gradient are built from. q is a positive scalar tensor.
Tensor log_abs_rate_sum(std::span<const Tensor> coeffs, const Tensor& q);

/// Builder for ops defined outside this translation unit (block transforms
/// live with the codec proxy). forward fills out.value from the inputs;
/// backward accumulates into each input's grad from out.grad.
Tensor record_op(
    std::vector<Tensor> inputs, Shape out_shape,
    std::function<void(const std::vector<std::shared_ptr<TensorNode>>&, TensorNode&)> forward,
    std::function<void(const std::vector<std::shared_ptr<TensorNode>>&, TensorNode&)> backward);

void backward(Graph& g, const Tensor& loss);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int components = 0;
};
struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_err = 0.0;
};

/// Central-difference check of every registered parameter against the
/// recorded gradients. Tensors larger than max_components are sampled at
/// evenly spaced components; pass a large value to check exhaustively.
GradCheckReport grad_check(Graph& g, const Tensor& loss, double eps,
                           int max_components = 16);

}  // namespace nwrap
