// Topology, inference and serialization for the switchable downsampling
// network and the lightweight upsampling network, plus complexity accounting.
//
// A model is a small DAG of layer descriptors over named parameter tensors.
// The same descriptors drive three consumers: the f32 inference runner, the
// f64 training path (which registers the parameters in a Graph), and the
// analytic MAC/parameter counter.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nwrap/frame.hpp"
#include "nwrap/resample.hpp"
#include "nwrap/tensor.hpp"

namespace nwrap {

struct FTensor {
  Shape shape;
  std::vector<float> v;

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(v.size()); }
};

enum class LayerOp : uint8_t {
  Pointwise = 0,      // 1x1 cross-channel; w[cout,cin], b[cout]
  Depthwise = 1,      // 3x3 per-channel, stride 1 or 2, same padding; w[c,3,3]
  StridedConv = 2,    // kernel = stride in {2,3}; w[cout,cin,s,s], b[cout]
  TransposedConv = 3, // inverse of StridedConv
  Conv3x3 = 4,        // full 3x3, stride 1, same padding
  LeakyRelu = 5,
  Resize = 6,         // bilinear by a/b relative to the layer input
  Add = 7,            // in0 + in1
  Slice = 8,          // channels [a, b)
};

enum class ParamInit : uint8_t {
  He = 0,
  Zero = 1,
  DiagOnes = 2,    // square pointwise identity
  PairSplit = 3,   // route each input to a +/- unit pair
  PairMerge = 4,   // recombine the pairs into an exact linear identity
  CenterPass = 5,  // 3x3 identity: center tap 1 on the diagonal
};

struct LayerDesc {
  LayerOp op;
  ParamInit init = ParamInit::He;
  int cin = 0, cout = 0;
  int stride = 1;
  int a = 0, b = 0;        // slice range or resize numerator/denominator
  int in0 = -1, in1 = -1;  // value refs: 0 = DAG input, i+1 = layer i output
};

enum class ModelKind : uint8_t { Pre = 0, Post = 1 };
enum class WrapperFlag : uint8_t { Pair = 0, PostOnly = 1 };

constexpr double kLeakySlope = 0.2;
constexpr uint32_t kWeightFormatVersion = 1;

struct WrapperModel {
  ModelKind kind = ModelKind::Post;
  Ratio ratio;
  uint32_t version = kWeightFormatVersion;
  std::vector<LayerDesc> layers;
  std::map<std::string, FTensor> params;
  int residual_out = -1;  // post: 6-channel residual ref
  int chroma_out = -1;    // post: filtered chroma base ref
  int main_out = -1;      // pre: output ref
};

/// The upsampling network: shared topology for every ratio (the ratio only
/// affects the packing in front of it), two stride-2 levels, all spatial
/// convs depthwise 3x3 + pointwise, residual outputs over the packed input.
WrapperModel build_postprocessor(uint64_t seed = 1);
/// The downsampling network: stem + one internal level + the stride stage
/// configured per ratio + head, summed with a parallel 3-layer 1x1 path on
/// the resampled input. Initialized to an exact pass-through resampler.
WrapperModel build_preprocessor(const Ratio& ratio, uint64_t seed = 1);

struct ModelCost {
  double macs_per_pixel = 0;  // multiply-accumulates per source pixel
  int64_t parameters = 0;
};
/// Analytic cost from the descriptors alone, normalized by source pixels.
/// Bias adds are not counted as MACs; resizes count 4 per output element.
ModelCost count_macs(const WrapperModel& m, int width, int height);

/// Hash over the descriptor table only; parameter values do not contribute.
uint64_t topology_hash(const WrapperModel& m);

void save_weights(const WrapperModel& m, const std::string& path);
WrapperModel load_weights(const std::string& path);
WrapperModel load_weights(const std::string& path, ModelKind expected_kind);

// --- inference (f32) ------------------------------------------------------

/// Packs, runs the network, merges the shortcut and rounds to out_depth,
/// cropping to the requested source extents.
FrameYUV420 run_postprocess(const WrapperModel& m, const FrameYUV420& bottleneck,
                            const Ratio& ratio, int target_width, int target_height,
                            int out_depth);
/// Pads the source to the ratio's modulus, produces the reduced-resolution
/// frame; always written as 10-bit.
FrameYUV420 run_preprocess(const WrapperModel& m, const FrameYUV420& source);

// --- training bridge (f64 graph) -------------------------------------------

/// Registers the model parameters in the graph under prefix + name,
/// initialized from the stored f32 values.
void bind_parameters(const WrapperModel& m, Graph& g, const std::string& prefix);
/// Writes trained values back into the model (f32).
void store_parameters(WrapperModel& m, const Graph& g, const std::string& prefix);

/// Downsampling network forward on a packed 6-channel input.
Tensor run_pre_train(const WrapperModel& m, Graph& g, const Tensor& packed,
                     const std::string& prefix);
/// Upsampling network forward + shortcut merge; returns normalized planes.
PlaneTensors run_post_train(const WrapperModel& m, Graph& g, const Tensor& packed,
                            const std::string& prefix);

/// 6-channel packing of an already-normalized plane triplet (training path).
Tensor pack_planes_train(const PlaneTensors& t, const Ratio& ratio, int target_h,
                         int target_w);

// --- model bank -------------------------------------------------------------

/// Weight files for the four ratios in both trained configurations, found by
/// their conventional names under one directory: pre_r{k}.nwrp,
/// post_pair_r{k}.nwrp, post_only_r{k}.nwrp.
class ModelBank {
 public:
  ModelBank() = default;
  static ModelBank load_dir(const std::string& dir);

  void put(ModelKind kind, WrapperFlag flag, const WrapperModel& m);
  bool has(ModelKind kind, WrapperFlag flag, int ratio_index) const;
  const WrapperModel& get(ModelKind kind, WrapperFlag flag, int ratio_index) const;

  static std::string file_name(ModelKind kind, WrapperFlag flag, int ratio_index);

 private:
  std::map<std::string, WrapperModel> models_;
};

}  // namespace nwrap
