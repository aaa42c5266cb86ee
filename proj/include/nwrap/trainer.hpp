// End-to-end optimization of the wrapper networks through the codec proxy,
// with the measured-rate-calibrated loss.
#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nwrap/model.hpp"
#include "nwrap/proxy.hpp"

namespace nwrap {

struct TrainConfig {
  Ratio ratio = ratio_from_index(2);
  WrapperFlag flag = WrapperFlag::PostOnly;
  double lambda = 16.0;
  int bottleneck_depth = 10;
  int crop = 240;  // must divide by the ratio's pad modulus
  int steps = 5000;
  int batch = 8;
  double lr = 1e-3;
  uint64_t seed = 1;
  double initial_qf = 75.0;
  std::string dataset_dir;
  std::string out_dir;  // weight files + training log; empty = keep in memory
  int log_every = 25;
};

/// Flat key=value file (ratio, flag, lambda, depth, crop, steps, batch, lr,
/// seed, qf, dataset, out, log_every); '#' starts a comment.
TrainConfig load_train_config(const std::string& path);

struct TrainLogEntry {
  int step = 0;
  double loss = 0, distortion = 0, rate_term = 0, q = 0;
  int qf = 0;
};

struct TrainResult {
  WrapperModel post;
  std::optional<WrapperModel> pre;
  std::vector<TrainLogEntry> log;
};

class Dataset {
 public:
  static Dataset load_dir(const std::string& dir);  // loads every *.ppm
  size_t size() const { return images_.size(); }
  const FrameYUV420& image(size_t i) const { return images_[i]; }
  void add(FrameYUV420 f) { images_.push_back(std::move(f)); }

 private:
  std::vector<FrameYUV420> images_;
};

/// Uniformly random image and even-aligned position per element; images
/// smaller than the crop are skipped with a one-time warning. Deterministic
/// under the generator state.
std::vector<PlaneTensors> make_training_batch(const Dataset& dataset, int crop,
                                              int batch, std::mt19937_64& rng);

/// Distortion (6:1:1-weighted MSE in normalized space) plus lambda times the
/// rate term.
Tensor rd_loss(const PlaneTensors& x, const PlaneTensors& xhat, const Tensor& rate_term,
               double lambda);

struct PipelineLoss {
  Tensor loss;        // scalar rd loss for one sample
  Tensor distortion;  // scalar
  RateLossRecord rate;
  uint64_t measured_bits = 0;  // real coder bits behind the rate term
};

/// Records one full sample pass: (downsampling network | bilinear), codec
/// proxy with the given block size, measured-rate calibration, upsampling
/// network, rd loss. `pre` may be null for the bilinear path; quantize=false
/// runs the proxy in its vanishing-stepsize limit (used by gradient checks).
PipelineLoss build_pipeline_loss(Graph& g, const WrapperModel& post,
                                 const WrapperModel* pre, const PlaneTensors& source,
                                 const TrainConfig& cfg, int block_size, bool quantize);

/// Adam over every parameter registered in a graph, stepped in registration
/// order so runs are reproducible.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Graph& g);

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state_;
};

TrainResult train_model(const TrainConfig& cfg);

}  // namespace nwrap
