#include "nwrap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "nwrap/jpeg_gray.hpp"

namespace nwrap {

namespace {

// Measured bits are folded into the loss as bits per source pixel expressed
// in the same unit system as the normalized-space MSE (one 8-bit code value
// of error ~ one unit), so the published lambda default keeps its meaning.
constexpr double kRateUnit = (2.0 / 255.0) * (2.0 / 255.0);

constexpr int kBlockSizes[4] = {4, 8, 16, 32};

void validate_config(const TrainConfig& cfg) {
  if (cfg.lambda < 0) throw std::invalid_argument("lambda must be nonnegative");
  if (cfg.bottleneck_depth != 8 && cfg.bottleneck_depth != 10)
    throw std::invalid_argument("bottleneck depth must be 8 or 10");
  if (cfg.crop < 48 || cfg.crop % pad_modulus(cfg.ratio) != 0)
    throw std::invalid_argument("crop must be >= 48 and divisible by " +
                                std::to_string(pad_modulus(cfg.ratio)) + " for ratio " +
                                cfg.ratio.str());
  if (cfg.steps < 1 || cfg.batch < 1) throw std::invalid_argument("steps/batch must be positive");
  if (cfg.lr <= 0) throw std::invalid_argument("learning rate must be positive");
  if (cfg.initial_qf < 1 || cfg.initial_qf > 100)
    throw std::invalid_argument("initial qf must be in [1,100]");
}

std::vector<uint16_t> msb8_plane(const Tensor& xhat, int bit_depth) {
  // round to the codec grid, then keep the most significant 8 bits
  const int maxv = (1 << bit_depth) - 1;
  const int shift = bit_depth - 8;
  std::vector<uint16_t> out(xhat.value().size());
  for (size_t i = 0; i < out.size(); ++i) {
    const long v = std::clamp<long>(std::lround(xhat.value()[i]), 0, maxv);
    out[i] = static_cast<uint16_t>(v >> shift);
  }
  return out;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected key=value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "ratio") cfg.ratio = ratio_parse(value);
    else if (key == "flag") {
      if (value == "pair") cfg.flag = WrapperFlag::Pair;
      else if (value == "post-only") cfg.flag = WrapperFlag::PostOnly;
      else throw std::runtime_error(path + ": flag must be pair or post-only");
    } else if (key == "lambda") cfg.lambda = std::stod(value);
    else if (key == "depth") cfg.bottleneck_depth = std::stoi(value);
    else if (key == "crop") cfg.crop = std::stoi(value);
    else if (key == "steps") cfg.steps = std::stoi(value);
    else if (key == "batch") cfg.batch = std::stoi(value);
    else if (key == "lr") cfg.lr = std::stod(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "qf") cfg.initial_qf = std::stod(value);
    else if (key == "dataset") cfg.dataset_dir = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "log_every") cfg.log_every = std::stoi(value);
    else throw std::runtime_error(path + ": unknown key \"" + key + "\"");
  }
  return cfg;
}

Dataset Dataset::load_dir(const std::string& dir) {
  Dataset d;
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("dataset directory not found: " + dir);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) d.images_.push_back(load_image_as_yuv420(f.string()));
  if (d.images_.empty())
    throw std::runtime_error("dataset directory has no .ppm images: " + dir);
  return d;
}

std::vector<PlaneTensors> make_training_batch(const Dataset& dataset, int crop,
                                              int batch, std::mt19937_64& rng) {
  if (dataset.size() == 0) throw std::invalid_argument("empty dataset");
  static thread_local std::set<const void*> warned;
  bool any_fits = false;
  for (size_t i = 0; i < dataset.size(); ++i)
    if (dataset.image(i).width >= crop && dataset.image(i).height >= crop)
      any_fits = true;
  if (!any_fits)
    throw std::runtime_error("no dataset image is at least " + std::to_string(crop) +
                             "x" + std::to_string(crop));
  std::vector<PlaneTensors> out;
  while (static_cast<int>(out.size()) < batch) {
    const size_t idx = rng() % dataset.size();
    const FrameYUV420& img = dataset.image(idx);
    if (img.width < crop || img.height < crop) {
      if (warned.insert(&img).second)
        std::cerr << "warning: skipping " << img.width << "x" << img.height
                  << " image smaller than the " << crop << " crop\n";
      continue;
    }
    const int max_x = (img.width - crop) / 2;
    const int max_y = (img.height - crop) / 2;
    const int x0 = 2 * static_cast<int>(rng() % static_cast<uint64_t>(max_x + 1));
    const int y0 = 2 * static_cast<int>(rng() % static_cast<uint64_t>(max_y + 1));
    FrameYUV420 c;
    c.width = crop;
    c.height = crop;
    c.bit_depth = img.bit_depth;
    c.y.resize(static_cast<size_t>(crop) * crop);
    c.u.resize(static_cast<size_t>(crop / 2) * (crop / 2));
    c.v.resize(c.u.size());
    for (int i = 0; i < crop; ++i)
      std::copy_n(img.y.begin() + static_cast<size_t>(y0 + i) * img.width + x0, crop,
                  c.y.begin() + static_cast<size_t>(i) * crop);
    for (int i = 0; i < crop / 2; ++i) {
      std::copy_n(img.u.begin() +
                      static_cast<size_t>(y0 / 2 + i) * img.chroma_width() + x0 / 2,
                  crop / 2, c.u.begin() + static_cast<size_t>(i) * (crop / 2));
      std::copy_n(img.v.begin() +
                      static_cast<size_t>(y0 / 2 + i) * img.chroma_width() + x0 / 2,
                  crop / 2, c.v.begin() + static_cast<size_t>(i) * (crop / 2));
    }
    out.push_back(normalize(c));
  }
  return out;
}

Tensor rd_loss(const PlaneTensors& x, const PlaneTensors& xhat, const Tensor& rate_term,
               double lambda) {
  Tensor distortion = scale(
      add(scale(mse(xhat.y, x.y), 6.0), add(mse(xhat.u, x.u), mse(xhat.v, x.v))),
      1.0 / 8.0);
  return add(distortion, scale(rate_term, lambda));
}

PipelineLoss build_pipeline_loss(Graph& g, const WrapperModel& post,
                                 const WrapperModel* pre, const PlaneTensors& source,
                                 const TrainConfig& cfg, int block_size, bool quantize) {
  const int crop_h = source.y.dim(1), crop_w = source.y.dim(2);
  const Ratio& r = cfg.ratio;
  const int bn_h = r.scale_extent(crop_h), bn_w = r.scale_extent(crop_w);

  Tensor log_q = g.parameter("log_q", Shape{1},
                             std::vector<double>{log_q_for_qf(cfg.initial_qf)});
  Tensor q = nwrap::exp(log_q);

  // reduced-resolution planes in normalized space
  PlaneTensors bn;
  if (pre) {
    Tensor packed_src = pack_planes_train(source, r, crop_h, crop_w);
    Tensor out6 = run_pre_train(*pre, g, packed_src, "pre.");
    bn.y = depth_to_space2(slice_channels(out6, 0, 4));
    bn.u = slice_channels(out6, 4, 5);
    bn.v = slice_channels(out6, 5, 6);
  } else {
    bn.y = r.identity() ? source.y : bilinear_resize(source.y, bn_h, bn_w);
    bn.u = r.identity() ? source.u : bilinear_resize(source.u, bn_h / 2, bn_w / 2);
    bn.v = r.identity() ? source.v : bilinear_resize(source.v, bn_h / 2, bn_w / 2);
  }

  // map to the codec range and push through the proxy, one shared stepsize
  const double maxv = static_cast<double>((1 << cfg.bottleneck_depth) - 1);
  PipelineLoss out;
  std::vector<Tensor> coeffs;
  PlaneTensors decoded;
  Tensor* bn_planes[3] = {&bn.y, &bn.u, &bn.v};
  Tensor* dec_planes[3] = {&decoded.y, &decoded.u, &decoded.v};
  const int qf = q_to_qf(q.scalar());
  for (int p = 0; p < 3; ++p) {
    Tensor codec_domain = affine(*bn_planes[p], maxv / 2.0, maxv / 2.0);
    ProxyOut proxy = proxy_apply_plane(codec_domain, q, block_size,
                                       cfg.bottleneck_depth, quantize);
    coeffs.push_back(proxy.coeffs);
    out.measured_bits +=
        baseline_gray_encode(msb8_plane(proxy.xhat, cfg.bottleneck_depth),
                             proxy.xhat.dim(2), proxy.xhat.dim(1), qf)
            .payload_bits;
    *dec_planes[p] = affine(proxy.xhat, 2.0 / maxv, -1.0);
  }
  const double rate_per_pixel = static_cast<double>(out.measured_bits) /
                                (static_cast<double>(crop_h) * crop_w) * kRateUnit;
  out.rate = rate_loss(coeffs, q, rate_per_pixel);

  Tensor packed_bn = pack_planes_train(decoded, r, crop_h, crop_w);
  PlaneTensors recon = run_post_train(post, g, packed_bn, "post.");
  out.distortion = scale(
      add(scale(mse(recon.y, source.y), 6.0),
          add(mse(recon.u, source.u), mse(recon.v, source.v))),
      1.0 / 8.0);
  out.loss = add(out.distortion, scale(out.rate.loss, cfg.lambda));
  return out;
}

void AdamOptimizer::step(Graph& g) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, param] : g.parameters()) {
    auto& [m, v] = state_[name];
    auto& value = param.node()->value;
    const auto& grad = param.node()->grad;
    if (grad.empty()) continue;
    if (m.size() != value.size()) {
      m.assign(value.size(), 0.0);
      v.assign(value.size(), 0.0);
    }
    for (size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

TrainResult train_model(const TrainConfig& cfg) {
  validate_config(cfg);
  Dataset dataset = Dataset::load_dir(cfg.dataset_dir);
  std::mt19937_64 rng(cfg.seed);

  TrainResult result;
  result.post = build_postprocessor(cfg.seed + 1);
  result.post.ratio = cfg.ratio;
  if (cfg.flag == WrapperFlag::Pair)
    result.pre = build_preprocessor(cfg.ratio, cfg.seed + 2);

  Graph g;
  // registration order fixes the optimizer order
  g.parameter("log_q", Shape{1}, std::vector<double>{log_q_for_qf(cfg.initial_qf)});
  if (result.pre) bind_parameters(*result.pre, g, "pre.");
  bind_parameters(result.post, g, "post.");
  AdamOptimizer adam(cfg.lr);

  std::ofstream log_file;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log_file.open(cfg.out_dir + "/train_log.csv", std::ios::trunc);
    log_file << "step,L,L_D,L_R,q,qf\n";
  }

  for (int step = 1; step <= cfg.steps; ++step) {
    g.reset_tape();
    const auto batch = make_training_batch(dataset, cfg.crop, cfg.batch, rng);
    const int block_size = kBlockSizes[rng() % 4];

    Tensor loss_sum, dist_sum;
    double rate_term = 0.0;
    for (const auto& sample : batch) {
      PipelineLoss pl = build_pipeline_loss(
          g, result.post, result.pre ? &*result.pre : nullptr, sample, cfg, block_size,
          /*quantize=*/true);
      loss_sum = loss_sum.defined() ? add(loss_sum, pl.loss) : pl.loss;
      dist_sum = dist_sum.defined() ? add(dist_sum, pl.distortion) : pl.distortion;
      rate_term += pl.rate.loss.scalar();
    }
    Tensor loss = scale(loss_sum, 1.0 / cfg.batch);
    const double loss_value = loss.scalar();
    if (!std::isfinite(loss_value))
      throw std::runtime_error("training diverged (non-finite loss) at step " +
                               std::to_string(step));
    g.backward(loss);
    adam.step(g);

    const double q_now = std::exp(g.get_parameter("log_q").scalar());
    if (step == 1 || step == cfg.steps || step % cfg.log_every == 0) {
      TrainLogEntry e;
      e.step = step;
      e.loss = loss_value;
      e.distortion = dist_sum.scalar() / cfg.batch;
      e.rate_term = rate_term / cfg.batch;
      e.q = q_now;
      e.qf = q_to_qf(q_now);
      result.log.push_back(e);
      if (log_file)
        log_file << e.step << ',' << e.loss << ',' << e.distortion << ',' << e.rate_term
                 << ',' << e.q << ',' << e.qf << '\n';
    }
  }

  if (result.pre) store_parameters(*result.pre, g, "pre.");
  store_parameters(result.post, g, "post.");

  if (!cfg.out_dir.empty()) {
    const WrapperFlag flag = cfg.flag;
    save_weights(result.post,
                 cfg.out_dir + "/" +
                     ModelBank::file_name(ModelKind::Post, flag, cfg.ratio.index));
    if (result.pre)
      save_weights(*result.pre,
                   cfg.out_dir + "/" +
                       ModelBank::file_name(ModelKind::Pre, WrapperFlag::Pair,
                                            cfg.ratio.index));
  }
  return result;
}

}  // namespace nwrap
