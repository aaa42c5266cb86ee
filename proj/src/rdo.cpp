#include "nwrap/rdo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "nwrap/resample.hpp"

namespace nwrap {

// --- mode signaling ---------------------------------------------------------

uint8_t ModeDecision::code() const {
  if (pre == PreprocOption::None) return 0;
  const uint8_t base = pre == PreprocOption::Neural ? 1 : 5;
  return static_cast<uint8_t>(base + ratio_index - 1);
}

ModeDecision ModeDecision::from_code(uint8_t code) {
  if (code == 0) return {PreprocOption::None, 1};
  if (code >= 1 && code <= 4) return {PreprocOption::Neural, code};
  if (code >= 5 && code <= 8) return {PreprocOption::Linear, code - 4};
  throw std::invalid_argument("reserved mode code " + std::to_string(code));
}

const std::vector<ModeDecision>& ModeDecision::all_modes() {
  static const std::vector<ModeDecision> modes = [] {
    std::vector<ModeDecision> m;
    m.push_back({PreprocOption::None, 1});
    for (int k = 1; k <= 4; ++k) m.push_back({PreprocOption::Neural, k});
    for (int k = 1; k <= 4; ++k) m.push_back({PreprocOption::Linear, k});
    return m;
  }();
  return modes;
}

std::string ModeDecision::name() const {
  switch (pre) {
    case PreprocOption::None: return "passthrough";
    case PreprocOption::Neural: return "neural:" + ratio_from_index(ratio_index).str();
    case PreprocOption::Linear: return "linear:" + ratio_from_index(ratio_index).str();
  }
  return "?";
}

ModeDecision ModeDecision::parse(const std::string& name) {
  if (name == "passthrough") return {PreprocOption::None, 1};
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    const std::string head = name.substr(0, colon);
    const Ratio r = ratio_parse(name.substr(colon + 1));
    if (head == "neural") return {PreprocOption::Neural, r.index};
    if (head == "linear") return {PreprocOption::Linear, r.index};
  }
  throw std::invalid_argument("unknown mode \"" + name +
                              "\" (passthrough, neural:R or linear:R)");
}

// --- pareto -------------------------------------------------------------------

RDCurve pareto_frontier(std::span<const RDPoint> points) {
  if (points.empty()) throw std::invalid_argument("pareto_frontier: no points");
  std::vector<RDPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const RDPoint& a, const RDPoint& b) {
    if (a.rate_bps != b.rate_bps) return a.rate_bps < b.rate_bps;
    if (a.psnr != b.psnr) return a.psnr > b.psnr;
    return a.mode.code() < b.mode.code();
  });
  RDCurve curve;
  double best_quality = -1e300;
  for (const auto& p : sorted) {
    if (p.psnr > best_quality) {
      curve.points.push_back(p);
      best_quality = p.psnr;
    }
  }
  return curve;
}

// --- BD-rate --------------------------------------------------------------------

namespace {

struct Pchip {
  std::vector<double> q, r, m;  // knots, values, slopes
  int segments() const { return static_cast<int>(q.size()) - 1; }

  // integral of the interpolant over [a, b], both inside the knot range
  double integrate(double a, double b) const {
    double total = 0.0;
    for (int i = 0; i < segments(); ++i) {
      const double lo = std::max(a, q[static_cast<size_t>(i)]);
      const double hi = std::min(b, q[static_cast<size_t>(i) + 1]);
      if (hi <= lo) continue;
      const double h = q[static_cast<size_t>(i) + 1] - q[static_cast<size_t>(i)];
      const double d = r[static_cast<size_t>(i) + 1] - r[static_cast<size_t>(i)];
      const double c0 = r[static_cast<size_t>(i)];
      const double c1 = h * m[static_cast<size_t>(i)];
      const double c2 = 3 * d - 2 * h * m[static_cast<size_t>(i)] - h * m[static_cast<size_t>(i) + 1];
      const double c3 = -2 * d + h * m[static_cast<size_t>(i)] + h * m[static_cast<size_t>(i) + 1];
      auto anti = [&](double t) {
        return c0 * t + c1 * t * t / 2 + c2 * t * t * t / 3 + c3 * t * t * t * t / 4;
      };
      const double ta = (lo - q[static_cast<size_t>(i)]) / h;
      const double tb = (hi - q[static_cast<size_t>(i)]) / h;
      total += h * (anti(tb) - anti(ta));
    }
    return total;
  }
};

// Fritsch-Carlson monotone slopes
Pchip fit_pchip(const RDCurve& curve, const char* which) {
  if (curve.points.size() < 4)
    throw std::invalid_argument(std::string(which) + " curve needs at least 4 points, has " +
                                std::to_string(curve.points.size()));
  std::vector<RDPoint> pts(curve.points.begin(), curve.points.end());
  std::sort(pts.begin(), pts.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.psnr < b.psnr; });
  Pchip p;
  for (const auto& pt : pts) {
    if (!(pt.rate_bps > 0))
      throw std::invalid_argument(std::string(which) + " curve has a non-positive rate");
    if (!p.q.empty() && pt.psnr <= p.q.back())
      throw std::invalid_argument(std::string(which) +
                                  " curve has duplicate or non-increasing quality values");
    p.q.push_back(pt.psnr);
    p.r.push_back(std::log10(pt.rate_bps));
  }
  const int n = static_cast<int>(p.q.size());
  std::vector<double> h(static_cast<size_t>(n - 1)), delta(static_cast<size_t>(n - 1));
  for (int i = 0; i < n - 1; ++i) {
    h[static_cast<size_t>(i)] = p.q[static_cast<size_t>(i) + 1] - p.q[static_cast<size_t>(i)];
    delta[static_cast<size_t>(i)] =
        (p.r[static_cast<size_t>(i) + 1] - p.r[static_cast<size_t>(i)]) / h[static_cast<size_t>(i)];
  }
  p.m.assign(static_cast<size_t>(n), 0.0);
  for (int i = 1; i < n - 1; ++i) {
    const double d0 = delta[static_cast<size_t>(i) - 1], d1 = delta[static_cast<size_t>(i)];
    if (d0 * d1 > 0) {
      const double w1 = 2 * h[static_cast<size_t>(i)] + h[static_cast<size_t>(i) - 1];
      const double w2 = h[static_cast<size_t>(i)] + 2 * h[static_cast<size_t>(i) - 1];
      p.m[static_cast<size_t>(i)] = (w1 + w2) / (w1 / d0 + w2 / d1);
    }
  }
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double m0 = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m0 * d0 <= 0) m0 = 0.0;
    else if (std::abs(m0) > 3 * std::abs(d0)) m0 = 3 * d0;
    return m0;
  };
  p.m[0] = endpoint(h[0], h[1], delta[0], delta[1]);
  p.m[static_cast<size_t>(n) - 1] =
      endpoint(h[static_cast<size_t>(n) - 2], h[static_cast<size_t>(n) - 3],
               delta[static_cast<size_t>(n) - 2], delta[static_cast<size_t>(n) - 3]);
  return p;
}

}  // namespace

double bd_rate(const RDCurve& test, const RDCurve& anchor) {
  const Pchip pt = fit_pchip(test, "test");
  const Pchip pa = fit_pchip(anchor, "anchor");
  const double lo = std::max(pt.q.front(), pa.q.front());
  const double hi = std::min(pt.q.back(), pa.q.back());
  if (hi <= lo)
    throw std::invalid_argument("curves have disjoint quality ranges: overlap [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
  const double avg_diff = (pt.integrate(lo, hi) - pa.integrate(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

// --- mode evaluation -----------------------------------------------------------

namespace {

Sequence preprocess_sequence(const Sequence& seq, const ModeDecision& mode,
                             const ModelBank& bank) {
  Sequence bn;
  bn.fps_num = seq.fps_num;
  bn.fps_den = seq.fps_den;
  if (mode.pre == PreprocOption::None) {
    bn.frames = seq.frames;
    return bn;
  }
  const Ratio r = ratio_from_index(mode.ratio_index);
  if (mode.pre == PreprocOption::Neural) {
    const WrapperModel& pre = bank.get(ModelKind::Pre, WrapperFlag::Pair, r.index);
    for (const auto& f : seq.frames) bn.frames.push_back(run_preprocess(pre, f));
  } else {
    for (const auto& f : seq.frames) {
      const FrameYUV420 padded = pad_frame_replicate(f, pad_modulus(r));
      bn.frames.push_back(
          resample_frame_to_depth(padded, r, Filter::Bilinear, Direction::Down, 10));
    }
  }
  return bn;
}

Sequence postprocess_sequence(const Sequence& decoded_bn, const ModeDecision& mode,
                              const ModelBank& bank, int width, int height, int depth) {
  if (mode.pre == PreprocOption::None) return decoded_bn;
  const Ratio r = ratio_from_index(mode.ratio_index);
  const WrapperFlag flag =
      mode.pre == PreprocOption::Neural ? WrapperFlag::Pair : WrapperFlag::PostOnly;
  const WrapperModel& post = bank.get(ModelKind::Post, flag, r.index);
  Sequence out;
  out.fps_num = decoded_bn.fps_num;
  out.fps_den = decoded_bn.fps_den;
  for (const auto& f : decoded_bn.frames)
    out.frames.push_back(run_postprocess(post, f, r, width, height, depth));
  return out;
}

}  // namespace

RDPoint evaluate_mode(const Sequence& seq, const ModeDecision& mode,
                      const CodecSpec& spec, double qp, const ModelBank& bank) {
  if (seq.frames.empty()) throw std::invalid_argument("empty sequence");
  const Sequence bottleneck = preprocess_sequence(seq, mode, bank);
  const CodedSequence coded = code_sequence(bottleneck, spec, qp);
  const Sequence recon = postprocess_sequence(coded.decoded, mode, bank, seq.width(),
                                              seq.height(), seq.bit_depth());
  RDPoint p;
  p.mode = mode;
  p.qp = qp;
  p.bits = coded.payload_bits + 4;  // per-video mode signaling
  p.rate_bps = static_cast<double>(p.bits) * seq.fps() /
               static_cast<double>(seq.frames.size());
  p.planes = psnr_yuv(seq, recon);
  p.psnr = p.planes.weighted;
  return p;
}

EncodeResult encode_sequence(const Sequence& seq, const CodecSpec& spec,
                             std::span<const double> qp_ladder, const ModelBank& bank,
                             std::span<const ModeDecision> modes, int threads) {
  if (qp_ladder.empty() || modes.empty())
    throw std::invalid_argument("encode_sequence needs a qp ladder and a mode set");
  struct Job {
    ModeDecision mode;
    double qp;
  };
  std::vector<Job> jobs;
  for (const auto& m : modes)
    for (double qp : qp_ladder) jobs.push_back({m, qp});

  EncodeResult result;
  result.points.resize(jobs.size());
  if (threads <= 1) {
    for (size_t i = 0; i < jobs.size(); ++i)
      result.points[i] = evaluate_mode(seq, jobs[i].mode, spec, jobs[i].qp, bank);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
            result.points[i] = evaluate_mode(seq, jobs[i].mode, spec, jobs[i].qp, bank);
        } catch (...) {
          errors[static_cast<size_t>(t)] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  result.frontier = pareto_frontier(result.points);
  for (double qp : qp_ladder) {
    ModeSelection sel;
    sel.qp = qp;
    sel.target_bps = 0;
    for (const auto& p : result.points)
      if (p.qp == qp) sel.target_bps = std::max(sel.target_bps, p.rate_bps);
    const RDPoint* best = nullptr;
    for (const auto& p : result.points) {
      if (p.rate_bps > sel.target_bps) continue;
      if (!best || p.psnr > best->psnr ||
          (p.psnr == best->psnr &&
           (p.rate_bps < best->rate_bps ||
            (p.rate_bps == best->rate_bps && p.mode.code() < best->mode.code()))))
        best = &p;
    }
    sel.chosen = *best;
    result.selections.push_back(sel);
  }
  return result;
}

// --- container --------------------------------------------------------------------

namespace {

void put_u16v(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32v(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64v(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

constexpr uint16_t kContainerVersion = 1;

}  // namespace

std::vector<uint8_t> Container::to_bytes() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'N', 'W', 'C', '1'});
  put_u16v(out, kContainerVersion);
  out.push_back(code() & 0x0f);
  out.push_back(static_cast<uint8_t>(mode.ratio_index));
  put_u32v(out, static_cast<uint32_t>(width));
  put_u32v(out, static_cast<uint32_t>(height));
  out.push_back(static_cast<uint8_t>(bit_depth));
  put_u32v(out, fps_num);
  put_u32v(out, fps_den);
  put_u64v(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

uint8_t Container::code() const { return mode.code(); }

Container Container::from_bytes(std::span<const uint8_t> bytes) {
  size_t pos = 0;
  auto need = [&](size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw std::runtime_error(std::string("container truncated reading ") + what);
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), "NWC1", 4) != 0)
    throw std::runtime_error("not a container (bad magic)");
  pos = 4;
  need(2, "version");
  const uint16_t version = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
  pos += 2;
  if (version != kContainerVersion)
    throw std::runtime_error("unsupported container version " + std::to_string(version));
  Container c;
  need(2, "mode");
  const uint8_t mode_code = bytes[pos++] & 0x0f;
  const uint8_t ratio_idx = bytes[pos++];
  c.mode = ModeDecision::from_code(mode_code);
  if (c.mode.ratio_index != ratio_idx)
    throw std::runtime_error("container mode code disagrees with the ratio field");
  auto u32 = [&](const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  c.width = static_cast<int>(u32("width"));
  c.height = static_cast<int>(u32("height"));
  need(1, "depth");
  c.bit_depth = bytes[pos++];
  c.fps_num = u32("fps numerator");
  c.fps_den = u32("fps denominator");
  need(8, "payload length");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
  pos += 8;
  need(len, "payload");
  c.payload.assign(bytes.begin() + static_cast<long>(pos),
                   bytes.begin() + static_cast<long>(pos + len));
  return c;
}

void Container::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const auto bytes = to_bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Container Container::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return from_bytes(bytes);
}

Container encode_to_container(const Sequence& seq, const CodecSpec& spec,
                              const ModelBank& bank, const ModeDecision& mode,
                              double qp) {
  const Sequence bottleneck = preprocess_sequence(seq, mode, bank);
  CodedSequence coded = code_sequence(bottleneck, spec, qp);
  Container c;
  c.mode = mode;
  c.width = seq.width();
  c.height = seq.height();
  c.bit_depth = seq.bit_depth();
  c.fps_num = seq.fps_num;
  c.fps_den = seq.fps_den;
  c.payload = std::move(coded.payload);
  return c;
}

Sequence decode_sequence(const Container& c, const CodecSpec& spec,
                         const ModelBank& bank) {
  int bn_w = c.width, bn_h = c.height, bn_depth = c.bit_depth;
  if (c.mode.pre != PreprocOption::None) {
    const Ratio r = ratio_from_index(c.mode.ratio_index);
    const int mod = pad_modulus(r);
    const int padded_w = (c.width + mod - 1) / mod * mod;
    const int padded_h = (c.height + mod - 1) / mod * mod;
    bn_w = r.scale_extent(padded_w);
    bn_h = r.scale_extent(padded_h);
    bn_depth = 10;
  }
  const Sequence decoded =
      decode_payload(c.payload, spec, bn_w, bn_h, bn_depth, c.fps_num, c.fps_den);
  Sequence out =
      postprocess_sequence(decoded, c.mode, bank, c.width, c.height, c.bit_depth);
  if (c.mode.pre == PreprocOption::None &&
      (out.width() != c.width || out.height() != c.height))
    throw std::runtime_error("decoded geometry does not match the container header");
  return out;
}

// --- reports ------------------------------------------------------------------------

void write_rd_csv(std::ostream& os, const std::string& sequence_name,
                  std::span<const RDPoint> points) {
  os << "sequence,mode,qp,bits,bps,psnr_y,psnr_u,psnr_v,psnr_weighted\n";
  os.precision(10);
  for (const auto& p : points) {
    os << sequence_name << ',' << p.mode.name() << ',' << p.qp << ',' << p.bits << ','
       << p.rate_bps << ',' << p.planes.y << ',' << p.planes.u << ',' << p.planes.v
       << ',' << p.psnr << '\n';
  }
}

std::vector<RDPoint> read_rd_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty R-D csv");
  std::vector<RDPoint> points;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw std::runtime_error("bad R-D csv row (want 9 columns): " + line);
    RDPoint p;
    p.mode = ModeDecision::parse(fields[1]);
    p.qp = std::stod(fields[2]);
    p.bits = std::stoull(fields[3]);
    p.rate_bps = std::stod(fields[4]);
    p.planes.y = std::stod(fields[5]);
    p.planes.u = std::stod(fields[6]);
    p.planes.v = std::stod(fields[7]);
    p.psnr = std::stod(fields[8]);
    p.planes.weighted = p.psnr;
    points.push_back(p);
  }
  return points;
}

void write_pareto_json(std::ostream& os, const std::string& sequence_name,
                       const EncodeResult& result) {
  nlohmann::json j;
  j["sequence"] = sequence_name;
  auto point_json = [](const RDPoint& p) {
    return nlohmann::json{{"mode", p.mode.name()}, {"mode_code", p.mode.code()},
                          {"qp", p.qp},           {"bits", p.bits},
                          {"bps", p.rate_bps},    {"psnr_weighted", p.psnr}};
  };
  for (const auto& p : result.frontier.points) j["frontier"].push_back(point_json(p));
  for (const auto& s : result.selections) {
    nlohmann::json sel;
    sel["qp"] = s.qp;
    sel["target_bps"] = s.target_bps;
    sel["chosen"] = point_json(s.chosen);
    j["selections"].push_back(sel);
  }
  os << j.dump(2) << '\n';
}

}  // namespace nwrap
