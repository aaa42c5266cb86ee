// Per-sequence mode search over the nine encoder options, Pareto-frontier
// construction, BD-rate between curves, and the container carrying the
// signaled mode.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nwrap/codec.hpp"
#include "nwrap/frame.hpp"
#include "nwrap/model.hpp"

namespace nwrap {

enum class PreprocOption : uint8_t { None = 0, Neural = 1, Linear = 2 };

/// One of the nine encoder options, signaled as a 4-bit code:
/// 0 = passthrough (none, k=1), 1..4 = trained pair at ratio k,
/// 5..8 = linear downsample + trained upsampler at ratio k. 9..15 reserved.
struct ModeDecision {
  PreprocOption pre = PreprocOption::None;
  int ratio_index = 1;

  uint8_t code() const;
  static ModeDecision from_code(uint8_t code);
  static const std::vector<ModeDecision>& all_modes();  // the 9 options
  std::string name() const;  // "passthrough", "neural:1/2", "linear:2/3", ...
  static ModeDecision parse(const std::string& name);
  bool operator==(const ModeDecision&) const = default;
};

struct RDPoint {
  double rate_bps = 0;  // includes the 4 signaling bits, amortized
  double psnr = 0;      // 6:1:1 weighted
  ModeDecision mode;
  double qp = 0;
  uint64_t bits = 0;  // payload bits + 4
  PsnrResult planes;
};

struct RDCurve {
  std::vector<RDPoint> points;  // strictly increasing rate and quality
};

/// Exactly the non-dominated subset; ties on both axes keep the lowest mode
/// code. Output is sorted by rate.
RDCurve pareto_frontier(std::span<const RDPoint> points);

/// Average rate difference in percent over the overlapping quality range,
/// via monotone piecewise-cubic interpolation of log10(rate) against
/// quality, integrated analytically. Negative means `test` saves rate.
/// Requires >= 4 points per curve and a non-empty overlap.
double bd_rate(const RDCurve& test, const RDCurve& anchor);

/// Codes the sequence under one mode at one quality setting and measures the
/// result. Wrapped modes always code a 10-bit reduced-resolution sequence.
RDPoint evaluate_mode(const Sequence& seq, const ModeDecision& mode,
                      const CodecSpec& spec, double qp, const ModelBank& bank);

struct ModeSelection {
  double qp = 0;
  double target_bps = 0;  // largest rate any option spent at this setting
  RDPoint chosen;
};

struct EncodeResult {
  std::vector<RDPoint> points;  // |modes| x |ladder|
  RDCurve frontier;
  std::vector<ModeSelection> selections;  // one per ladder entry
};

/// Evaluates every mode at every ladder entry (optionally across threads),
/// forms the frontier, and picks the highest-quality option that stays at or
/// below each ladder target.
EncodeResult encode_sequence(const Sequence& seq, const CodecSpec& spec,
                             std::span<const double> qp_ladder, const ModelBank& bank,
                             std::span<const ModeDecision> modes, int threads = 1);

struct Container {
  ModeDecision mode;
  int width = 0, height = 0;
  int bit_depth = 8;
  uint32_t fps_num = 30, fps_den = 1;
  std::vector<uint8_t> payload;

  uint8_t code() const;
  std::vector<uint8_t> to_bytes() const;
  static Container from_bytes(std::span<const uint8_t> bytes);
  void write_file(const std::string& path) const;
  static Container read_file(const std::string& path);
};

/// Codes one mode/qp operating point into a container.
Container encode_to_container(const Sequence& seq, const CodecSpec& spec,
                              const ModelBank& bank, const ModeDecision& mode,
                              double qp);

/// Codec decode, then the signaled post path, back at source resolution.
Sequence decode_sequence(const Container& c, const CodecSpec& spec,
                         const ModelBank& bank);

// --- reports -----------------------------------------------------------------

void write_rd_csv(std::ostream& os, const std::string& sequence_name,
                  std::span<const RDPoint> points);
std::vector<RDPoint> read_rd_csv(std::istream& is);
void write_pareto_json(std::ostream& os, const std::string& sequence_name,
                       const EncodeResult& result);

}  // namespace nwrap
