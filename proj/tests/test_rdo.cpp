#include "nwrap/rdo.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "synth.hpp"
#include "test_util.hpp"

using namespace nwrap;

namespace {

RDPoint pt(double bps, double psnr, uint8_t code = 0, double qp = 1) {
  RDPoint p;
  p.rate_bps = bps;
  p.psnr = psnr;
  p.planes.weighted = psnr;
  p.mode = ModeDecision::from_code(code);
  p.qp = qp;
  p.bits = static_cast<uint64_t>(bps);
  return p;
}

// O(n^2) reference for the non-dominated set with lowest-code tie handling
std::vector<RDPoint> brute_force_frontier(const std::vector<RDPoint>& pts) {
  std::vector<RDPoint> keep;
  for (size_t pi = 0; pi < pts.size(); ++pi) {
    const auto& p = pts[pi];
    bool dominated = false;
    for (size_t qi = 0; qi < pts.size(); ++qi) {
      const auto& q = pts[qi];
      if (q.rate_bps <= p.rate_bps && q.psnr >= p.psnr &&
          (q.rate_bps < p.rate_bps || q.psnr > p.psnr)) {
        dominated = true;
        break;
      }
      if (q.rate_bps == p.rate_bps && q.psnr == p.psnr &&
          (q.mode.code() < p.mode.code() ||
           (q.mode.code() == p.mode.code() && qi < pi))) {
        dominated = true;  // duplicates collapse onto one representative
        break;
      }
    }
    if (!dominated) keep.push_back(p);
  }
  std::sort(keep.begin(), keep.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.rate_bps < b.rate_bps; });
  return keep;
}

// independent monotone-cubic evaluation for the trapezoid cross-check
struct RefPchip {
  std::vector<double> x, y, m;
  explicit RefPchip(std::vector<std::pair<double, double>> pts) {
    std::sort(pts.begin(), pts.end());
    for (auto& [a, b] : pts) {
      x.push_back(a);
      y.push_back(b);
    }
    const size_t n = x.size();
    std::vector<double> h(n - 1), d(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
      h[i] = x[i + 1] - x[i];
      d[i] = (y[i + 1] - y[i]) / h[i];
    }
    m.assign(n, 0.0);
    for (size_t i = 1; i + 1 < n; ++i)
      if (d[i - 1] * d[i] > 0) {
        const double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
        m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
      }
    auto ep = [](double h0, double h1, double d0, double d1) {
      double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
      if (s * d0 <= 0) return 0.0;
      if (std::abs(s) > 3 * std::abs(d0)) return 3 * d0;
      return s;
    };
    m[0] = ep(h[0], h[1], d[0], d[1]);
    m[n - 1] = ep(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
  }
  double eval(double q) const {
    size_t i = 0;
    while (i + 2 < x.size() && q > x[i + 1]) ++i;
    const double h = x[i + 1] - x[i];
    const double t = (q - x[i]) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    const double h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t);
    const double h11 = t * t * (t - 1);
    return h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1];
  }
};

ModelBank fresh_bank() {
  ModelBank bank;
  for (int k = 1; k <= 4; ++k) {
    WrapperModel post = build_postprocessor(static_cast<uint64_t>(k));
    post.ratio = ratio_from_index(k);
    bank.put(ModelKind::Post, WrapperFlag::Pair, post);
    bank.put(ModelKind::Post, WrapperFlag::PostOnly, post);
    bank.put(ModelKind::Pre, WrapperFlag::Pair,
             build_preprocessor(ratio_from_index(k), static_cast<uint64_t>(k)));
  }
  return bank;
}

}  // namespace

TEST_CASE("pareto drops the dominated middle point") {
  std::vector<RDPoint> pts{pt(1e6, 30), pt(2e6, 35), pt(3e6, 34)};
  RDCurve c = pareto_frontier(pts);
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[0].rate_bps == 1e6);
  CHECK(c.points[1].rate_bps == 2e6);
}

TEST_CASE("pareto of a single point is itself") {
  std::vector<RDPoint> pts{pt(5e5, 33)};
  CHECK(pareto_frontier(pts).points.size() == 1);
}

TEST_CASE("pareto ties on both axes keep the lowest mode code") {
  std::vector<RDPoint> pts{pt(1e6, 30, 5), pt(1e6, 30, 2), pt(2e6, 31, 7)};
  RDCurve c = pareto_frontier(pts);
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[0].mode.code() == 2);
}

TEST_CASE("pareto equals brute force on random instances") {
  auto g = testutil::rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(g() % 100);
    std::vector<RDPoint> pts;
    for (int i = 0; i < n; ++i) {
      // quantized rates/qualities so exact ties occur
      const double rate = 1e5 * (1 + static_cast<double>(g() % 40));
      const double q = 25.0 + 0.5 * static_cast<double>(g() % 30);
      pts.push_back(pt(rate, q, static_cast<uint8_t>(g() % 9)));
    }
    const auto expect = brute_force_frontier(pts);
    const RDCurve got = pareto_frontier(pts);
    REQUIRE(got.points.size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) {
      CHECK(got.points[i].rate_bps == expect[i].rate_bps);
      CHECK(got.points[i].psnr == expect[i].psnr);
      CHECK(got.points[i].mode.code() == expect[i].mode.code());
    }
  }
}

TEST_CASE("bd_rate of identical curves is zero") {
  RDCurve a;
  for (double q : {30.0, 33.0, 36.0, 39.0, 42.0})
    a.points.push_back(pt(std::pow(10.0, 4 + q / 10), q));
  CHECK(std::abs(bd_rate(a, a)) < 1e-9);
}

TEST_CASE("a 0.9x rate shift measures exactly -10 percent") {
  auto g = testutil::rng(7);
  RDCurve anchor, test;
  double q = 28.0;
  for (int i = 0; i < 6; ++i) {
    q += testutil::uniform(g, 1.5, 3.0);
    const double rate = std::pow(10.0, 4.0 + 0.12 * q + 0.0008 * q * q);
    anchor.points.push_back(pt(rate, q));
    test.points.push_back(pt(0.9 * rate, q));
  }
  CHECK(bd_rate(test, anchor) == doctest::Approx(-10.0).epsilon(0.001));
  CHECK(bd_rate(anchor, test) == doctest::Approx(100.0 / 9.0).epsilon(0.001));
}

TEST_CASE("one extra dB of quality gives a negative bd-rate") {
  RDCurve anchor, test;
  for (double q : {30.0, 33.0, 36.0, 39.0}) {
    const double rate = std::pow(10.0, 4 + q / 8);
    anchor.points.push_back(pt(rate, q));
    test.points.push_back(pt(rate, q + 1.0));
  }
  CHECK(bd_rate(test, anchor) < 0.0);
}

TEST_CASE("analytic integration matches a dense trapezoid of an independent fit") {
  auto g = testutil::rng(99);
  RDCurve anchor, test;
  std::vector<std::pair<double, double>> pa, ptest;
  double q = 29.0;
  for (int i = 0; i < 7; ++i) {
    q += testutil::uniform(g, 1.0, 2.5);
    const double ra = std::pow(10.0, 3.8 + 0.11 * q + 0.001 * q * q);
    const double rt = ra * testutil::uniform(g, 0.75, 0.95);
    anchor.points.push_back(pt(ra, q));
    test.points.push_back(pt(rt, q + 0.3));
    pa.emplace_back(q, std::log10(ra));
    ptest.emplace_back(q + 0.3, std::log10(rt));
  }
  const double got = bd_rate(test, anchor);

  RefPchip fa(pa), ft(ptest);
  const double lo = std::max(pa.front().first, ptest.front().first);
  const double hi = std::min(pa.back().first, ptest.back().first);
  const int n = 10000;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    acc += w * (ft.eval(x) - fa.eval(x));
  }
  const double avg = acc / n;
  const double expect = (std::pow(10.0, avg) - 1.0) * 100.0;
  CHECK(got == doctest::Approx(expect).epsilon(0.002));
}

TEST_CASE("bd_rate approximate anti-symmetry on smooth curves") {
  RDCurve a, b;
  for (double q : {30.0, 32.5, 35.0, 37.5, 40.0}) {
    a.points.push_back(pt(std::pow(10.0, 4 + q / 9), q));
    b.points.push_back(pt(std::pow(10.0, 4.05 + q / 9.6), q));
  }
  const double ab = bd_rate(a, b);
  const double ba = bd_rate(b, a);
  CHECK(std::abs(ab + ba / (1.0 + ba / 100.0)) < 0.5);
}

TEST_CASE("bd_rate rejects short curves and disjoint ranges") {
  RDCurve small;
  for (double q : {30.0, 33.0, 36.0}) small.points.push_back(pt(1e6, q));
  RDCurve ok;
  for (double q : {30.0, 33.0, 36.0, 39.0}) ok.points.push_back(pt(std::pow(10, q / 8), q));
  CHECK_THROWS_AS(bd_rate(small, ok), std::invalid_argument);
  RDCurve high;
  for (double q : {50.0, 53.0, 56.0, 59.0}) high.points.push_back(pt(std::pow(10, q / 8), q));
  CHECK_THROWS_WITH_AS(bd_rate(high, ok), doctest::Contains("disjoint"),
                       std::invalid_argument);
}

TEST_CASE("mode codes cover the nine options and round-trip") {
  CHECK(ModeDecision::all_modes().size() == 9);
  for (const auto& m : ModeDecision::all_modes()) {
    const ModeDecision back = ModeDecision::from_code(m.code());
    CHECK(back == m);
    CHECK(ModeDecision::parse(m.name()) == m);
  }
  CHECK(ModeDecision{}.code() == 0);
  for (uint8_t reserved = 9; reserved <= 15; ++reserved)
    CHECK_THROWS_AS(ModeDecision::from_code(reserved), std::invalid_argument);
}

TEST_CASE("passthrough evaluation equals the bare codec plus 4 signaling bits") {
  auto g = testutil::rng(60);
  Sequence seq = synth::clip(g, 48, 32, 8, 3);
  CodecSpec spec;
  ModelBank bank;  // passthrough needs no models
  RDPoint p = evaluate_mode(seq, ModeDecision{}, spec, 4.0, bank);
  CodedSequence bare = code_sequence(seq, spec, 4.0);
  CHECK(p.bits == bare.payload_bits + 4);
  CHECK(p.psnr == doctest::Approx(psnr_yuv(seq, bare.decoded).weighted));
}

TEST_CASE("quarter-resolution modes spend fewer bits on smooth content") {
  auto g = testutil::rng(61);
  Sequence seq = synth::clip(g, 96, 96, 8, 2);
  CodecSpec spec;
  ModelBank bank = fresh_bank();
  RDPoint pass = evaluate_mode(seq, ModeDecision{}, spec, 4.0, bank);
  RDPoint quarter =
      evaluate_mode(seq, ModeDecision{PreprocOption::Linear, 4}, spec, 4.0, bank);
  CHECK(quarter.bits < pass.bits);
}

TEST_CASE("evaluating the same point twice is deterministic") {
  auto g = testutil::rng(62);
  Sequence seq = synth::clip(g, 48, 48, 8, 2);
  CodecSpec spec;
  ModelBank bank = fresh_bank();
  const ModeDecision mode{PreprocOption::Neural, 2};
  RDPoint a = evaluate_mode(seq, mode, spec, 6.0, bank);
  RDPoint b = evaluate_mode(seq, mode, spec, 6.0, bank);
  CHECK(a.bits == b.bits);
  CHECK(a.psnr == b.psnr);
}

TEST_CASE("encode_sequence selection matches a brute-force argmax") {
  auto g = testutil::rng(63);
  Sequence seq = synth::clip(g, 48, 48, 8, 2);
  CodecSpec spec;
  ModelBank bank = fresh_bank();
  const std::vector<double> ladder{2.0, 8.0, 24.0};
  std::vector<ModeDecision> modes{ModeDecision{},
                                  {PreprocOption::Linear, 2},
                                  {PreprocOption::Linear, 4},
                                  {PreprocOption::Neural, 2}};
  EncodeResult res = encode_sequence(seq, spec, ladder, bank, modes, 2);
  CHECK(res.points.size() == ladder.size() * modes.size());
  REQUIRE(res.selections.size() == ladder.size());
  for (const auto& sel : res.selections) {
    const RDPoint* best = nullptr;
    for (const auto& p : res.points) {
      if (p.rate_bps > sel.target_bps) continue;
      if (!best || p.psnr > best->psnr ||
          (p.psnr == best->psnr &&
           (p.rate_bps < best->rate_bps ||
            (p.rate_bps == best->rate_bps && p.mode.code() < best->mode.code()))))
        best = &p;
    }
    REQUIRE(best != nullptr);
    CHECK(sel.chosen.mode == best->mode);
    CHECK(sel.chosen.qp == best->qp);
  }
  // single-threaded evaluation agrees
  EncodeResult res1 = encode_sequence(seq, spec, ladder, bank, modes, 1);
  REQUIRE(res1.points.size() == res.points.size());
  for (size_t i = 0; i < res.points.size(); ++i)
    CHECK(res1.points[i].bits == res.points[i].bits);
}

TEST_CASE("containers round-trip every mode code and reject reserved ones") {
  auto g = testutil::rng(64);
  Sequence seq = synth::clip(g, 48, 48, 8, 2);
  CodecSpec spec;
  ModelBank bank = fresh_bank();
  for (const auto& mode : ModeDecision::all_modes()) {
    Container c = encode_to_container(seq, spec, bank, mode, 4.0);
    Container back = Container::from_bytes(c.to_bytes());
    CHECK(back.mode == mode);
    CHECK(back.width == 48);
    CHECK(back.bit_depth == 8);
    Sequence dec = decode_sequence(back, spec, bank);
    CHECK(dec.width() == seq.width());
    CHECK(dec.height() == seq.height());
    CHECK(dec.frames.size() == seq.frames.size());
  }
  Container c = encode_to_container(seq, spec, bank, ModeDecision{}, 4.0);
  auto bytes = c.to_bytes();
  bytes[6] = 12;  // reserved mode code
  CHECK_THROWS_WITH_AS(Container::from_bytes(bytes), doctest::Contains("reserved"),
                       std::invalid_argument);
}

TEST_CASE("passthrough containers carry the bare codec payload bit for bit") {
  auto g = testutil::rng(65);
  Sequence seq = synth::clip(g, 32, 32, 8, 2);
  CodecSpec spec;
  ModelBank bank;
  Container c = encode_to_container(seq, spec, bank, ModeDecision{}, 4.0);
  CodedSequence bare = code_sequence(seq, spec, 4.0);
  CHECK(c.payload == bare.payload);
  Sequence dec = decode_sequence(c, spec, bank);
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    CHECK(dec.frames[i].y == bare.decoded.frames[i].y);
    CHECK(dec.frames[i].u == bare.decoded.frames[i].u);
    CHECK(dec.frames[i].v == bare.decoded.frames[i].v);
  }
}

TEST_CASE("missing models are reported with kind and ratio") {
  auto g = testutil::rng(66);
  Sequence seq = synth::clip(g, 48, 48, 8, 1);
  CodecSpec spec;
  ModelBank empty;
  CHECK_THROWS_WITH_AS(
      evaluate_mode(seq, ModeDecision{PreprocOption::Neural, 3}, spec, 4.0, empty),
      doctest::Contains("ratio index 3"), std::runtime_error);
}

TEST_CASE("rd csv round-trips through the reader") {
  std::vector<RDPoint> pts{pt(1.5e6, 31.25, 0, 4), pt(9e5, 33.5, 6, 8)};
  std::stringstream ss;
  write_rd_csv(ss, "clip", pts);
  auto back = read_rd_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].rate_bps == doctest::Approx(1.5e6));
  CHECK(back[1].mode.code() == 6);
  CHECK(back[1].psnr == doctest::Approx(33.5));
}
