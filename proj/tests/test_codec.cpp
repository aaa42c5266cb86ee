#include "nwrap/codec.hpp"

#include <filesystem>

#include "dct.hpp"
#include "doctest.h"
#include "synth.hpp"
#include "test_util.hpp"

using namespace nwrap;

TEST_CASE("intra codec round-trips to the quantized reconstruction") {
  auto g = testutil::rng(8);
  for (int depth : {8, 10}) {
    FrameYUV420 f = synth::frame(g, 40, 24, depth);
    const double step = 2.5;
    const auto bytes = internal_intra_encode(f, step);
    FrameYUV420 dec = internal_intra_decode(bytes);
    REQUIRE(dec.width == f.width);
    REQUIRE(dec.bit_depth == depth);

    // independent reference over the padded luma plane
    const int shift = 1 << (depth - 1);
    const int pw = (f.width + 7) & ~7, ph = (f.height + 7) & ~7;
    std::vector<double> plane(static_cast<size_t>(pw) * ph);
    for (int i = 0; i < ph; ++i)
      for (int j = 0; j < pw; ++j)
        plane[static_cast<size_t>(i) * pw + j] =
            f.y[static_cast<size_t>(std::min(i, f.height - 1)) * f.width +
                std::min(j, f.width - 1)] -
            static_cast<double>(shift);
    std::vector<double> coeffs(plane.size()), recon(plane.size());
    dct::transform_plane(plane.data(), ph, pw, 8, false, coeffs.data());
    for (auto& c : coeffs) c = std::lround(c / step) * step;
    dct::transform_plane(coeffs.data(), ph, pw, 8, true, recon.data());
    for (int i = 0; i < f.height; ++i)
      for (int j = 0; j < f.width; ++j) {
        const long expect = std::clamp<long>(
            std::lround(recon[static_cast<size_t>(i) * pw + j] + shift), 0,
            (1 << depth) - 1);
        CHECK(dec.y[static_cast<size_t>(i) * f.width + j] == expect);
      }
  }
}

TEST_CASE("constant frame compresses below 0.05 bits per pixel") {
  FrameYUV420 f = FrameYUV420::filled(240, 240, 8, 170, 100);
  const auto bytes = internal_intra_encode(f, 4.0);
  const double bpp = static_cast<double>(bytes.size()) * 8.0 / (240.0 * 240.0);
  CHECK(bpp < 0.05);
}

TEST_CASE("large stepsize drives every AC to zero") {
  auto g = testutil::rng(3);
  FrameYUV420 f = synth::frame(g, 64, 64, 8);
  const auto coarse = internal_intra_encode(f, 4096.0);
  FrameYUV420 dec = internal_intra_decode(coarse);
  // with all coefficients quantized away the reconstruction is flat
  for (uint16_t v : dec.y) CHECK(v == dec.y[0]);
}

TEST_CASE("intra codec is near-lossless at the smallest stepsize") {
  auto g = testutil::rng(21);
  Sequence seq = synth::clip(g, 64, 48, 8, 3);
  CodecSpec spec;
  spec.kind = CodecSpec::Kind::Internal;
  CodedSequence coded = code_sequence(seq, spec, 1.0);
  PsnrResult r = psnr_yuv(seq, coded.decoded);
  CHECK(r.weighted >= 45.0);
}

TEST_CASE("payload shrinks and PSNR drops as the stepsize ladder coarsens") {
  auto g = testutil::rng(5);
  Sequence seq = synth::clip(g, 96, 64, 8, 3);
  CodecSpec spec;
  uint64_t prev_bits = ~0ull;
  double prev_psnr = 1e9;
  for (double step : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
    CodedSequence coded = code_sequence(seq, spec, step);
    CHECK(coded.payload_bits < prev_bits);
    const double p = psnr_yuv(seq, coded.decoded).weighted;
    CHECK(p <= prev_psnr + 1e-9);
    prev_bits = coded.payload_bits;
    prev_psnr = p;
  }
}

TEST_CASE("corrupt streams report a byte offset") {
  FrameYUV420 f = FrameYUV420::filled(16, 16, 8, 128, 128);
  auto bytes = internal_intra_encode(f, 2.0);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_WITH_AS(internal_intra_decode(bytes), doctest::Contains("offset"),
                       std::runtime_error);
  auto bad = internal_intra_encode(f, 2.0);
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(internal_intra_decode(bad), doctest::Contains("magic"),
                       std::runtime_error);
}

TEST_CASE("decode_payload round-trips an internal multi-frame stream") {
  auto g = testutil::rng(14);
  Sequence seq = synth::clip(g, 48, 32, 10, 4);
  CodecSpec spec;
  CodedSequence coded = code_sequence(seq, spec, 2.0);
  Sequence again = decode_payload(coded.payload, spec, 48, 32, 10, 30, 1);
  REQUIRE(again.frames.size() == seq.frames.size());
  for (size_t i = 0; i < seq.frames.size(); ++i)
    CHECK(again.frames[i].y == coded.decoded.frames[i].y);
}

TEST_CASE("external template validation happens before any spawn") {
  CodecSpec spec;
  spec.kind = CodecSpec::Kind::External;
  spec.encode_template = "encoder {input} {output}";  // no {qp}
  spec.decode_template = "decoder {input} {output}";
  CHECK_THROWS_WITH_AS(validate_codec_spec(spec), doctest::Contains("{qp}"),
                       std::invalid_argument);
  spec.encode_template = "encoder {input} {output} {qp}";
  spec.decode_template = "decoder {input}";
  CHECK_THROWS_WITH_AS(validate_codec_spec(spec), doctest::Contains("{output}"),
                       std::invalid_argument);
}

TEST_CASE("a pass-through external codec round-trips and reports file bits") {
  auto g = testutil::rng(30);
  Sequence seq = synth::clip(g, 32, 16, 8, 2);
  CodecSpec spec;
  spec.kind = CodecSpec::Kind::External;
  spec.encode_template = "qp={qp}; cp {input} {output}";
  spec.decode_template = "cp {input} {output}";
  CodedSequence coded = code_sequence(seq, spec, 30);
  REQUIRE(coded.decoded.frames.size() == 2);
  CHECK(coded.decoded.frames[0].y == seq.frames[0].y);
  CHECK(coded.payload_bits == static_cast<uint64_t>(32 * 16 * 3 / 2) * 2 * 8);
}

TEST_CASE("failing external encoders surface their diagnostics") {
  auto g = testutil::rng(31);
  Sequence seq = synth::clip(g, 16, 16, 8, 1);
  CodecSpec spec;
  spec.kind = CodecSpec::Kind::External;
  spec.encode_template = "qp={qp}; echo encoder exploded for {input} {output} >&2; exit 3";
  spec.decode_template = "cp {input} {output}";
  CHECK_THROWS_WITH_AS(code_sequence(seq, spec, 30),
                       doctest::Contains("encoder exploded"), std::runtime_error);
}
