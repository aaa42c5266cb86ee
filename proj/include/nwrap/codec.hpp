// Pluggable "standard codec" layer. External encoders are driven through
// command templates over temp files; a built-in intra codec keeps the whole
// pipeline runnable with no external binaries.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nwrap/frame.hpp"

namespace nwrap {

struct CodecSpec {
  enum class Kind { Internal, External };
  Kind kind = Kind::Internal;
  // Placeholders: {input} {output} {width} {height} {depth} {qp} {fps}.
  // encode requires {input} {output} {qp}; decode requires {input} {output}.
  std::string encode_template;
  std::string decode_template;
  std::vector<double> qp_ladder;  // stepsizes for the internal codec
};

/// Checks placeholder presence and ladder sanity before anything is spawned.
void validate_codec_spec(const CodecSpec& spec);

struct CodedSequence {
  Sequence decoded;
  uint64_t payload_bits = 0;
  std::vector<uint8_t> payload;
};

/// Encodes and immediately decodes, returning the reconstruction and the
/// exact compressed size in bits. External encoders exchange raw YUV through
/// a fresh temp directory; their diagnostics are captured and attached to
/// any error.
CodedSequence code_sequence(const Sequence& seq, const CodecSpec& spec, double qp);

/// Reconstructs a sequence from a stored payload (the container path).
Sequence decode_payload(const std::vector<uint8_t>& payload, const CodecSpec& spec,
                        int width, int height, int bit_depth, uint32_t fps_num,
                        uint32_t fps_den);

/// Hermetic intra coder: 8x8 blockwise DCT, flat quantization stepsize,
/// differential DC, one coded-block flag per block. The bitstream
/// self-describes dims, depth and stepsize.
std::vector<uint8_t> internal_intra_encode(const FrameYUV420& frame, double stepsize);
FrameYUV420 internal_intra_decode(const std::vector<uint8_t>& bytes);

}  // namespace nwrap
