#include "nwrap/codec.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dct.hpp"
#include "entropy.hpp"

namespace nwrap {

namespace {

constexpr char kFrameMagic[4] = {'N', 'W', 'I', 'C'};
constexpr uint16_t kCodecVersion = 1;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteCursor {
  const std::vector<uint8_t>* bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > bytes->size())
      throw std::runtime_error(std::string("corrupt stream: ") + what +
                               " truncated at byte offset " + std::to_string(pos));
  }
  uint16_t u16(const char* what) {
    need(2, what);
    const uint16_t v = static_cast<uint16_t>((*bytes)[pos] | ((*bytes)[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>((*bytes)[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>((*bytes)[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

struct PlanePayload {
  uint64_t bits = 0;
  std::vector<uint8_t> bytes;
};

PlanePayload encode_plane(const std::vector<uint16_t>& plane, int w, int h, int shift,
                          double stepsize) {
  const int pw = (w + 7) & ~7, ph = (h + 7) & ~7;
  std::vector<double> shifted(static_cast<size_t>(pw) * ph);
  for (int i = 0; i < ph; ++i) {
    const int si = std::min(i, h - 1);
    for (int j = 0; j < pw; ++j)
      shifted[static_cast<size_t>(i) * pw + j] =
          static_cast<double>(plane[static_cast<size_t>(si) * w + std::min(j, w - 1)]) -
          shift;
  }
  entropy::BitWriter bw;
  int32_t dc_pred = 0;
  std::vector<double> coeffs(64);
  int32_t block[64];
  for (int bi = 0; bi < ph; bi += 8)
    for (int bj = 0; bj < pw; bj += 8) {
      dct::transform_block(shifted.data() + static_cast<size_t>(bi) * pw + bj, pw, 8,
                           dct::cached_basis(8).data(), false, coeffs.data(), 8);
      for (int i = 0; i < 64; ++i)
        block[i] =
            static_cast<int32_t>(std::lround(coeffs[static_cast<size_t>(i)] / stepsize));
      if (entropy::block_is_skippable(block, dc_pred)) {
        bw.put_bit(0);
      } else {
        bw.put_bit(1);
        entropy::encode_block(bw, block, dc_pred);
      }
    }
  PlanePayload p;
  p.bits = bw.bit_count();
  p.bytes = bw.take();
  return p;
}

std::vector<uint16_t> decode_plane(const PlanePayload& p, int w, int h, int shift,
                                   int max_value, double stepsize) {
  const int pw = (w + 7) & ~7, ph = (h + 7) & ~7;
  entropy::BitReader br(p.bytes, p.bits);
  std::vector<double> recon(static_cast<size_t>(pw) * ph);
  int32_t dc_pred = 0;
  int32_t block[64];
  std::vector<double> deq(64), pix(64);
  for (int bi = 0; bi < ph; bi += 8)
    for (int bj = 0; bj < pw; bj += 8) {
      if (br.get_bit()) {
        entropy::decode_block(br, block, dc_pred);
      } else {
        for (int i = 1; i < 64; ++i) block[i] = 0;
        block[0] = dc_pred;
      }
      for (int i = 0; i < 64; ++i)
        deq[static_cast<size_t>(i)] = static_cast<double>(block[i]) * stepsize;
      dct::transform_block(deq.data(), 8, 8, dct::cached_basis(8).data(), true,
                           pix.data(), 8);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          recon[static_cast<size_t>(bi + i) * pw + bj + j] =
              pix[static_cast<size_t>(i) * 8 + j];
    }
  std::vector<uint16_t> out(static_cast<size_t>(w) * h);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i) * w + j] = static_cast<uint16_t>(std::clamp<long>(
          std::lround(recon[static_cast<size_t>(i) * pw + j] + shift), 0, max_value));
  return out;
}

}  // namespace

std::vector<uint8_t> internal_intra_encode(const FrameYUV420& frame, double stepsize) {
  if (!(stepsize > 0.0))
    throw std::invalid_argument("stepsize must be positive, got " +
                                std::to_string(stepsize));
  const int shift = 1 << (frame.bit_depth - 1);
  std::vector<uint8_t> out;
  out.insert(out.end(), kFrameMagic, kFrameMagic + 4);
  put_u16(out, kCodecVersion);
  put_u32(out, static_cast<uint32_t>(frame.width));
  put_u32(out, static_cast<uint32_t>(frame.height));
  out.push_back(static_cast<uint8_t>(frame.bit_depth));
  put_f32(out, static_cast<float>(stepsize));
  const PlanePayload planes[3] = {
      encode_plane(frame.y, frame.width, frame.height, shift, stepsize),
      encode_plane(frame.u, frame.chroma_width(), frame.chroma_height(), shift, stepsize),
      encode_plane(frame.v, frame.chroma_width(), frame.chroma_height(), shift, stepsize)};
  for (const auto& p : planes) {
    put_u64(out, p.bits);
    put_u32(out, static_cast<uint32_t>(p.bytes.size()));
    out.insert(out.end(), p.bytes.begin(), p.bytes.end());
  }
  return out;
}

namespace {

FrameYUV420 decode_frame_at(const std::vector<uint8_t>& bytes, ByteCursor& cur) {
  cur.need(4, "magic");
  if (std::memcmp(bytes.data() + cur.pos, kFrameMagic, 4) != 0)
    throw std::runtime_error("corrupt stream: bad frame magic at byte offset " +
                             std::to_string(cur.pos));
  cur.pos += 4;
  const uint16_t version = cur.u16("version");
  if (version != kCodecVersion)
    throw std::runtime_error("unsupported intra codec version " +
                             std::to_string(version));
  FrameYUV420 f;
  f.width = static_cast<int>(cur.u32("width"));
  f.height = static_cast<int>(cur.u32("height"));
  cur.need(1, "depth");
  f.bit_depth = (*cur.bytes)[cur.pos++];
  const double stepsize = cur.f32("stepsize");
  if (f.width < 2 || f.height < 2 || f.width % 2 || f.height % 2 ||
      (f.bit_depth != 8 && f.bit_depth != 10) || !(stepsize > 0.0f))
    throw std::runtime_error("corrupt stream: implausible header at byte offset " +
                             std::to_string(cur.pos));
  const int shift = 1 << (f.bit_depth - 1);
  auto read_plane = [&](int w, int h) {
    PlanePayload p;
    p.bits = cur.u64("plane bit count");
    const uint32_t nbytes = cur.u32("plane byte count");
    cur.need(nbytes, "plane payload");
    p.bytes.assign(cur.bytes->begin() + static_cast<long>(cur.pos),
                   cur.bytes->begin() + static_cast<long>(cur.pos + nbytes));
    cur.pos += nbytes;
    if (p.bits > static_cast<uint64_t>(nbytes) * 8)
      throw std::runtime_error("corrupt stream: bit count exceeds payload at offset " +
                               std::to_string(cur.pos));
    return decode_plane(p, w, h, shift, (1 << f.bit_depth) - 1, stepsize);
  };
  f.y = read_plane(f.width, f.height);
  f.u = read_plane(f.width / 2, f.height / 2);
  f.v = read_plane(f.width / 2, f.height / 2);
  return f;
}

}  // namespace

FrameYUV420 internal_intra_decode(const std::vector<uint8_t>& bytes) {
  ByteCursor cur{&bytes, 0};
  return decode_frame_at(bytes, cur);
}

// --- spec validation and sequence coding ------------------------------------

namespace {

bool has_placeholder(const std::string& tmpl, const std::string& key) {
  return tmpl.find("{" + key + "}") != std::string::npos;
}

std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
  const std::string token = "{" + key + "}";
  size_t pos;
  while ((pos = tmpl.find(token)) != std::string::npos)
    tmpl.replace(pos, token.size(), value);
  return tmpl;
}

std::string format_qp(double qp) {
  if (qp == std::floor(qp) && std::abs(qp) < 1e9)
    return std::to_string(static_cast<long long>(qp));
  std::ostringstream os;
  os << qp;
  return os.str();
}

std::filesystem::path fresh_temp_dir() {
  static std::mt19937_64 g(std::random_device{}());
  const auto base = std::filesystem::temp_directory_path();
  for (int tries = 0; tries < 64; ++tries) {
    auto dir = base / ("nwrap_codec_" + std::to_string(g()));
    std::error_code ec;
    if (std::filesystem::create_directory(dir, ec)) return dir;
  }
  throw std::runtime_error("cannot create a temp directory under " + base.string());
}

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void run_command(const std::string& cmd, const std::filesystem::path& log,
                 const char* what) {
  const std::string full = cmd + " >" + log.string() + " 2>&1";
  const int rc = std::system(full.c_str());
  if (rc != 0)
    throw std::runtime_error(std::string(what) + " failed (exit status " +
                             std::to_string(rc) + "): " + cmd +
                             "\n--- captured output ---\n" + read_text_file(log));
}

}  // namespace

void validate_codec_spec(const CodecSpec& spec) {
  if (spec.kind == CodecSpec::Kind::Internal) return;
  for (const char* key : {"input", "output", "qp"})
    if (!has_placeholder(spec.encode_template, key))
      throw std::invalid_argument("encode template is missing the {" + std::string(key) +
                                  "} placeholder: " + spec.encode_template);
  for (const char* key : {"input", "output"})
    if (!has_placeholder(spec.decode_template, key))
      throw std::invalid_argument("decode template is missing the {" + std::string(key) +
                                  "} placeholder: " + spec.decode_template);
}

CodedSequence code_sequence(const Sequence& seq, const CodecSpec& spec, double qp) {
  if (seq.frames.empty()) throw std::invalid_argument("cannot code an empty sequence");
  validate_codec_spec(spec);
  CodedSequence out;
  out.decoded.fps_num = seq.fps_num;
  out.decoded.fps_den = seq.fps_den;

  if (spec.kind == CodecSpec::Kind::Internal) {
    std::vector<uint8_t> payload;
    put_u32(payload, static_cast<uint32_t>(seq.frames.size()));
    for (const auto& f : seq.frames) {
      const auto bytes = internal_intra_encode(f, qp);
      payload.insert(payload.end(), bytes.begin(), bytes.end());
    }
    out.payload_bits = static_cast<uint64_t>(payload.size()) * 8;
    out.decoded = decode_payload(payload, spec, seq.width(), seq.height(),
                                 seq.bit_depth(), seq.fps_num, seq.fps_den);
    out.payload = std::move(payload);
    return out;
  }

  const auto dir = fresh_temp_dir();
  const auto raw = dir / "input.yuv";
  const auto coded = dir / "coded.bin";
  const auto recon = dir / "recon.yuv";
  const auto log = dir / "codec.log";
  try {
    write_yuv420(seq, raw.string());
    auto fill = [&](std::string tmpl, const std::string& in, const std::string& outp) {
      tmpl = substitute(tmpl, "input", in);
      tmpl = substitute(tmpl, "output", outp);
      tmpl = substitute(tmpl, "width", std::to_string(seq.width()));
      tmpl = substitute(tmpl, "height", std::to_string(seq.height()));
      tmpl = substitute(tmpl, "depth", std::to_string(seq.bit_depth()));
      tmpl = substitute(tmpl, "qp", format_qp(qp));
      tmpl = substitute(tmpl, "fps", std::to_string(seq.fps()));
      return tmpl;
    };
    run_command(fill(spec.encode_template, raw.string(), coded.string()), log,
                "external encoder");
    if (!std::filesystem::exists(coded))
      throw std::runtime_error("external encoder produced no output: " + coded.string());
    out.payload_bits = static_cast<uint64_t>(std::filesystem::file_size(coded)) * 8;
    {
      std::ifstream in(coded, std::ios::binary);
      out.payload.assign(std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>());
    }
    run_command(fill(spec.decode_template, coded.string(), recon.string()), log,
                "external decoder");
    Sequence dec = read_yuv420(recon.string(), seq.width(), seq.height(),
                               seq.bit_depth(), static_cast<int>(seq.frames.size()));
    if (dec.frames.size() != seq.frames.size())
      throw std::runtime_error("external decoder returned " +
                               std::to_string(dec.frames.size()) + " frames, expected " +
                               std::to_string(seq.frames.size()));
    dec.fps_num = seq.fps_num;
    dec.fps_den = seq.fps_den;
    out.decoded = std::move(dec);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    throw;
  }
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return out;
}

Sequence decode_payload(const std::vector<uint8_t>& payload, const CodecSpec& spec,
                        int width, int height, int bit_depth, uint32_t fps_num,
                        uint32_t fps_den) {
  Sequence seq;
  seq.fps_num = fps_num;
  seq.fps_den = fps_den;
  if (spec.kind == CodecSpec::Kind::Internal) {
    ByteCursor cur{&payload, 0};
    const uint32_t n = cur.u32("frame count");
    for (uint32_t i = 0; i < n; ++i) seq.frames.push_back(decode_frame_at(payload, cur));
    if (!seq.frames.empty() &&
        (seq.width() != width || seq.height() != height || seq.bit_depth() != bit_depth))
      throw std::runtime_error("decoded geometry does not match the container header");
    return seq;
  }
  validate_codec_spec(spec);
  const auto dir = fresh_temp_dir();
  const auto coded = dir / "coded.bin";
  const auto recon = dir / "recon.yuv";
  const auto log = dir / "codec.log";
  try {
    {
      std::ofstream outf(coded, std::ios::binary);
      outf.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size()));
    }
    std::string cmd = spec.decode_template;
    cmd = substitute(cmd, "input", coded.string());
    cmd = substitute(cmd, "output", recon.string());
    cmd = substitute(cmd, "width", std::to_string(width));
    cmd = substitute(cmd, "height", std::to_string(height));
    cmd = substitute(cmd, "depth", std::to_string(bit_depth));
    cmd = substitute(cmd, "fps", std::to_string(static_cast<double>(fps_num) / fps_den));
    run_command(cmd, log, "external decoder");
    seq = read_yuv420(recon.string(), width, height, bit_depth, 0);
    seq.fps_num = fps_num;
    seq.fps_den = fps_den;
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    throw;
  }
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return seq;
}

}  // namespace nwrap
