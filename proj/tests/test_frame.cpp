#include "nwrap/frame.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_util.hpp"

using namespace nwrap;

namespace {

FrameYUV420 random_frame(std::mt19937_64& g, int w, int h, int depth) {
  FrameYUV420 f = FrameYUV420::filled(w, h, depth, 0, 0);
  const int maxv = f.max_value();
  for (auto& s : f.y) s = static_cast<uint16_t>(g() % (maxv + 1));
  for (auto& s : f.u) s = static_cast<uint16_t>(g() % (maxv + 1));
  for (auto& s : f.v) s = static_cast<uint16_t>(g() % (maxv + 1));
  return f;
}

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_ppm(const std::string& path, int w, int h,
               const std::function<std::array<uint8_t, 3>(int, int)>& px) {
  std::ofstream out(path, std::ios::binary);
  out << "P6\n# test image\n" << w << " " << h << "\n255\n";
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      auto c = px(i, j);
      out.write(reinterpret_cast<const char*>(c.data()), 3);
    }
}

}  // namespace

TEST_CASE("yuv420 frame size arithmetic") {
  // 4x4 8-bit frame = 16 + 4 + 4 = 24 bytes; 48-byte file = 2 frames
  auto g = testutil::rng(1);
  Sequence seq;
  seq.frames.push_back(random_frame(g, 4, 4, 8));
  seq.frames.push_back(random_frame(g, 4, 4, 8));
  const std::string path = tmp_path("nwrap_two_frames.yuv");
  write_yuv420(seq, path);
  CHECK(std::filesystem::file_size(path) == 48);
  Sequence back = read_yuv420(path, 4, 4, 8);
  CHECK(back.frames.size() == 2);

  Sequence seq10;
  seq10.frames.push_back(random_frame(g, 4, 4, 10));
  const std::string path10 = tmp_path("nwrap_one_frame10.yuv");
  write_yuv420(seq10, path10);
  CHECK(std::filesystem::file_size(path10) == 48);  // 24 samples * 2 bytes
  std::filesystem::remove(path);
  std::filesystem::remove(path10);
}

TEST_CASE("yuv420 round-trip is bit exact at both depths") {
  auto g = testutil::rng(22);
  for (int depth : {8, 10}) {
    Sequence seq;
    for (int i = 0; i < 3; ++i) seq.frames.push_back(random_frame(g, 12, 8, depth));
    const std::string path = tmp_path("nwrap_roundtrip.yuv");
    write_yuv420(seq, path);
    Sequence back = read_yuv420(path, 12, 8, depth);
    REQUIRE(back.frames.size() == seq.frames.size());
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      CHECK(back.frames[i].y == seq.frames[i].y);
      CHECK(back.frames[i].u == seq.frames[i].u);
      CHECK(back.frames[i].v == seq.frames[i].v);
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("10-bit extreme value 1023 survives round-trip") {
  Sequence seq;
  seq.frames.push_back(FrameYUV420::filled(4, 4, 10, 1023, 1023));
  const std::string path = tmp_path("nwrap_extreme.yuv");
  write_yuv420(seq, path);
  Sequence back = read_yuv420(path, 4, 4, 10);
  CHECK(back.frames[0].y[0] == 1023);
  std::filesystem::remove(path);
}

TEST_CASE("truncated yuv file errors with byte offset") {
  const std::string path = tmp_path("nwrap_truncated.yuv");
  std::ofstream out(path, std::ios::binary);
  std::vector<char> bytes(30, 0);  // 24 per frame -> 6 bytes of trailing garbage
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_WITH_AS(read_yuv420(path, 4, 4, 8), doctest::Contains("24"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("out-of-range 10-bit sample errors") {
  const std::string path = tmp_path("nwrap_range.yuv");
  std::ofstream out(path, std::ios::binary);
  std::vector<uint8_t> bytes(48, 0);
  bytes[0] = 0xff;
  bytes[1] = 0x07;  // 2047
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_WITH_AS(read_yuv420(path, 4, 4, 10), doctest::Contains("2047"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("empty sequence refuses to write") {
  Sequence seq;
  CHECK_THROWS_AS(write_yuv420(seq, tmp_path("nwrap_empty.yuv")), std::invalid_argument);
}

TEST_CASE("ppm white maps to Y=235, neutral chroma") {
  const std::string path = tmp_path("nwrap_white.ppm");
  write_ppm(path, 6, 4, [](int, int) { return std::array<uint8_t, 3>{255, 255, 255}; });
  FrameYUV420 f = load_image_as_yuv420(path);
  CHECK(std::abs(static_cast<int>(f.y[0]) - 235) <= 1);
  CHECK(std::abs(static_cast<int>(f.u[0]) - 128) <= 1);
  CHECK(std::abs(static_cast<int>(f.v[0]) - 128) <= 1);
  std::filesystem::remove(path);
}

TEST_CASE("ppm black maps to Y=16, neutral chroma") {
  const std::string path = tmp_path("nwrap_black.ppm");
  write_ppm(path, 4, 4, [](int, int) { return std::array<uint8_t, 3>{0, 0, 0}; });
  FrameYUV420 f = load_image_as_yuv420(path);
  CHECK(std::abs(static_cast<int>(f.y[0]) - 16) <= 1);
  CHECK(std::abs(static_cast<int>(f.u[0]) - 128) <= 1);
  CHECK(std::abs(static_cast<int>(f.v[0]) - 128) <= 1);
  std::filesystem::remove(path);
}

TEST_CASE("gray ramp has neutral chroma everywhere") {
  const std::string path = tmp_path("nwrap_ramp.ppm");
  write_ppm(path, 32, 4, [](int, int j) {
    const uint8_t v = static_cast<uint8_t>(j * 8);
    return std::array<uint8_t, 3>{v, v, v};
  });
  FrameYUV420 f = load_image_as_yuv420(path);
  for (uint16_t s : f.u) CHECK(std::abs(static_cast<int>(s) - 128) <= 1);
  for (uint16_t s : f.v) CHECK(std::abs(static_cast<int>(s) - 128) <= 1);
  std::filesystem::remove(path);
}

TEST_CASE("odd ppm extents are cropped even") {
  const std::string path = tmp_path("nwrap_odd.ppm");
  write_ppm(path, 5, 7, [](int, int) { return std::array<uint8_t, 3>{10, 200, 30}; });
  FrameYUV420 f = load_image_as_yuv420(path);
  CHECK(f.width == 4);
  CHECK(f.height == 6);
  std::filesystem::remove(path);
}

TEST_CASE("malformed ppm header errors") {
  const std::string path = tmp_path("nwrap_bad.ppm");
  std::ofstream(path) << "P5\n4 4\n255\n";
  CHECK_THROWS_AS(load_image_as_yuv420(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("psnr of identical frames hits the cap on every output") {
  auto g = testutil::rng(9);
  FrameYUV420 f = random_frame(g, 16, 8, 8);
  PsnrResult r = psnr_yuv(f, f);
  CHECK(r.y == 100.0);
  CHECK(r.u == 100.0);
  CHECK(r.v == 100.0);
  CHECK(r.weighted == 100.0);
}

TEST_CASE("unit error everywhere gives 20*log10(255)") {
  FrameYUV420 a = FrameYUV420::filled(16, 8, 8, 100, 100);
  FrameYUV420 b = FrameYUV420::filled(16, 8, 8, 101, 101);
  PsnrResult r = psnr_yuv(a, b);
  const double expect = 20.0 * std::log10(255.0);  // 48.1308...
  CHECK(r.y == doctest::Approx(expect).epsilon(1e-9));
  CHECK(r.weighted == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("chroma-only distortion follows the 6:1:1 weighting") {
  FrameYUV420 a = FrameYUV420::filled(16, 8, 8, 60, 90);
  FrameYUV420 b = a;
  for (auto& s : b.u) s += 4;
  for (auto& s : b.v) s += 4;
  PsnrResult r = psnr_yuv(a, b);
  CHECK(r.y == 100.0);
  CHECK(r.weighted == doctest::Approx((6.0 * 100.0 + r.u + r.v) / 8.0));
}

TEST_CASE("psnr is symmetric and rejects mismatched dims") {
  auto g = testutil::rng(4);
  FrameYUV420 a = random_frame(g, 8, 8, 8);
  FrameYUV420 b = random_frame(g, 8, 8, 8);
  PsnrResult ab = psnr_yuv(a, b);
  PsnrResult ba = psnr_yuv(b, a);
  CHECK(ab.weighted == doctest::Approx(ba.weighted));
  FrameYUV420 c = random_frame(g, 16, 8, 8);
  CHECK_THROWS_AS(psnr_yuv(a, c), std::invalid_argument);
}

TEST_CASE("normalize endpoints") {
  FrameYUV420 f = FrameYUV420::filled(4, 4, 8, 255, 0);
  PlaneTensors t = normalize(f);
  CHECK(t.y.value()[0] == doctest::Approx(1.0));
  CHECK(t.u.value()[0] == doctest::Approx(-1.0));
}

TEST_CASE("denormalize clips then scales") {
  PlaneTensors t;
  t.y = Tensor(Shape{1, 4, 4}, 1.3);
  t.u = Tensor(Shape{1, 2, 2}, -2.0);
  t.v = Tensor(Shape{1, 2, 2}, 0.0);
  FrameYUV420 f = denormalize(t, 10);
  CHECK(f.y[0] == 1023);
  CHECK(f.u[0] == 0);
  CHECK(f.v[0] == 512);  // (0+1)/2*1023 = 511.5 rounds away from zero
}

TEST_CASE("normalize/denormalize identity on every 8-bit value and sampled 10-bit") {
  FrameYUV420 f8 = FrameYUV420::filled(32, 16, 8, 0, 0);
  for (size_t i = 0; i < f8.y.size(); ++i) f8.y[i] = static_cast<uint16_t>(i % 256);
  for (size_t i = 0; i < f8.u.size(); ++i) {
    f8.u[i] = static_cast<uint16_t>((i * 3) % 256);
    f8.v[i] = static_cast<uint16_t>((i * 7) % 256);
  }
  FrameYUV420 rt = denormalize(normalize(f8), 8);
  CHECK(rt.y == f8.y);
  CHECK(rt.u == f8.u);
  CHECK(rt.v == f8.v);

  auto g = testutil::rng(77);
  FrameYUV420 f10 = random_frame(g, 32, 16, 10);
  FrameYUV420 rt10 = denormalize(normalize(f10), 10);
  CHECK(rt10.y == f10.y);
  CHECK(rt10.u == f10.u);
  CHECK(rt10.v == f10.v);
}
