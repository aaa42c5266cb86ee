// Drives the installed binary end to end through a shell.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nwrap/model.hpp"
#include "nwrap/rdo.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace nwrap;

namespace {

const char* cli = NWRAP_CLI_PATH;

struct RunResult {
  int status;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string out_path =
      (std::filesystem::temp_directory_path() / "nwrap_cli_out.txt").string();
  const std::string cmd = std::string(cli) + " " + args + " >" + out_path + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(out_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(rc), ss.str()};
}

std::string work_dir() {
  auto p = std::filesystem::temp_directory_path() / "nwrap_cli_work";
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("bdrate of a file against itself prints 0.00%") {
  const std::string dir = work_dir();
  const std::string csv = dir + "/self.csv";
  {
    std::ofstream os(csv);
    std::vector<RDPoint> pts;
    for (double q : {30.0, 33.0, 36.0, 39.0, 42.0}) {
      RDPoint p;
      p.rate_bps = std::pow(10.0, 3.5 + q / 9.0);
      p.psnr = p.planes.weighted = q;
      p.bits = 1000;
      pts.push_back(p);
    }
    write_rd_csv(os, "clip", pts);
  }
  RunResult r = run("bdrate " + csv + " " + csv);
  CHECK(r.status == 0);
  CHECK(r.out == "0.00%\n");
}

TEST_CASE("macs reports the complexity of a saved model") {
  const std::string dir = work_dir();
  const std::string model = dir + "/post.nwrp";
  save_weights(build_postprocessor(), model);
  RunResult r = run("macs --model " + model);
  CHECK(r.status == 0);
  CHECK(r.out.find("macs_per_pixel=") != std::string::npos);
  CHECK(r.out.find("parameters=8134") != std::string::npos);
}

TEST_CASE("unknown flags exit 1, missing files exit 2") {
  CHECK(run("macs --bogus-flag 1").status == 1);
  CHECK(run("macs --model /nonexistent/x.nwrp").status == 2);
  CHECK(run("").status == 1);  // a subcommand is required
}

TEST_CASE("encode then decode round-trips the passthrough path") {
  const std::string dir = work_dir();
  auto g = testutil::rng(41);
  Sequence seq = synth::clip(g, 48, 32, 8, 2);
  const std::string yuv = dir + "/in.yuv";
  write_yuv420(seq, yuv);

  RunResult enc = run("encode --input " + yuv +
                      " --width 48 --height 32 --depth 8 --qp-ladder 4"
                      " --modes passthrough --report " + dir + "/report.csv" +
                      " --json " + dir + "/report.json --out " + dir + "/clip");
  CHECK(enc.status == 0);
  REQUIRE(std::filesystem::exists(dir + "/clip.qp4.nwc"));
  REQUIRE(std::filesystem::exists(dir + "/report.json"));

  RunResult dec = run("decode --input " + dir + "/clip.qp4.nwc --output " + dir +
                      "/out.yuv");
  CHECK(dec.status == 0);
  CHECK(dec.out.find("frames=2") != std::string::npos);

  // the container path must match the bare codec round trip exactly
  CodecSpec spec;
  CodedSequence bare = code_sequence(seq, spec, 4.0);
  Sequence decoded = read_yuv420(dir + "/out.yuv", 48, 32, 8);
  for (size_t i = 0; i < decoded.frames.size(); ++i) {
    CHECK(decoded.frames[i].y == bare.decoded.frames[i].y);
    CHECK(decoded.frames[i].u == bare.decoded.frames[i].u);
    CHECK(decoded.frames[i].v == bare.decoded.frames[i].v);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate sweeps neural modes with a model dir") {
  const std::string dir = work_dir();
  const std::string models = dir + "/models";
  std::filesystem::create_directories(models);
  for (int k = 1; k <= 4; ++k) {
    WrapperModel post = build_postprocessor(static_cast<uint64_t>(k));
    post.ratio = ratio_from_index(k);
    save_weights(post, models + "/" +
                           ModelBank::file_name(ModelKind::Post, WrapperFlag::PostOnly, k));
  }
  auto g = testutil::rng(42);
  Sequence seq = synth::clip(g, 48, 48, 8, 2);
  const std::string yuv = dir + "/in.yuv";
  write_yuv420(seq, yuv);
  RunResult r = run("evaluate --input " + yuv +
                    " --width 48 --height 48 --qp-ladder 2,8 --threads 2"
                    " --modes passthrough,linear:1/2,linear:1/4 --model-dir " + models);
  CHECK(r.status == 0);
  // header + 3 modes x 2 ladder entries
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 7);
  CHECK(r.out.find("linear:1/4") != std::string::npos);
  std::filesystem::remove_all(dir);
}
