// Command-line front end: train, encode, decode, evaluate, bdrate, macs,
// gradcheck. Machine-readable results go to stdout, diagnostics to stderr.
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nwrap/audit.hpp"
#include "nwrap/rdo.hpp"
#include "nwrap/trainer.hpp"

namespace {

using namespace nwrap;

std::pair<uint32_t, uint32_t> parse_fps(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos)
    return {static_cast<uint32_t>(std::stoul(text)), 1};
  return {static_cast<uint32_t>(std::stoul(text.substr(0, slash))),
          static_cast<uint32_t>(std::stoul(text.substr(slash + 1)))};
}

std::vector<double> parse_ladder(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw std::invalid_argument("empty qp ladder");
  return out;
}

std::vector<ModeDecision> parse_modes(const std::string& text) {
  if (text == "all") return ModeDecision::all_modes();
  std::vector<ModeDecision> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ModeDecision::parse(item));
  if (out.empty()) throw std::invalid_argument("empty mode set");
  return out;
}

struct CodecFlags {
  std::string encode_template, decode_template;

  void attach(CLI::App* cmd) {
    cmd->add_option("--codec-template-encode", encode_template,
                    "external encoder command with {input} {output} {qp} "
                    "({width} {height} {depth} {fps} optional)");
    cmd->add_option("--codec-template-decode", decode_template,
                    "external decoder command with {input} {output}");
  }
  CodecSpec spec(const std::vector<double>& ladder = {}) const {
    CodecSpec s;
    s.qp_ladder = ladder;
    if (!encode_template.empty() || !decode_template.empty()) {
      s.kind = CodecSpec::Kind::External;
      s.encode_template = encode_template;
      s.decode_template = decode_template;
      validate_codec_spec(s);
    }
    return s;
  }
};

struct SweepArgs {
  std::string input, name;
  int width = 0, height = 0, depth = 8, frames = 0, threads = 1;
  std::string fps = "30";
  std::string ladder_text;
  std::string modes_text = "passthrough";
  std::string model_dir;
  std::string report_path, json_path;

  void attach(CLI::App* cmd, CodecFlags& codec) {
    cmd->add_option("--input", input, "raw planar 4:2:0 file")->required();
    cmd->add_option("--width", width)->required();
    cmd->add_option("--height", height)->required();
    cmd->add_option("--depth", depth, "8 or 10")->check(CLI::IsMember({8, 10}));
    cmd->add_option("--fps", fps, "frames per second, num or num/den");
    cmd->add_option("--frames", frames, "frame limit, 0 = all");
    cmd->add_option("--qp-ladder", ladder_text, "comma-separated quality settings")
        ->required();
    cmd->add_option("--modes", modes_text,
                    "comma-separated modes (passthrough, neural:R, linear:R) or 'all'");
    cmd->add_option("--model-dir", model_dir, "directory of .nwrp weight files")
        ->envname("NWRAP_MODEL_DIR");
    cmd->add_option("--name", name, "sequence name used in reports");
    cmd->add_option("--report", report_path, "write the R-D table here (default stdout)");
    cmd->add_option("--json", json_path, "write the frontier/selection summary here");
    cmd->add_option("--threads", threads, "parallel mode evaluations")
        ->check(CLI::PositiveNumber);
    codec.attach(cmd);
  }

  void emit_reports(const EncodeResult& result) const {
    const std::string label =
        name.empty() ? input.substr(input.find_last_of('/') + 1) : name;
    if (report_path.empty()) {
      write_rd_csv(std::cout, label, result.points);
    } else {
      std::ofstream os(report_path);
      if (!os) throw std::runtime_error("cannot open " + report_path);
      write_rd_csv(os, label, result.points);
    }
    if (!json_path.empty()) {
      std::ofstream os(json_path);
      if (!os) throw std::runtime_error("cannot open " + json_path);
      write_pareto_json(os, label, result);
    }
  }
};

int cmd_train(const std::string& config_path, TrainConfig cfg, CLI::App* cmd) {
  if (!config_path.empty()) {
    TrainConfig from_file = load_train_config(config_path);
    // CLI flags win over file values
    if (!cmd->count("--ratio")) cfg.ratio = from_file.ratio;
    if (!cmd->count("--flag")) cfg.flag = from_file.flag;
    if (!cmd->count("--lambda")) cfg.lambda = from_file.lambda;
    if (!cmd->count("--depth")) cfg.bottleneck_depth = from_file.bottleneck_depth;
    if (!cmd->count("--crop")) cfg.crop = from_file.crop;
    if (!cmd->count("--steps")) cfg.steps = from_file.steps;
    if (!cmd->count("--batch")) cfg.batch = from_file.batch;
    if (!cmd->count("--lr")) cfg.lr = from_file.lr;
    if (!cmd->count("--seed")) cfg.seed = from_file.seed;
    if (!cmd->count("--qf")) cfg.initial_qf = from_file.initial_qf;
    if (!cmd->count("--dataset")) cfg.dataset_dir = from_file.dataset_dir;
    if (!cmd->count("--out")) cfg.out_dir = from_file.out_dir;
    if (!cmd->count("--log-every")) cfg.log_every = from_file.log_every;
  }
  if (cfg.dataset_dir.empty()) throw std::runtime_error("--dataset is required");
  if (cfg.out_dir.empty()) throw std::runtime_error("--out is required");
  TrainResult result = train_model(cfg);
  const auto& last = result.log.back();
  std::cout << "steps=" << last.step << " L=" << last.loss << " L_D=" << last.distortion
            << " L_R=" << last.rate_term << " q=" << last.q << " qf=" << last.qf << "\n";
  std::cout << "post="
            << cfg.out_dir + "/" +
                   ModelBank::file_name(ModelKind::Post, cfg.flag, cfg.ratio.index)
            << "\n";
  if (result.pre)
    std::cout << "pre="
              << cfg.out_dir + "/" +
                     ModelBank::file_name(ModelKind::Pre, WrapperFlag::Pair,
                                          cfg.ratio.index)
              << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"standard-codec wrapper toolkit"};
  app.require_subcommand(1);

  // train ----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "optimize a wrapper configuration");
  std::string config_path, ratio_text = "1/2", flag_text = "post-only";
  TrainConfig tcfg;
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--ratio", ratio_text)->check(CLI::IsMember({"1", "1/1", "1/2", "2/3", "1/4"}));
  train->add_option("--flag", flag_text)->check(CLI::IsMember({"pair", "post-only"}));
  train->add_option("--lambda", tcfg.lambda);
  train->add_option("--depth", tcfg.bottleneck_depth)->check(CLI::IsMember({8, 10}));
  train->add_option("--crop", tcfg.crop);
  train->add_option("--steps", tcfg.steps);
  train->add_option("--batch", tcfg.batch);
  train->add_option("--lr", tcfg.lr);
  train->add_option("--seed", tcfg.seed);
  train->add_option("--qf", tcfg.initial_qf);
  train->add_option("--dataset", tcfg.dataset_dir, "directory of .ppm images");
  train->add_option("--out", tcfg.out_dir, "output directory for weights and log");
  train->add_option("--log-every", tcfg.log_every);

  // encode / evaluate -------------------------------------------------------
  auto* encode = app.add_subcommand("encode", "mode search and container output");
  SweepArgs enc_args;
  CodecFlags enc_codec;
  std::string out_prefix;
  enc_args.attach(encode, enc_codec);
  encode->add_option("--out", out_prefix, "container path prefix (one per ladder entry)");

  auto* evaluate = app.add_subcommand("evaluate", "R-D sweep without containers");
  SweepArgs eval_args;
  CodecFlags eval_codec;
  eval_args.attach(evaluate, eval_codec);

  // decode -------------------------------------------------------------------
  auto* decode = app.add_subcommand("decode", "reconstruct a container");
  std::string dec_input, dec_output, dec_model_dir;
  CodecFlags dec_codec;
  decode->add_option("--input", dec_input)->required();
  decode->add_option("--output", dec_output, "raw 4:2:0 output path")->required();
  decode->add_option("--model-dir", dec_model_dir)->envname("NWRAP_MODEL_DIR");
  dec_codec.attach(decode);

  // bdrate --------------------------------------------------------------------
  auto* bdrate_cmd = app.add_subcommand("bdrate", "rate difference between two R-D csv files");
  std::string bd_test, bd_anchor;
  bdrate_cmd->add_option("test_csv", bd_test)->required();
  bdrate_cmd->add_option("anchor_csv", bd_anchor)->required();

  // macs -----------------------------------------------------------------------
  auto* macs = app.add_subcommand("macs", "complexity report for a weight file");
  std::string macs_model;
  int macs_w = 1920, macs_h = 1080;
  macs->add_option("--model", macs_model)->required();
  macs->add_option("--width", macs_w);
  macs->add_option("--height", macs_h);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit");

  try {
    app.parse(argc, argv);

    if (*train) {
      tcfg.ratio = ratio_parse(ratio_text);
      tcfg.flag = flag_text == "pair" ? WrapperFlag::Pair : WrapperFlag::PostOnly;
      return cmd_train(config_path, tcfg, train);
    }
    if (*encode || *evaluate) {
      SweepArgs& args = *encode ? enc_args : eval_args;
      CodecFlags& codec = *encode ? enc_codec : eval_codec;
      auto [num, den] = parse_fps(args.fps);
      Sequence seq = read_yuv420(args.input, args.width, args.height, args.depth,
                                 args.frames);
      seq.fps_num = num;
      seq.fps_den = den;
      const auto ladder = parse_ladder(args.ladder_text);
      const auto modes = parse_modes(args.modes_text);
      CodecSpec spec = codec.spec(ladder);
      ModelBank bank =
          args.model_dir.empty() ? ModelBank() : ModelBank::load_dir(args.model_dir);
      EncodeResult result = encode_sequence(seq, spec, ladder, bank, modes, args.threads);
      args.emit_reports(result);
      if (*encode && !out_prefix.empty()) {
        for (const auto& sel : result.selections) {
          Container c = encode_to_container(seq, spec, bank, sel.chosen.mode, sel.chosen.qp);
          std::ostringstream name;
          name << out_prefix << ".qp" << sel.qp << ".nwc";
          c.write_file(name.str());
          std::cerr << "wrote " << name.str() << " mode=" << sel.chosen.mode.name()
                    << " qp=" << sel.chosen.qp << "\n";
        }
      }
      return 0;
    }
    if (*decode) {
      Container c = Container::read_file(dec_input);
      CodecSpec spec = dec_codec.spec();
      ModelBank bank =
          dec_model_dir.empty() ? ModelBank() : ModelBank::load_dir(dec_model_dir);
      Sequence out = decode_sequence(c, spec, bank);
      write_yuv420(out, dec_output);
      std::cout << "frames=" << out.frames.size() << " width=" << out.width()
                << " height=" << out.height() << " depth=" << out.bit_depth() << "\n";
      return 0;
    }
    if (*bdrate_cmd) {
      auto load_curve = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open " + path);
        const auto points = read_rd_csv(in);
        return pareto_frontier(points);
      };
      const double value = bd_rate(load_curve(bd_test), load_curve(bd_anchor));
      std::printf("%.2f%%\n", value);
      return 0;
    }
    if (*macs) {
      WrapperModel m = load_weights(macs_model);
      ModelCost cost = count_macs(m, macs_w, macs_h);
      std::printf("macs_per_pixel=%.2f\nparameters=%lld\n", cost.macs_per_pixel,
                  static_cast<long long>(cost.parameters));
      return 0;
    }
    if (*gradcheck) {
      bool all_pass = true;
      for (const auto& line : gradient_audit()) {
        std::printf("%s %-28s max_rel_err=%.3g tol=%.0e\n",
                    line.pass ? "PASS" : "FAIL", line.name.c_str(), line.max_rel_err,
                    line.tolerance);
        all_pass = all_pass && line.pass;
      }
      return all_pass ? 0 : 2;
    }
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
