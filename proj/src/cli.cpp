#include "quadsci/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "quadsci/baseline.hpp"
#include "quadsci/cube_io.hpp"
#include "quadsci/error.hpp"
#include "quadsci/metrics.hpp"
#include "quadsci/network.hpp"
#include "quadsci/parallel.hpp"
#include "quadsci/sci_forward.hpp"
#include "quadsci/train.hpp"

namespace quadsci {

using nlohmann::json;

std::string RunManifest::to_line() const {
  json j;
  j["command"] = command;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["version"] = version;
  j["duration_s"] = duration_s;
  j["exit_code"] = exit_code;
  return j.dump();
}

RunManifest RunManifest::parse(const std::string& line) {
  try {
    const json j = json::parse(line);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.duration_s = j.at("duration_s").get<double>();
    m.exit_code = j.at("exit_code").get<int>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("not a run manifest: ") + e.what());
  }
}

namespace cli {
namespace {

struct Options {
  std::string manifest;

  std::size_t h = 0, w = 0, t = 0;
  std::uint64_t seed = 0;
  std::string out, video, mask, meas, weights, raw, ref, test, dump_frames;
  std::string pattern = "quad";
  std::string variant = "t";
  std::string iters = "200,50,50";
  std::string out_weights, out_curve;
  double noise_sigma = 0.0;
  std::size_t gap_iters = 50;
  double tv_weight = 0.0;
};

// Rethrows the active library error with `context` prepended, keeping its
// category so the exit code is unchanged.
[[noreturn]] void rethrow_with(const std::string& context) {
  try {
    throw;
  } catch (const DegenerateSensingError& e) {
    throw DegenerateSensingError(context + e.what());
  } catch (const CompletenessError& e) {
    throw CompletenessError(context + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(context + e.what());
  } catch (const TruncationError& e) {
    throw TruncationError(context + e.what());
  } catch (const FormatError& e) {
    throw FormatError(context + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + e.what());
  } catch (const NumericError& e) {
    throw NumericError(context + e.what());
  } catch (const Error& e) {
    throw DataError(context + e.what());
  }
}

VideoCube load_flag(const std::string& flag, const std::string& path) {
  try {
    return load_cube(path);
  } catch (const Error&) {
    rethrow_with("--" + flag + " " + path + ": ");
  }
}

void save_flag(const VideoCube& cube, const std::string& flag, const std::string& path) {
  try {
    save_cube(cube, path);
  } catch (const Error&) {
    rethrow_with("--" + flag + " " + path + ": ");
  }
}

MaskSet load_masks(const std::string& path) {
  VideoCube m = load_flag("mask", path);
  if (m.rank() == 3) m.reshape({m.dim(0), m.dim(1), 1, m.dim(2)});
  if (m.rank() != 4 || m.dim(2) != 1) {
    throw ShapeError("--mask " + path + ": expected H x W x 1 x T, got " +
                     dims_to_string(m.dims()));
  }
  try {
    return MaskSet::from_cube(std::move(m));
  } catch (const Error&) {
    rethrow_with("--mask " + path + ": ");
  }
}

Measurement load_measurement(const std::string& path, const MaskSet& masks) {
  const VideoCube y = load_flag("meas", path);
  if (product(y.dims()) != masks.height() * masks.width() ||
      y.dim(0) != masks.height()) {
    throw ShapeError("--meas " + path + " has dims " + dims_to_string(y.dims()) +
                     ", masks are " + dims_to_string(masks.masks.dims()));
  }
  return measurement_from_cube(y, masks.frames());
}

void dump_frames(const VideoCube& cube, const std::string& dir) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < cube.dim(3); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.ppm", t);
    write_ppm_frame(cube, t, std::filesystem::path(dir) / name);
  }
}

std::array<std::size_t, 3> parse_iters(const std::string& text) {
  std::array<std::size_t, 3> it{0, 0, 0};
  std::stringstream ss(text);
  std::string part;
  std::size_t n = 0;
  while (std::getline(ss, part, ',')) {
    if (n == 3) throw ConfigError("--iters takes at most three counts");
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      it[n++] = static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      throw ConfigError("--iters: '" + part + "' is not a count");
    }
  }
  if (n == 0) throw ConfigError("--iters is empty");
  return it;
}

struct Context {
  Options& o;
  RunManifest& m;
  std::ostream& out;
};

void cmd_genmask(Context& c) {
  const MaskSet masks = gen_masks(c.o.h, c.o.w, c.o.t, c.o.seed);
  save_flag(masks.masks, "out", c.o.out);
  c.m.outputs["out"] = c.o.out;
  c.out << "masks " << dims_to_string(masks.masks.dims()) << " -> " << c.o.out << "\n";
}

void cmd_encode(Context& c) {
  const VideoCube video = load_flag("video", c.o.video);
  const MaskSet masks = load_masks(c.o.mask);
  c.m.inputs = {{"video", c.o.video}, {"mask", c.o.mask}};
  if (video.rank() != 4 || (video.dim(2) != 1 && video.dim(2) != 3) ||
      video.dim(0) != masks.height() || video.dim(1) != masks.width() ||
      video.dim(3) != masks.frames()) {
    throw ShapeError("--video dims " + dims_to_string(video.dims()) +
                     " do not match --mask dims " + dims_to_string(masks.masks.dims()));
  }
  const CfaPattern pattern = CfaPattern::parse(c.o.pattern);
  const VideoCube raw = video.dim(2) == 3 ? mosaic(video, pattern) : video;
  const Measurement meas = encode(raw, masks, c.o.noise_sigma, c.o.seed);
  save_flag(meas.y, "out", c.o.out);
  c.m.outputs["out"] = c.o.out;
  c.out << "measurement " << dims_to_string(meas.y.dims()) << " (B = " << meas.compression_ratio
        << ") -> " << c.o.out << "\n";
}

void cmd_init(Context& c) {
  const MaskSet masks = load_masks(c.o.mask);
  const Measurement meas = load_measurement(c.o.meas, masks);
  c.m.inputs = {{"meas", c.o.meas}, {"mask", c.o.mask}};
  const VideoCube x = initialize(meas, masks);
  save_flag(x, "out", c.o.out);
  c.m.outputs["out"] = c.o.out;
  c.out << "init " << dims_to_string(x.dims()) << " -> " << c.o.out << "\n";
}

void cmd_reconstruct(Context& c) {
  const MaskSet masks = load_masks(c.o.mask);
  const Measurement meas = load_measurement(c.o.meas, masks);
  c.m.inputs = {{"meas", c.o.meas}, {"mask", c.o.mask}, {"weights", c.o.weights}};
  const NetworkConfig cfg = NetworkConfig::for_variant(parse_variant(c.o.variant), masks.frames(),
                                                       masks.height(), masks.width());
  Model model;
  try {
    model = load_weights(c.o.weights, cfg);
  } catch (const Error&) {
    rethrow_with("--weights " + c.o.weights + ": ");
  }
  const VideoCube rgb = forward(model, initialize(meas, masks));
  save_flag(rgb, "out", c.o.out);
  dump_frames(rgb, c.o.dump_frames);
  c.m.outputs["out"] = c.o.out;
  if (!c.o.dump_frames.empty()) c.m.outputs["dump_frames"] = c.o.dump_frames;
  c.out << "reconstruction " << dims_to_string(rgb.dims()) << " -> " << c.o.out << "\n";
}

void cmd_baseline(Context& c) {
  const MaskSet masks = load_masks(c.o.mask);
  const Measurement meas = load_measurement(c.o.meas, masks);
  c.m.inputs = {{"meas", c.o.meas}, {"mask", c.o.mask}};
  GapConfig cfg;
  cfg.iterations = c.o.gap_iters;
  cfg.tv_weight = c.o.tv_weight;
  std::vector<double> residuals;
  const VideoCube raw = gap_tv(meas, masks, cfg, &residuals);
  save_flag(raw, "out", c.o.out);
  dump_frames(raw, c.o.dump_frames);
  c.m.outputs["out"] = c.o.out;
  if (!c.o.dump_frames.empty()) c.m.outputs["dump_frames"] = c.o.dump_frames;
  char line[96];
  std::snprintf(line, sizeof(line), "GAP-TV-like residual %.6e -> %.6e\n", residuals.front(),
                residuals.back());
  c.out << line << "raw " << dims_to_string(raw.dims()) << " -> " << c.o.out << "\n";
}

void cmd_demosaic(Context& c) {
  VideoCube raw = load_flag("raw", c.o.raw);
  if (raw.rank() == 3) raw.reshape({raw.dim(0), raw.dim(1), 1, raw.dim(2)});
  c.m.inputs = {{"raw", c.o.raw}};
  const CfaPattern pattern = CfaPattern::parse(c.o.pattern);
  const VideoCube rgb = demosaic_bilinear(expand_cfa(raw, pattern), pattern);
  save_flag(rgb, "out", c.o.out);
  c.m.outputs["out"] = c.o.out;
  c.out << "demosaic " << dims_to_string(rgb.dims()) << " -> " << c.o.out << "\n";
}

void cmd_train(Context& c) {
  ToyDataSpec data;
  data.height = c.o.h;
  data.width = c.o.w;
  data.frames = c.o.t;
  TrainSchedule schedule;
  schedule.iterations = parse_iters(c.o.iters);
  const NetworkConfig cfg =
      NetworkConfig::for_variant(parse_variant(c.o.variant), c.o.t, c.o.h, c.o.w);
  const TrainResult r = train_toy(cfg, data, c.o.seed, schedule);
  save_weights(r.model, c.o.out_weights);
  write_loss_csv(c.o.out_curve, r);
  c.m.outputs = {{"out_weights", c.o.out_weights}, {"out_curve", c.o.out_curve}};
  char line[160];
  std::snprintf(line, sizeof(line),
                "steps %zu  smoothed loss %.6f -> %.6f\nholdout PSNR %.2f dB (init %.2f dB)\n",
                r.loss.size(), r.initial_smoothed, r.final_smoothed, r.holdout.model_psnr,
                r.holdout.baseline_psnr);
  c.out << line;
}

void cmd_bench(Context& c) {
  const NetworkConfig cfg =
      NetworkConfig::for_variant(parse_variant(c.o.variant), c.o.t, c.o.h, c.o.w);
  const FlopCount f = count_flops(cfg, c.o.h, c.o.w, c.o.t);
  c.out << "variant " << variant_letter(cfg.variant) << "  C " << cfg.base_channels << "  input "
        << c.o.h << "x" << c.o.w << "x" << c.o.t << "\n"
        << "params " << count_params(cfg) << "\n"
        << "flops " << f.total() << " (scan " << f.scan << ", other " << f.other << ")\n"
        << "attention_complexity "
        << attention_complexity(c.o.h, c.o.w, c.o.t, cfg.base_channels, cfg.d_state) << "\n";
}

void cmd_metrics(Context& c) {
  const VideoCube ref = load_flag("ref", c.o.ref);
  const VideoCube test = load_flag("test", c.o.test);
  c.m.inputs = {{"ref", c.o.ref}, {"test", c.o.test}};
  if (ref.dims() != test.dims()) {
    throw ShapeError("--ref dims " + dims_to_string(ref.dims()) + " differ from --test dims " +
                     dims_to_string(test.dims()));
  }
  const QualityReport q = quality_report(ref, test);
  char line[64];
  std::snprintf(line, sizeof(line), "PSNR %.2f dB\nSSIM %.4f\n", q.psnr_db, q.ssim);
  c.out << line;
}

int exit_code_for(const std::exception_ptr& ep, std::ostream& err) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

std::map<std::string, std::string> resolved_options(const CLI::App* sub) {
  std::map<std::string, std::string> cfg;
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help") continue;
    if (opt->count() > 0) {
      std::string v;
      for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
      cfg[name] = v;
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  apply_thread_env();

  Options o;
  CLI::App app{"Quad-Bayer snapshot compressive imaging toolkit", "quadsci"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--manifest", o.manifest, "Append the run manifest line to FILE")
      ->option_text("FILE");

  auto dims = [&](CLI::App* s) {
    s->set_help_flag("--help", "Print this help message and exit");
    s->add_option("--h", o.h, "Height")->required()->check(CLI::PositiveNumber);
    s->add_option("--w", o.w, "Width")->required()->check(CLI::PositiveNumber);
    s->add_option("--t", o.t, "Frames")->required()->check(CLI::PositiveNumber);
  };
  auto pattern = [&](CLI::App* s, bool required) {
    auto* opt = s->add_option("--pattern", o.pattern, "CFA pattern")
                    ->check(CLI::IsMember({"bayer", "quad"}))
                    ->capture_default_str();
    if (required) opt->required();
  };
  auto variant = [&](CLI::App* s) {
    s->add_option("--variant", o.variant, "Network variant")
        ->check(CLI::IsMember({"t", "s", "b"}, CLI::ignore_case))
        ->capture_default_str();
  };

  auto* genmask = app.add_subcommand("genmask", "Generate random binary masks");
  dims(genmask);
  genmask->add_option("--seed", o.seed, "Seed")->required();
  genmask->add_option("--out", o.out, "Output VCUBE")->required();

  auto* enc = app.add_subcommand("encode", "Mosaic and compress a video into one snapshot");
  enc->add_option("--video", o.video, "H x W x 3 x T (or raw H x W x 1 x T) VCUBE")->required();
  enc->add_option("--mask", o.mask, "Mask VCUBE")->required();
  pattern(enc, false);
  enc->add_option("--noise-sigma", o.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  enc->add_option("--seed", o.seed, "Noise seed")->required();
  enc->add_option("--out", o.out, "Output measurement VCUBE")->required();

  auto* init = app.add_subcommand("init", "Normalized back-projection of a measurement");
  init->add_option("--meas", o.meas, "Measurement VCUBE")->required();
  init->add_option("--mask", o.mask, "Mask VCUBE")->required();
  init->add_option("--out", o.out, "Output raw VCUBE")->required();

  auto* rec = app.add_subcommand("reconstruct", "Network reconstruction to RGB video");
  rec->add_option("--meas", o.meas, "Measurement VCUBE")->required();
  rec->add_option("--mask", o.mask, "Mask VCUBE")->required();
  rec->add_option("--weights", o.weights, "VWTS weights")->required();
  variant(rec);
  rec->add_option("--out", o.out, "Output RGB VCUBE")->required();
  rec->add_option("--dump-frames", o.dump_frames, "Write PPM frames to DIR")->option_text("DIR");

  auto* base = app.add_subcommand("baseline", "GAP-TV-like iterative reconstruction");
  base->add_option("--meas", o.meas, "Measurement VCUBE")->required();
  base->add_option("--mask", o.mask, "Mask VCUBE")->required();
  base->add_option("--iters", o.gap_iters, "Iterations")->capture_default_str()->check(
      CLI::PositiveNumber);
  base->add_option("--tv-weight", o.tv_weight, "TV weight")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  base->add_option("--out", o.out, "Output raw VCUBE")->required();
  base->add_option("--dump-frames", o.dump_frames, "Write PPM frames to DIR")->option_text("DIR");

  auto* dem = app.add_subcommand("demosaic", "Bilinear demosaic of a raw video");
  dem->add_option("--raw", o.raw, "Raw H x W x 1 x T VCUBE")->required();
  pattern(dem, false);
  dem->add_option("--out", o.out, "Output RGB VCUBE")->required();

  auto* train = app.add_subcommand("train-toy", "Train on synthetic moving squares");
  variant(train);
  dims(train);
  train->add_option("--iters", o.iters, "Stage iteration counts, e.g. 200,50,50")
      ->capture_default_str();
  train->add_option("--seed", o.seed, "Seed")->required();
  train->add_option("--out-weights", o.out_weights, "Output VWTS")->required();
  train->add_option("--out-curve", o.out_curve, "Output CSV")->required();

  auto* bench = app.add_subcommand("bench", "Parameter and FLOP accounting");
  variant(bench);
  dims(bench);

  auto* metrics = app.add_subcommand("metrics", "PSNR and SSIM between two videos");
  metrics->add_option("--ref", o.ref, "Reference VCUBE")->required();
  metrics->add_option("--test", o.test, "Test VCUBE")->required();

  RunManifest manifest;
  int code = kExitOk;
  CLI::App* chosen = nullptr;
  try {
    std::vector<const char*> argv{"quadsci"};
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
    chosen = app.get_subcommands().front();
  } catch (const CLI::ParseError& e) {
    code = app.exit(e, out, err);
    if (code != 0) code = kExitUsage;
    manifest.command = args.empty() ? "" : args.front();
  }

  if (chosen != nullptr) {
    manifest.command = chosen->get_name();
    manifest.config = resolved_options(chosen);
    if (chosen->get_option_no_throw("--seed") != nullptr) manifest.seed = o.seed;
    Context ctx{o, manifest, out};
    try {
      const std::string& name = manifest.command;
      if (name == "genmask") cmd_genmask(ctx);
      else if (name == "encode") cmd_encode(ctx);
      else if (name == "init") cmd_init(ctx);
      else if (name == "reconstruct") cmd_reconstruct(ctx);
      else if (name == "baseline") cmd_baseline(ctx);
      else if (name == "demosaic") cmd_demosaic(ctx);
      else if (name == "train-toy") cmd_train(ctx);
      else if (name == "bench") cmd_bench(ctx);
      else if (name == "metrics") cmd_metrics(ctx);
    } catch (...) {
      code = exit_code_for(std::current_exception(), err);
    }
  }

  manifest.exit_code = code;
  manifest.duration_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (o.manifest.empty()) {
    err << manifest.to_line() << "\n";
  } else {
    std::ofstream f(o.manifest, std::ios::app);
    f << manifest.to_line() << "\n";
    if (!f) {
      err << "error: cannot write --manifest " << o.manifest << "\n";
      if (code == kExitOk) code = kExitData;
    }
  }
  return code;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cli
}  // namespace quadsci
