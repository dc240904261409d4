#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "quadsci/baseline.hpp"
#include "quadsci/blocks.hpp"
#include "quadsci/cli.hpp"
#include "quadsci/cube_io.hpp"
#include "quadsci/network.hpp"
#include "quadsci/ops.hpp"
#include "quadsci/sci_forward.hpp"
#include "quadsci/ssm.hpp"
#include "quadsci/train.hpp"
#include "quadsci/weights.hpp"
#include "test_util.hpp"

namespace quadsci {
namespace {

using ad::Var;
using testing::random_cube;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double limit_s;
  std::function<Outcome()> check;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// ---- 1: selective scan vs dense recurrence ----

SsmParams random_params(std::size_t ch, std::size_t n, std::uint64_t seed) {
  SsmParams p = SsmParams::zeros(ch, n);
  rng::Stream s(seed);
  for (auto& v : p.a_log.values()) v = s.uniform(-2.0, 2.0);
  for (auto& v : p.w_delta.values()) v = 0.5 * s.normal();
  for (auto& v : p.b_delta.values()) v = s.uniform(-3.0, 0.5);
  for (auto& v : p.w_b.values()) v = 0.5 * s.normal();
  for (auto& v : p.w_c.values()) v = 0.5 * s.normal();
  return p;
}

Outcome ssm_oracle() {
  rng::Stream s(2024);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto len = static_cast<std::size_t>(s.integer(1, 64));
    const auto ch = static_cast<std::size_t>(s.integer(1, 8));
    const SsmParams p = random_params(ch, 16, s.next_u64());
    const VideoCube x = random_cube({len, ch}, s.next_u64(), -1.0, 1.0);
    for (auto dir : {ScanDirection::kForward, ScanDirection::kBackward}) {
      worst = std::max(worst, testing::max_abs_diff(selective_scan(x, p, dir), dense_oracle(x, p, dir)));
    }
  }
  return {worst <= 1e-12, "max |scan - oracle| " + fmt("%.3g", worst) + " over 100 instances x 2 directions"};
}

// ---- 2: zero-order hold ----

Outcome zoh() {
  double worst = 0.0;
  const auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  for (double b : {-2.0, 0.5, 1.0, 3.0}) {
    const Discretized d = discretize(-1.0, b, std::log(2.0));
    track(d.a_bar, 0.5);
    track(d.b_bar, 0.5 * b);
  }
  const double delta = 0.3, b = 2.0;
  // Limit branch: a_bar = exp(delta a), b_bar = delta b.
  for (double a : {0.0, -1e-9, 1e-9, -9.9e-9}) {
    const Discretized d = discretize(a, b, delta);
    track(d.a_bar, std::exp(delta * a));
    track(d.b_bar, delta * b);
  }
  // Generic branch close to the switch follows the same limit:
  // b_bar = delta b (1 + delta a / 2) + O(a^2).
  for (double a : {-1e-6, -1e-7, -2e-8, -1.01e-8}) {
    track(discretize(a, b, delta).b_bar, delta * b * (1.0 + 0.5 * delta * a));
  }
  return {worst <= 1e-12, "max deviation " + fmt("%.3g", worst)};
}

// ---- 3: gradient suite ----

struct GradProbe {
  std::string name;
  WeightMap point;
  std::function<Var(ParamBinder&)> body;
};

double probe_error(const GradProbe& g, GradCheckOptions options = {}) {
  auto proj = std::make_shared<VideoCube>();
  const ScalarFn fn = tape_objective([&g, proj](ParamBinder& p) {
    Var out = g.body(p);
    if (proj->size() == 0) *proj = random_cube(out.dims(), 977, -1.0, 1.0);
    return ad::weighted_sum(out, *proj);
  });
  return grad_check(fn, g.point, options).max_rel_error;
}

VideoCube dithered(VideoCube::Dims dims, std::uint64_t seed) {
  VideoCube c(std::move(dims));
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.01 * static_cast<double>(i);
  rng::Stream s(seed);
  for (std::size_t i = c.size(); i > 1; --i) std::swap(c[i - 1], c[s.next_u64() % i]);
  return c;
}

WeightMap perturbed_block(std::size_t in, std::size_t out, std::uint64_t seed) {
  BlockDims d;
  d.input_dim = in;
  d.output_dim = out;
  WeightMap w;
  init_block_weights(w, "", d, seed);
  std::uint64_t k = 0;
  for (auto& [key, v] : w) {
    const VideoCube noise = random_cube(v.dims(), seed * 1000 + ++k, -1.0, 1.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise[i];
  }
  return w;
}

WeightMap only(const WeightMap& w, const std::string& prefix) {
  WeightMap out;
  for (const auto& [k, v] : w)
    if (k.rfind(prefix, 0) == 0) out.emplace(k, v);
  return out;
}

std::vector<GradProbe> primitive_probes() {
  const WeightMap ab{{"a", random_cube({3, 4}, 1, -2, 2)}, {"b", random_cube({3, 4}, 2, -2, 2)}};
  const WeightMap x{{"x", random_cube({4, 5}, 3, -3, 3)}};
  WeightMap scan{{"x", random_cube({8, 2}, 1, -1, 1)},
                 {"a_log", random_cube({2, 4}, 2, -1, 1)},
                 {"w_delta", random_cube({2, 2}, 3, -0.5, 0.5)},
                 {"b_delta", random_cube({2}, 4, -1.0, 0.5)},
                 {"w_b", random_cube({4, 2}, 5, -1, 1)},
                 {"w_c", random_cube({4, 2}, 6, -1, 1)}};
  const auto scan_body = [](ScanDirection dir) {
    return [dir](ParamBinder& p) {
      return ad::selective_scan(p("x"), {p("a_log"), p("w_delta"), p("b_delta"), p("w_b"), p("w_c")},
                                dir);
    };
  };
  return {
      {"add", ab, [](ParamBinder& p) { return ad::add(p("a"), p("b")); }},
      {"mul", ab, [](ParamBinder& p) { return ad::mul(p("a"), p("b")); }},
      {"scale", {{"a", random_cube({3, 4}, 1)}, {"s", VideoCube({1}, 0.7)}},
       [](ParamBinder& p) { return ad::scale(p("a"), p("s")); }},
      {"mul_channels", {{"a", random_cube({2, 3, 2, 4}, 1)}, {"c", random_cube({4}, 2)}},
       [](ParamBinder& p) { return ad::mul_channels(p("a"), p("c")); }},
      {"silu", x, [](ParamBinder& p) { return ad::silu(p("x")); }},
      {"gelu", x, [](ParamBinder& p) { return ad::gelu(p("x")); }},
      {"sigmoid", x, [](ParamBinder& p) { return ad::sigmoid(p("x")); }},
      {"softplus", x, [](ParamBinder& p) { return ad::softplus(p("x")); }},
      {"mse", ab, [](ParamBinder& p) { return ad::mse(p("a"), p("b")); }},
      {"linear",
       {{"x", random_cube({2, 3, 5}, 1, -1, 1)},
        {"w", random_cube({4, 5}, 2, -1, 1)},
        {"b", random_cube({4}, 3, -1, 1)}},
       [](ParamBinder& p) { return ad::linear(p("x"), p("w"), p("b")); }},
      {"layer_norm",
       {{"x", random_cube({6, 5}, 1, -1, 1)},
        {"g", random_cube({5}, 2, 0.5, 1.5)},
        {"b", random_cube({5}, 3, -0.5, 0.5)}},
       [](ParamBinder& p) { return ad::layer_norm(p("x"), p("g"), p("b")); }},
      {"conv1d_causal",
       {{"x", random_cube({9, 3}, 1, -1, 1)},
        {"w", random_cube({3, 4}, 2, -1, 1)},
        {"b", random_cube({3}, 3, -1, 1)}},
       [](ParamBinder& p) { return ad::conv1d_causal(p("x"), p("w"), p("b")); }},
      {"conv3d_depthwise",
       {{"x", random_cube({3, 4, 5, 2}, 1, -1, 1)},
        {"w", random_cube({2, 27}, 2, -1, 1)},
        {"b", random_cube({2}, 3, -1, 1)}},
       [](ParamBinder& p) { return ad::conv3d_depthwise(p("x"), p("w"), p("b")); }},
      {"conv3d",
       {{"x", random_cube({2, 4, 3, 2}, 1, -1, 1)},
        {"w", random_cube({27, 2, 3}, 2, -1, 1)},
        {"b", random_cube({3}, 3, -1, 1)}},
       [](ParamBinder& p) { return ad::conv3d(p("x"), p("w"), p("b")); }},
      {"max_pool2", {{"x", dithered({2, 4, 6, 3}, 5)}},
       [](ParamBinder& p) { return ad::max_pool2(p("x")); }},
      {"upsample2", {{"x", random_cube({2, 2, 3, 2}, 1)}},
       [](ParamBinder& p) { return ad::upsample2(p("x")); }},
      {"global_avg_pool", {{"x", random_cube({2, 3, 2, 4}, 1)}},
       [](ParamBinder& p) { return ad::global_avg_pool(p("x")); }},
      {"permute", {{"x", random_cube({2, 3, 4, 5}, 1)}},
       [](ParamBinder& p) { return ad::permute(p("x"), {1, 2, 0, 3}); }},
      {"selective_scan fwd", scan, scan_body(ScanDirection::kForward)},
      {"selective_scan bwd", scan, scan_body(ScanDirection::kBackward)},
  };
}

std::vector<GradProbe> block_probes() {
  const VideoCube::Dims toy{2, 4, 4, 2};  // 4x4x2x2 clip, scan width 4
  WeightMap st = only(perturbed_block(2, 2, 11), "stmamba.");
  st["f"] = random_cube(toy, 12, -1, 1);
  WeightMap edr = only(perturbed_block(2, 2, 21), "edr.");
  edr["x"] = random_cube({32, 2}, 22, -1, 1);
  WeightMap ca = only(perturbed_block(4, 4, 31), "ca.");
  ca["f"] = random_cube({2, 4, 4, 4}, 32, -1, 1);
  WeightMap block = perturbed_block(2, 4, 42);
  block["f"] = random_cube(toy, 42, -1, 1);
  return {
      {"stmamba", st, [](ParamBinder& p) { return blocks::stmamba(p, "", p("f")); }},
      {"edr", edr, [](ParamBinder& p) { return blocks::edr(p, "", p("x"), 2, 4, 4); }},
      {"ca", ca, [](ParamBinder& p) { return blocks::ca(p, "", p("f")).out; }},
      {"residual_mamba_block", block,
       [](ParamBinder& p) { return blocks::residual_mamba_block(p, "", p("f")); }},
  };
}

double network_error() {
  const NetworkConfig c = NetworkConfig::for_variant(Variant::kT, 2, 8, 8);
  const Model m = build(c, 1);
  const VideoCube x = random_cube({8, 8, 1, 2}, 7);
  VideoCube y = forward(m, x);
  const VideoCube offset = random_cube(y.dims(), 9, -0.05, 0.05);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += offset[i];
  const ScalarFn fn = tape_objective([&](ParamBinder& p) {
    return ad::mse(forward(p, c, p.tape().constant(x)), p.tape().constant(y));
  });
  GradCheckOptions o;
  o.coords_per_group = 32;
  o.group_of = weight_module;
  return grad_check(fn, m.weights, o).max_rel_error;
}

Outcome gradient_suite() {
  double worst = 0.0;
  std::string worst_name;
  std::vector<GradProbe> probes = primitive_probes();
  for (auto& b : block_probes()) probes.push_back(std::move(b));
  for (const GradProbe& g : probes) {
    const double e = probe_error(g);
    if (e >= worst) {
      worst = e;
      worst_name = g.name;
    }
  }
  const double net = network_error();
  if (net >= worst) {
    worst = net;
    worst_name = "network";
  }
  return {worst <= 1e-4, std::to_string(probes.size()) + " probes + network, max rel err " +
                             fmt("%.3g", worst) + " (" + worst_name + ")"};
}

// ---- 4: sensing identities ----

Outcome sensing() {
  rng::Stream s(77);
  bool ok = true;
  int instances = 0;
  for (int k = 0; k < 200; ++k) {
    const auto h = static_cast<std::size_t>(s.integer(1, 8));
    const auto w = static_cast<std::size_t>(s.integer(1, 8));
    const auto t = static_cast<std::size_t>(s.integer(1, 4));
    const VideoCube raw = random_cube({h, w, 1, t}, s.next_u64());
    const MaskSet masks = gen_masks(h, w, t, s.next_u64());
    const Measurement m = encode(raw, masks, 0.0, 0);
    ok &= m.y.values() == apply_phi(masks, vectorize(raw));
    // Phi Phi^T is diagonal with entries sum_t M_t^2.
    for (std::size_t i = 0; i < h * w; ++i) {
      std::vector<double> e(h * w, 0.0);
      e[i] = 1.0;
      const std::vector<double> col = apply_phi(masks, apply_phi_transpose(masks, e));
      for (std::size_t j = 0; j < h * w; ++j) ok &= col[j] == (i == j ? masks.sum_sq_t[i] : 0.0);
    }
    ++instances;
  }
  for (CfaPattern p : {CfaPattern::bayer(), CfaPattern::quad()}) {
    const CfaMasks cm = cfa_masks(p, 8, 8);
    for (std::size_t i = 0; i < 64; ++i) ok &= cm.r[i] + cm.g[i] + cm.b[i] == 1.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const VideoCube plane = random_cube({8, 8}, seed);
      ok &= assemble_sub_measurements(split_sub_measurements(plane, p), p) == plane;
    }
  }
  return {ok, std::to_string(instances) + " encode/Gram instances, partition and split round-trips " +
                  (ok ? "exact" : "MISMATCH")};
}

// ---- 5: quad-Bayer site classes ----

Outcome quad_sites() {
  const VideoCube s = expand_cfa(VideoCube({4, 4, 1, 1}, 1.0), CfaPattern::quad());
  bool ok = true;
  std::string map;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const int want = i < 2 && j < 2 ? 0 : (i >= 2 && j >= 2 ? 2 : 1);
      for (int c = 0; c < 3; ++c) ok &= s.at(i, j, static_cast<std::size_t>(c), 0) == (c == want ? 1.0 : 0.0);
      map += "RGB"[want];
    }
    if (i < 3) map += '/';
  }
  return {ok, "4x4 sites " + map};
}

// ---- 6: complexity accounting ----

Outcome complexity() {
  bool ok = attention_complexity(8, 8, 2, 4, 16) == 327680;
  ok &= attention_complexity(8, 8, 4, 4, 16) == 2 * attention_complexity(8, 8, 2, 4, 16);
  for (Variant v : {Variant::kT, Variant::kS, Variant::kB}) {
    const NetworkConfig c = NetworkConfig::for_variant(v, 2, 16, 16);
    for (std::size_t t : {1u, 2u, 4u}) ok &= count_flops(c, 16, 16, 2 * t).scan == 2 * count_flops(c, 16, 16, t).scan;
  }
  return {ok, "attention_complexity(8,8,2,4,16) = " + std::to_string(attention_complexity(8, 8, 2, 4, 16))};
}

// ---- 7: variant parameter ratios ----

Outcome variant_ratios() {
  const auto params = [](Variant v) {
    return static_cast<double>(count_params(NetworkConfig::for_variant(v, 4, 32, 32)));
  };
  const double t = params(Variant::kT), s = params(Variant::kS), b = params(Variant::kB);
  const double bs = b / s, st = s / t;
  const bool ok = std::abs(bs - 2.474) <= 0.1 * 2.474 && std::abs(st - 1.534) <= 0.1 * 1.534;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "params T %.0f S %.0f B %.0f, B/S %.3f, S/T %.3f", t, s, b, bs, st);
  return {ok, buf};
}

// ---- 8: zero-weight residual identity ----

Outcome zero_identity() {
  bool ok = true;
  for (std::size_t c : {4u, 8u, 16u}) {
    BlockDims d;
    d.input_dim = d.output_dim = c;
    WeightMap w;
    zero_block_weights(w, "", d, true, 1.0);
    const VideoCube f = random_cube({2, 8, 8, c}, c, -2, 2);
    ok &= residual_mamba_block(f, w) == f;
  }
  return {ok, ok ? "output == input bitwise at C = 4, 8, 16" : "output differs from input"};
}

// ---- 9: toy learning ----

Outcome toy_learning() {
  const NetworkConfig cfg = NetworkConfig::for_variant(Variant::kT, 4, 32, 32);
  const ToyDataSpec data;  // 32x32x3x4 clips, quad-Bayer, 4 frames per snapshot
  const TrainResult r = train_toy(cfg, data, 1);
  TrainSchedule prefix;
  prefix.iterations = {20, 0, 0};
  const TrainResult p = train_toy(cfg, data, 1, prefix);
  const bool same = std::equal(p.loss.begin(), p.loss.end(), r.loss.begin());
  const double ratio = r.final_smoothed / r.initial_smoothed;
  const double gain = r.holdout.model_psnr - r.holdout.baseline_psnr;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%zu steps, smoothed loss %.4f -> %.4f (x%.3f), holdout %.2f dB vs init %.2f dB "
                "(+%.2f), rerun %s",
                r.loss.size(), r.initial_smoothed, r.final_smoothed, ratio, r.holdout.model_psnr,
                r.holdout.baseline_psnr, gain, same ? "bitwise identical" : "DIFFERS");
  return {ratio <= 0.5 && gain >= 3.0 && same, buf};
}

// ---- 10: baseline sanity ----

Outcome baseline_sanity() {
  bool ok = true;
  GapConfig cfg;
  cfg.iterations = 10;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const VideoCube raw = random_cube({8, 8, 1, 2}, seed);
    const MaskSet masks = gen_masks(8, 8, 2, seed + 500);
    const Measurement meas = encode(raw, masks, 0.0, 0);
    const VideoCube wild = random_cube({8, 8, 1, 2}, seed + 900, -3, 3);
    for (const VideoCube* start : {static_cast<const VideoCube*>(nullptr), &wild}) {
      std::vector<double> res;
      gap_tv(meas, masks, cfg, &res, start);
      for (std::size_t k = 1; k < res.size(); ++k) ok &= res[k] <= res[k - 1];
    }
  }
  const VideoCube raw = random_cube({8, 8, 1, 1}, 3);
  const MaskSet full = MaskSet::from_cube(VideoCube({8, 8, 1, 1}, 1.0));
  GapConfig one;
  one.iterations = 1;
  std::vector<double> res;
  const bool exact = gap_tv(encode(raw, full, 0.0, 0), full, one, &res) == raw && res.back() == 0.0;
  return {ok && exact, std::string("residual non-increasing on 100 runs: ") + (ok ? "yes" : "NO") +
                           ", T = 1 full mask exact: " + (exact ? "yes" : "NO")};
}

// ---- 11: format round-trips ----

Outcome round_trips() {
  const fs::path dir = fs::temp_directory_path() / "quadsci_acceptance";
  fs::create_directories(dir);
  bool ok = true;
  const VideoCube cube = random_cube({16, 16, 3, 4}, 5);
  for (CubeDtype dt : {CubeDtype::kFloat64, CubeDtype::kFloat32}) {
    save_cube(cube, dir / "a.vcube", dt);
    save_cube(load_cube(dir / "a.vcube"), dir / "b.vcube", dt);
    ok &= read_file_bytes(dir / "a.vcube") == read_file_bytes(dir / "b.vcube");
  }
  const Model m = build(NetworkConfig::for_variant(Variant::kT, 2, 8, 8), 3);
  save_weights(m, dir / "a.vwts");
  save_weights(load_weights(dir / "a.vwts", m.config), dir / "b.vwts");
  ok &= read_file_bytes(dir / "a.vwts") == read_file_bytes(dir / "b.vwts");

  save_cube(cube, dir / "a.vcube");
  std::ostringstream out, err;
  const int code = cli::run({"metrics", "--ref", (dir / "a.vcube").string(), "--test",
                             (dir / "a.vcube").string()},
                            out, err);
  ok &= code == 0 && out.str() == "PSNR 100.00 dB\nSSIM 1.0000\n";
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  fs::remove_all(dir);
  std::string report = out.str();
  for (auto& ch : report)
    if (ch == '\n') ch = ' ';
  return {ok, "VCUBE f64/f32 and VWTS byte-identical; metrics: " + report};
}

}  // namespace
}  // namespace quadsci

int main(int argc, char** argv) {
  using namespace quadsci;
  const std::vector<Criterion> all{
      {1, "selective scan matches dense recurrence", 10, ssm_oracle},
      {2, "zero-order hold discretization", 1, zoh},
      {3, "finite-difference gradient suite", 300, gradient_suite},
      {4, "sensing model identities", 10, sensing},
      {5, "quad-Bayer site classes", 1, quad_sites},
      {6, "complexity accounting", 1, complexity},
      {7, "variant parameter ratios", 30, variant_ratios},
      {8, "zero-weight residual identity", 1, zero_identity},
      {9, "toy end-to-end learning", 1800, toy_learning},
      {10, "GAP-TV baseline sanity", 10, baseline_sanity},
      {11, "format round-trips", 5, round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %2d %s: %s [%.2f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.title,
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : ", TOO SLOW");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
