// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. `acceptance 3 7` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "../support/pixel_sds.hpp"
#include "ig3d/checkpoint.hpp"
#include "ig3d/diffusion.hpp"
#include "ig3d/instruct.hpp"
#include "ig3d/metrics.hpp"
#include "ig3d/render.hpp"
#include "ig3d/scenes.hpp"
#include "ig3d/sds.hpp"

using namespace ig3d;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const BBox kUnitBox{Vec3::Constant(-0.5), Vec3::Constant(0.5)};

// ---------------------------------------------------------------------------
// 1. Rendering gradients.

Outcome render_gradients() {
  std::mt19937_64 rng(101);
  VoxelGrid g({8, 8, 8}, kUnitBox);
  std::uniform_real_distribution<double> dens(-2.0, 4.0);
  std::normal_distribution<double> col(0.0, 1.5);
  for (double& v : g.density()) v = dens(rng);
  for (double& v : g.color()) v = col(rng);

  RenderParams p;
  p.background = {0.3, 0.9, 0.5};
  Camera cam;
  cam.width = 16;
  cam.height = 16;
  cam.fov_x = 0.8;
  cam.cam_to_world = look_at(Vec3(1.7, -1.1, 0.8), Vec3::Zero());
  const RenderOutput out = render_image(g, cam, p);
  Tensor w(3, 16, 16);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : w.data) v = n(rng);
  const GridGrad grad = render_backward(out, w);
  auto loss = [&](const VoxelGrid& grid) {
    const RenderOutput o = render_image(grid, cam, p);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w.data[i] * o.rgb.data[i];
    return s;
  };

  const double h = 1e-4;
  std::uniform_int_distribution<std::size_t> pick(0, g.vertex_count() - 1);
  double worst = 0.0;
  int nonzero = 0;
  for (int cell = 0; cell < 64; ++cell) {
    const std::size_t v = pick(rng);
    for (int field = 0; field < 4; ++field) {
      VoxelGrid plus = g;
      VoxelGrid minus = g;
      (field == 0 ? plus.density()[v] : plus.color()[3 * v + field - 1]) += h;
      (field == 0 ? minus.density()[v] : minus.color()[3 * v + field - 1]) -= h;
      const double fd = (loss(plus) - loss(minus)) / (2 * h);
      const double an = field == 0 ? grad.density[v] : grad.color[3 * v + field - 1];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
      nonzero += an != 0.0;
    }
  }
  return {worst <= 1e-3, fmt("max rel err %.2e over 64 cells x 4 values, %d non-zero", worst, nonzero)};
}

// ---------------------------------------------------------------------------
// 2. Constant-slab opacity.

Outcome slab_opacity() {
  RenderParams p;
  Ray ray;
  ray.origin = Vec3(-1.5, 0.1, 0.2);
  ray.direction = Vec3::UnitX();
  clip_to_box(ray, kUnitBox);
  const double length = ray.t_far - ray.t_near;
  double worst = 0.0;
  for (double sigma : {0.5, 2.0, 6.0}) {
    const VoxelGrid g = create_grid({5, 5, 5}, kUnitBox, inverse_softplus(sigma) - p.density_bias, {0, 0, 0});
    p.step_size = length / 1000.0;
    worst = std::max(worst, std::abs(render_ray(g, ray, p).opacity - (1.0 - std::exp(-sigma * length))));
  }
  // With a step that does not divide L the truncated remainder gives a
  // first-order error; halving the step halves it.
  const double sigma = 2.0;
  const VoxelGrid g = create_grid({5, 5, 5}, kUnitBox, inverse_softplus(sigma) - p.density_bias, {0, 0, 0});
  const double exact = 1.0 - std::exp(-sigma * length);
  p.step_size = length / (50.0 + 1.0 / 3.0);
  const double e1 = std::abs(render_ray(g, ray, p).opacity - exact);
  p.step_size *= 0.5;
  const double e2 = std::abs(render_ray(g, ray, p).opacity - exact);
  const double ratio = e1 / e2;
  return {worst <= 1e-6 && std::abs(ratio - 2.0) <= 0.1,
          fmt("max |err| %.1e at L/1000, error ratio on halving %.3f", worst, ratio)};
}

// ---------------------------------------------------------------------------
// 3. Forward-noising statistics.

Outcome noising_statistics() {
  const NoiseSchedule s = default_schedule();
  std::mt19937_64 rng(303);
  std::normal_distribution<double> n(0.0, 1.0);
  std::string detail;
  bool pass = true;
  for (int t : {50, 400, 950}) {
    Tensor eps(1, 1, 100000);
    for (double& e : eps.data) e = n(rng);
    const Tensor xt = add_noise(Tensor(1, 1, 100000, 0.0), eps, t, s);
    double mean = 0.0;
    for (double v : xt.data) mean += v;
    mean /= static_cast<double>(xt.size());
    double var = 0.0;
    for (double v : xt.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(xt.size() - 1);
    const double rel = std::abs(var / (1.0 - s.alpha_bar(t)) - 1.0);
    pass = pass && rel <= 0.02;
    detail += fmt("t=%d rel %.4f  ", t, rel);
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 4. Guidance identities.

Outcome guidance_identities() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rand = [&] {
    Tensor t(3, 6, 6);
    for (double& v : t.data) v = n(rng);
    return t;
  };
  const Tensor a = rand(), b = rand(), c = rand();
  double single = std::max(testing::max_abs_diff(cfg_single(a, b, 0.0), a),
                           testing::max_abs_diff(cfg_single(a, b, 1.0), b));
  double dual = std::max(testing::max_abs_diff(cfg_dual(a, b, c, {1.0, 1.0}), c),
                         testing::max_abs_diff(cfg_dual(a, b, c, {1.0, 0.0}), b));

  const NoiseSchedule s = default_schedule();
  GaussianProvider p(instruction_mean_fn(), 0.1, s);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor src(3, 6, 6);
  for (double& v : src.data) v = u(rng);
  const std::optional<std::string> ins = "make it red";
  double composed = 0.0;
  for (const GuidanceWeights& w : {GuidanceWeights{5.0, 100.0}, GuidanceWeights{1.5, 7.5}}) {
    const Tensor mu = testing::composed_mean(p, src, ins, src, w);
    GaussianProvider direct([mu](const auto&, const auto&, int, int) { return mu; }, 0.1, s);
    for (int t : {1, 100, 700}) {
      const Tensor xt = rand();
      composed = std::max(composed, testing::max_abs_diff(guided_epsilon(p, xt, t, ins, src, w),
                                                          direct.predict({xt, t, std::nullopt, std::nullopt})));
    }
  }
  return {single <= 1e-12 && dual <= 1e-12 && composed <= 1e-10,
          fmt("cfg_single %.1e, cfg_dual %.1e, composed mean %.1e", single, dual, composed)};
}

// ---------------------------------------------------------------------------
// 5. SDS expectation.

Outcome sds_expectation() {
  const NoiseSchedule s = default_schedule();
  const double sigma = 0.1;
  GaussianProvider p(instruction_mean_fn(), sigma, s);
  const GuidanceWeights w{5.0, 100.0};
  Tensor src(3, 1, 1);
  src.data = {0.2, 0.5, 0.7};
  const std::optional<std::string> ins = "make it red";
  const Tensor x(3, 1, 1, 0.4);
  const Tensor mu = testing::composed_mean(p, x, ins, src, w);
  const int t = 500;
  std::mt19937_64 rng(505);
  std::normal_distribution<double> n(0.0, 1.0);
  std::array<double, 3> mean{};
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    Tensor eps(3, 1, 1);
    for (double& e : eps.data) e = n(rng);
    const Tensor g = sds_latent_gradient(x, src, ins, p, s, w, t, eps);
    for (int c = 0; c < 3; ++c) mean[c] += g.data[c] / draws;
  }
  const double ab = s.alpha_bar(t);
  double worst = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double expect =
        sds_weight(t, s) * std::sqrt(ab * (1 - ab)) * (x.data[c] - mu.data[c]) / (ab * sigma * sigma + 1 - ab);
    worst = std::max(worst, std::abs(mean[c] - expect) / std::abs(expect));
  }
  return {worst <= 0.02, fmt("max rel err %.1e over 3 channels, 1e4 draws", worst)};
}

// ---------------------------------------------------------------------------
// 6. Direct-pixel convergence.

Outcome pixel_convergence() {
  const NoiseSchedule s = default_schedule();
  GaussianProvider p(instruction_mean_fn(), 0.05, s);
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor src(3, 8, 8);
  for (double& v : src.data) v = u(rng);
  const GuidanceWeights w{1.5, 2.0};
  const std::optional<std::string> ins = "make it red";
  const Tensor mu = testing::composed_mean(p, src, ins, src, w);
  testing::PixelSdsConfig cfg;
  cfg.steps = 500;
  cfg.seed = 6;
  const Tensor x = testing::run_pixel_sds(Tensor(3, 8, 8, 0.5), p, s, ins, src, w, cfg);
  const double err = testing::max_abs_diff(x, mu);
  return {err <= 0.05, fmt("||x - mu*||_inf = %.4f after 500 Adam steps", err)};
}

// ---------------------------------------------------------------------------
// 7, 8, 9, 11. Sphere fixture pipeline.

struct Fixture {
  VoxelGrid ground_truth;
  VoxelGrid source;
  double heldout_psnr = 0.0;
};

CameraDistribution fixture_cameras(int size) {
  CameraDistribution d;
  d.width = size;
  d.height = size;
  return d;
}

Fixture build_fixture() {
  SceneSpec spec;
  spec.primitives.push_back(SpherePrimitive{Vec3::Zero(), 0.3, {0.05, 0.5, 0.95}, 20.0});
  const SynthResult synth = synth_scene(spec, {32, 32, 32}, 20, fixture_cameras(48), 1);
  FitConfig fc;
  fc.iterations = 600;
  fc.interval = 100;
  Fixture f{synth.grid, fit(synth.images, fc), 0.0};
  // Held-out poses sit between the training azimuths of an even orbit.
  f.heldout_psnr = compare_grids(f.ground_truth, f.source, orbit_cameras(fixture_cameras(48), 4, 0.3), {}).mean_psnr;
  return f;
}

ConvertConfig fixture_convert(double s_i) {
  ConvertConfig c;
  c.iterations = 600;
  c.interval = 45;
  c.scaling_factor = 4;
  c.guidance.image = s_i;
  c.cameras = fixture_cameras(32);
  c.seed = 7;
  return c;
}

VoxelGrid run_convert(const VoxelGrid& source, const std::string& instruction, const ConvertConfig& c) {
  const NoiseSchedule s = default_schedule();
  GaussianProvider p(instruction_mean_fn(), 0.05, s);
  return convert(source, instruction, c, p, s).target;
}

struct EditStats {
  double gap_rise = 0.0;  // red minus green on source-foreground pixels
  double iou = 0.0;
  double psnr = 0.0;
};

EditStats edit_stats(const VoxelGrid& source, const VoxelGrid& target) {
  const auto cams = orbit_cameras(fixture_cameras(48), 16, 0.1);
  EditStats st;
  for (const Camera& cam : cams) {
    const RenderOutput a = render_image(source, cam, {});
    const RenderOutput b = render_image(target, cam, {});
    const auto ms = masked_channel_mean(a.rgb, a.opacity);
    const auto mt = masked_channel_mean(b.rgb, a.opacity);
    st.gap_rise += ((mt[0] - mt[1]) - (ms[0] - ms[1])) / cams.size();
    st.iou += silhouette_iou(a.opacity, b.opacity) / cams.size();
    st.psnr += psnr(a.rgb, b.rgb) / cams.size();
  }
  return st;
}

struct Pipeline {
  std::optional<Fixture> fixture;
  std::optional<VoxelGrid> red;
  std::optional<VoxelGrid> identity_dynamic_5;

  const Fixture& fix() {
    if (!fixture) fixture = build_fixture();
    return *fixture;
  }
  const VoxelGrid& red_target() {
    if (!red) red = run_convert(fix().source, "make it red", fixture_convert(5.0));
    return *red;
  }
  const VoxelGrid& identity_5() {
    if (!identity_dynamic_5) identity_dynamic_5 = run_convert(fix().source, "keep it the same", fixture_convert(5.0));
    return *identity_dynamic_5;
  }
};

Outcome end_to_end(Pipeline& pl) {
  const Fixture& f = pl.fix();
  const EditStats st = edit_stats(f.source, pl.red_target());
  return {f.heldout_psnr >= 30.0 && st.gap_rise >= 0.2 && st.iou >= 0.85,
          fmt("held-out PSNR %.2f dB, red-green gap rise %.3f, silhouette IoU %.3f", f.heldout_psnr, st.gap_rise,
              st.iou)};
}

Outcome guidance_trend(Pipeline& pl) {
  const VoxelGrid& src = pl.fix().source;
  const double iou5 = edit_stats(src, pl.identity_5()).iou;
  const double iou1 = edit_stats(src, run_convert(src, "keep it the same", fixture_convert(1.0))).iou;
  const double iou05 = edit_stats(src, run_convert(src, "keep it the same", fixture_convert(0.5))).iou;
  return {iou5 >= iou1 && iou1 >= iou05, fmt("IoU s_I=5 %.3f, s_I=1 %.3f, s_I=0.5 %.3f", iou5, iou1, iou05)};
}

Outcome dynamic_vs_progressive(Pipeline& pl) {
  const VoxelGrid& src = pl.fix().source;
  const double dyn = edit_stats(src, pl.identity_5()).psnr;
  ConvertConfig c = fixture_convert(5.0);
  c.scaling = ConvertConfig::Scaling::kProgressive;
  const double prog = edit_stats(src, run_convert(src, "keep it the same", c)).psnr;
  return {dyn - prog >= 3.0, fmt("PSNR vs source: dynamic %.2f dB, progressive %.2f dB, margin %.2f dB", dyn, prog,
                                 dyn - prog)};
}

Outcome determinism(Pipeline& pl) {
  const Fixture again = build_fixture();
  const VoxelGrid red = run_convert(again.source, "make it red", fixture_convert(5.0));
  const bool same_source = checkpoint_bytes(again.source) == checkpoint_bytes(pl.fix().source);
  const bool same_target = checkpoint_bytes(red) == checkpoint_bytes(pl.red_target());
  return {same_source && same_target,
          fmt("fitted source %s, converted target %s", same_source ? "identical" : "differs",
              same_target ? "identical" : "differs")};
}

// ---------------------------------------------------------------------------
// 10. Schedule arithmetic.

Outcome schedule_arithmetic() {
  const ScalingSchedule s = dynamic_schedule(std::int64_t{1024000}, 4, 2000, 150);
  const std::int64_t lo = s.min_count();
  // Per-axis rounding of the ideal 40^3: one vertex either way.
  const bool near = lo >= 39 * 39 * 39 && lo <= 41 * 41 * 41;
  bool palindrome = true;
  const std::size_t n = s.events.size();
  for (std::size_t i = 0; i < n; ++i) palindrome = palindrome && s.events[i].count() == s.events[n - 1 - i].count();
  std::int64_t ideal_min = s.events.front().ideal_count;
  for (const auto& e : s.events) ideal_min = std::min(ideal_min, e.ideal_count);
  return {near && palindrome && ideal_min == 64000,
          fmt("min count %lld (ideal %lld), %zu events, palindromic %s", static_cast<long long>(lo),
              static_cast<long long>(ideal_min), n, palindrome ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  Pipeline pl;
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, render_gradients},
      {2, slab_opacity},
      {3, noising_statistics},
      {4, guidance_identities},
      {5, sds_expectation},
      {6, pixel_convergence},
      {7, [&] { return end_to_end(pl); }},
      {8, [&] { return guidance_trend(pl); }},
      {9, [&] { return dynamic_vs_progressive(pl); }},
      {10, schedule_arithmetic},
      {11, [&] { return determinism(pl); }},
  };

  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s  [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
