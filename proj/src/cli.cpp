#include "ig3d/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "ig3d/checkpoint.hpp"
#include "ig3d/error.hpp"
#include "ig3d/image_io.hpp"
#include "ig3d/instruct.hpp"
#include "ig3d/metrics.hpp"
#include "ig3d/remote_provider.hpp"
#include "ig3d/scenes.hpp"
#include "ig3d/sds.hpp"

namespace ig3d {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::string numbered(const std::string& prefix, int i, const std::string& ext, int width = 3) {
  std::ostringstream os;
  os << prefix << std::setw(width) << std::setfill('0') << i << ext;
  return os.str();
}

/// Options whose values override the configuration only when given.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <typename T>
  void add(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    apply_.push_back([opt, value, key](json& cfg) {
      if (opt->count() > 0) cfg[key] = *value;
    });
  }

  void apply(json& cfg) const {
    for (const auto& f : apply_) f(cfg);
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> apply_;
};

/// defaults < config file < flags. A run manifest is accepted as a config
/// file; its "config" member is used.
json resolve_config(const std::string& command, const std::string& config_path, const FlagSet& flags) {
  json cfg = default_config(command);
  if (!config_path.empty()) {
    json file = read_json_file(config_path);
    if (file.is_object() && file.contains("command") && file.contains("config")) {
      if (file["command"] != command) {
        throw ValidationError(config_path + " is a manifest of '" + file["command"].get<std::string>() +
                              "', not '" + command + "'");
      }
      file = file["config"];
    }
    if (!file.is_object()) throw ValidationError(config_path + ": config must be a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (!cfg.contains(key)) throw ValidationError(config_path + ": unknown config key '" + key + "'");
      cfg[key] = value;
    }
  }
  flags.apply(cfg);
  return cfg;
}

template <typename T>
T get(const json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config value '") + key + "' has the wrong type: " + cfg.at(key).dump());
  }
}

Resolution resolution_from(const json& v) {
  if (v.is_number_integer()) {
    const int n = v.get<int>();
    return {n, n, n};
  }
  if (v.is_array() && v.size() == 3) return {v[0].get<int>(), v[1].get<int>(), v[2].get<int>()};
  throw ValidationError("resolution must be an integer or [nx, ny, nz], got " + v.dump());
}

json resolution_json(const Resolution& r) { return {r.nx, r.ny, r.nz}; }

RenderParams render_params(const json& cfg) {
  RenderParams p;
  p.density_bias = get<double>(cfg, "density_bias");
  p.step_size = get<double>(cfg, "step_size");
  if (cfg.contains("threads")) p.threads = get<int>(cfg, "threads");
  if (cfg.contains("background")) p.background = get<std::array<double, 3>>(cfg, "background");
  p.validate();
  return p;
}

CameraDistribution camera_distribution(const json& cfg) {
  CameraDistribution d;
  d.width = get<int>(cfg, "width");
  d.height = get<int>(cfg, "height");
  d.fov_x = get<double>(cfg, "fov_x");
  d.radius_min = get<double>(cfg, "radius_min");
  d.radius_max = get<double>(cfg, "radius_max");
  d.elevation_min = get<double>(cfg, "elevation_min");
  d.elevation_max = get<double>(cfg, "elevation_max");
  const auto mode = get<std::string>(cfg, "camera_mode");
  if (mode == "orbit") {
    d.mode = CameraDistribution::Mode::kOrbit;
  } else if (mode == "front") {
    d.mode = CameraDistribution::Mode::kFrontFacing;
  } else {
    throw ValidationError("camera_mode must be 'orbit' or 'front', got '" + mode + "'");
  }
  d.validate();
  return d;
}

/// Cameras for render/metrics: an orbit, or the poses of a dataset manifest.
std::vector<Camera> view_cameras(const json& cfg) {
  const auto poses = get<std::string>(cfg, "poses");
  if (!poses.empty()) {
    fs::path dir = poses;
    if (dir.filename() == "manifest.json") dir = dir.parent_path();
    std::vector<Camera> cams;
    for (const PosedImage& v : load_posed_dataset(dir).views) cams.push_back(v.camera);
    return cams;
  }
  const int n = get<int>(cfg, "orbit");
  if (n <= 0) throw ValidationError("--orbit must be positive");
  CameraDistribution d;
  d.width = get<int>(cfg, "width");
  d.height = get<int>(cfg, "height");
  d.fov_x = get<double>(cfg, "fov_x");
  d.radius_min = d.radius_max = get<double>(cfg, "radius");
  d.elevation_min = d.elevation_max = get<double>(cfg, "elevation");
  return orbit_cameras(d, n, get<double>(cfg, "azimuth_offset"));
}

json schedule_json(const std::optional<ScalingSchedule>& s) {
  json events = json::array();
  if (!s) return events;
  for (const ScalingEvent& e : s->events) {
    events.push_back({{"iteration", e.iteration},
                      {"resolution", resolution_json(e.resolution)},
                      {"count", e.count()},
                      {"ideal_count", e.ideal_count}});
  }
  return events;
}

struct RunRecord {
  std::string command;
  json config;
  std::vector<std::string> positional;
  std::string started_at = utc_now();
  json extra = json::object();

  void write(const fs::path& path) const {
    json j = {{"command", command},
              {"config", config},
              {"positional", positional},
              {"started_at", started_at},
              {"finished_at", utc_now()}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    write_json_file(j, path);
  }
};

// ---------------------------------------------------------------------------

void run_synth(const std::string& spec_path, const std::string& out_dir, const json& cfg, std::ostream& out) {
  RunRecord run{"synth", cfg, {spec_path, out_dir}};
  const SceneSpec spec = load_scene_spec(spec_path);
  const int views = get<int>(cfg, "views");
  if (views <= 0) throw ValidationError("--views must be positive, got " + std::to_string(views));
  const Resolution res = resolution_from(cfg.at("resolution"));
  RenderParams params = render_params(cfg);
  const SynthResult synth = synth_scene(spec, res, views, camera_distribution(cfg), get<std::uint64_t>(cfg, "seed"),
                                        params);
  const fs::path dir = out_dir;
  fs::create_directories(dir);
  save_checkpoint(synth.grid, dir / "ground_truth.ig3d");
  save_posed_dataset(synth.images, dir / "dataset");
  run.extra["outputs"] = {{"checkpoint", (dir / "ground_truth.ig3d").string()},
                          {"dataset", (dir / "dataset").string()}};
  run.write(dir / kRunManifestName);
  out << "wrote " << views << " views and ground truth " << res.to_string() << " to " << dir.string() << "\n";
}

void run_fit(const std::string& dataset, const std::string& out_ckpt, const json& cfg, std::ostream& out,
             std::ostream& err) {
  RunRecord run{"fit", cfg, {dataset, out_ckpt}};
  const PosedImageSet images = load_posed_dataset(dataset);
  FitConfig fc;
  fc.iterations = get<int>(cfg, "iterations");
  fc.batch_rays = get<int>(cfg, "batch_rays");
  fc.lr_density = get<double>(cfg, "lr_density");
  fc.lr_color = get<double>(cfg, "lr_color");
  fc.resolution = resolution_from(cfg.at("resolution"));
  fc.start_divisor = get<int>(cfg, "start_divisor");
  fc.interval = get<int>(cfg, "interval");
  fc.seed = get<std::uint64_t>(cfg, "seed");
  fc.render = render_params(cfg);
  if (images.bbox) fc.bbox = *images.bbox;
  const int log_every = get<int>(cfg, "log_every");

  const VoxelGrid grid = fit(images, fc, [&](const FitProgress& p) {
    if (log_every > 0 && (p.iteration % log_every == 0 || p.iteration + 1 == fc.iterations)) {
      err << "fit iter " << p.iteration << " loss " << p.loss << " res " << p.grid->resolution().to_string() << "\n";
    }
  });
  save_checkpoint(grid, out_ckpt);

  RenderParams params = fc.render;
  params.background = images.background;
  double total = 0.0;
  for (const PosedImage& v : images.views) total += psnr(render_image(grid, v.camera, params).rgb, v.image);
  const double train_psnr = total / static_cast<double>(images.views.size());
  run.extra["outputs"] = {{"checkpoint", out_ckpt}};
  run.extra["train_psnr"] = train_psnr;
  run.write(fs::path(out_ckpt).string() + ".run.json");
  out << "final train PSNR " << std::fixed << std::setprecision(2) << train_psnr << " dB\n";
}

std::unique_ptr<ScoreProvider> make_provider(const json& cfg) {
  std::string spec = get<std::string>(cfg, "provider");
  if (spec == "remote") {
    const char* env = std::getenv(kProviderUrlEnv);
    if (!env || !*env) throw ValidationError(std::string("--provider remote needs ") + kProviderUrlEnv);
    spec = std::string("remote:") + env;
  }
  if (spec == "gaussian") {
    return gaussian_provider(instruction_mean_fn(), get<double>(cfg, "sigma"), default_schedule());
  }
  if (spec.rfind("remote:", 0) == 0) {
    auto remote = remote_provider({spec.substr(7), get<double>(cfg, "timeout")});
    remote->health();
    return remote;
  }
  throw ValidationError("unknown provider '" + spec + "' (expected gaussian, remote or remote:URL)");
}

ConvertConfig convert_config(const json& cfg) {
  ConvertConfig c;
  c.iterations = get<int>(cfg, "iterations");
  c.guidance.image = get<double>(cfg, "s_i");
  c.guidance.text = get<double>(cfg, "s_t");
  c.scaling_factor = get<int>(cfg, "l");
  c.interval = get<int>(cfg, "interval");
  const auto scaling = get<std::string>(cfg, "scaling");
  if (scaling == "dynamic") {
    c.scaling = ConvertConfig::Scaling::kDynamic;
  } else if (scaling == "progressive") {
    c.scaling = ConvertConfig::Scaling::kProgressive;
  } else if (scaling == "none") {
    c.scaling = ConvertConfig::Scaling::kNone;
  } else {
    throw ValidationError("scaling must be dynamic, progressive or none, got '" + scaling + "'");
  }
  c.progressive_divisor = get<int>(cfg, "progressive_divisor");
  c.t_min = get<double>(cfg, "t_min");
  c.t_max = get<double>(cfg, "t_max");
  c.lr_density = get<double>(cfg, "lr_density");
  c.lr_color = get<double>(cfg, "lr_color");
  c.codec = get<std::string>(cfg, "codec");
  c.cameras = camera_distribution(cfg);
  c.render = render_params(cfg);
  c.seed = get<std::uint64_t>(cfg, "seed");
  c.validate();
  return c;
}

void run_convert(const std::string& src_path, const std::string& out_dir, const json& cfg, std::ostream& out,
                 std::ostream& err) {
  RunRecord run{"convert", cfg, {src_path, out_dir}};
  if (!cfg.at("instruction").is_string()) throw ValidationError("--instruction is required");
  const auto instruction = get<std::string>(cfg, "instruction");
  parse_instruction(instruction);
  const ConvertConfig cc = convert_config(cfg);
  const VoxelGrid source = load_checkpoint(src_path);
  const auto provider = make_provider(cfg);
  const NoiseSchedule schedule = default_schedule();

  const fs::path dir = out_dir;
  const fs::path diag = dir / "diagnostics";
  fs::create_directories(diag);
  const int ckpt_every = get<int>(cfg, "checkpoint_every");
  const int diag_every = get<int>(cfg, "diagnostics_every");
  const int log_every = get<int>(cfg, "log_every");
  if (ckpt_every > 0) fs::create_directories(dir / "checkpoints");
  std::ofstream log(diag / "log.csv");
  log << "iteration,t,weight,residual_rms,nx,ny,nz\n";

  const ConvertResult result = convert(source, instruction, cc, *provider, schedule, [&](const ConvertProgress& p) {
    const Resolution r = p.target->resolution();
    log << p.iteration << "," << p.step->t << "," << p.step->weight << "," << p.step->residual_rms << "," << r.nx
        << "," << r.ny << "," << r.nz << "\n";
    if (log_every > 0 && p.iteration % log_every == 0) {
      err << "convert iter " << p.iteration << " t " << p.step->t << " residual " << p.step->residual_rms << " res "
          << r.to_string() << (p.resampled ? " (resampled)" : "") << "\n";
    }
    if (diag_every > 0 && (p.iteration + 1) % diag_every == 0) {
      write_png(p.step->target_image, diag / numbered("iter_", p.iteration + 1, ".png", 5));
    }
    if (ckpt_every > 0 && (p.iteration + 1) % ckpt_every == 0) {
      save_checkpoint(*p.target, dir / "checkpoints" / numbered("iter_", p.iteration + 1, ".ig3d", 5));
    }
  });
  save_checkpoint(result.target, dir / "target.ig3d");

  const std::vector<Camera> previews = orbit_cameras(cc.cameras, 4);
  for (std::size_t i = 0; i < previews.size(); ++i) {
    write_png(render_image(source, previews[i], cc.render).rgb, diag / numbered("source_", static_cast<int>(i), ".png"));
    write_png(render_image(result.target, previews[i], cc.render).rgb,
              diag / numbered("target_", static_cast<int>(i), ".png"));
  }

  run.extra["provider"] = provider->id();
  run.extra["schedule"] = schedule_json(result.schedule);
  run.extra["canonical_instruction"] = to_string(parse_instruction(instruction));
  run.extra["outputs"] = {{"checkpoint", (dir / "target.ig3d").string()}, {"diagnostics", diag.string()}};
  run.write(dir / kRunManifestName);
  out << "wrote " << (dir / "target.ig3d").string() << " at " << result.target.resolution().to_string() << "\n";
}

void run_render(const std::string& ckpt, const std::string& out_dir, const json& cfg, std::ostream& out) {
  RunRecord run{"render", cfg, {ckpt, out_dir}};
  const VoxelGrid grid = load_checkpoint(ckpt);
  const std::vector<Camera> cams = view_cameras(cfg);
  const RenderParams params = render_params(cfg);
  const PosedImageSet frames = render_views(grid, cams, params);
  save_posed_dataset(frames, out_dir);
  run.extra["outputs"] = {{"frames", static_cast<int>(cams.size())}};
  run.write(fs::path(out_dir) / kRunManifestName);
  out << "rendered " << cams.size() << " frames to " << out_dir << "\n";
}

void run_metrics(const std::string& a, const std::string& b, const json& cfg, std::ostream& out) {
  const VoxelGrid ga = load_checkpoint(a);
  const VoxelGrid gb = load_checkpoint(b);
  const MetricsReport report = compare_grids(ga, gb, view_cameras(cfg), render_params(cfg));
  json j = report.to_json();
  j["a"] = a;
  j["b"] = b;
  const auto path = get<std::string>(cfg, "out");
  if (!path.empty()) write_json_file(j, path);
  out << j.dump(2) << "\n";
}

/// Re-run a recorded command, optionally redirecting its output path.
std::vector<std::string> rerun_args(const std::string& manifest_path, const std::string& new_out) {
  const json m = read_json_file(manifest_path);
  if (!m.is_object() || !m.contains("command") || !m.contains("positional")) {
    throw ValidationError(manifest_path + " is not a run manifest");
  }
  std::vector<std::string> args{m["command"].get<std::string>()};
  auto positional = m["positional"].get<std::vector<std::string>>();
  if (!new_out.empty() && !positional.empty()) positional.back() = new_out;
  args.insert(args.end(), positional.begin(), positional.end());
  args.insert(args.end(), {"--config", manifest_path});
  return args;
}

}  // namespace

json default_config(const std::string& command) {
  const RenderParams rp;
  const json render = {{"density_bias", rp.density_bias}, {"step_size", rp.step_size}, {"threads", rp.threads}};
  if (command == "synth") {
    json j = {{"views", 20}, {"resolution", 32}, {"seed", 0}, {"width", 64}, {"height", 64},
              {"fov_x", 0.7}, {"radius_min", 2.0}, {"radius_max", 2.0}, {"elevation_min", 0.0},
              {"elevation_max", 0.6}, {"camera_mode", "orbit"}};
    j.update(render);
    return j;
  }
  if (command == "fit") {
    const FitConfig f;
    json j = {{"iterations", f.iterations}, {"batch_rays", f.batch_rays}, {"lr_density", f.lr_density},
              {"lr_color", f.lr_color}, {"resolution", resolution_json(f.resolution)},
              {"start_divisor", f.start_divisor}, {"interval", f.interval}, {"seed", f.seed}, {"log_every", 100}};
    j.update(render);
    return j;
  }
  if (command == "convert") {
    const ConvertConfig c;
    const CameraDistribution& d = c.cameras;
    json j = {{"instruction", nullptr},
              {"iterations", c.iterations},
              {"s_i", c.guidance.image},
              {"s_t", c.guidance.text},
              {"l", c.scaling_factor},
              {"interval", c.interval},
              {"scaling", "dynamic"},
              {"progressive_divisor", c.progressive_divisor},
              {"t_min", c.t_min},
              {"t_max", c.t_max},
              {"lr_density", c.lr_density},
              {"lr_color", c.lr_color},
              {"codec", c.codec},
              {"provider", "gaussian"},
              {"sigma", 0.05},
              {"timeout", 30.0},
              {"seed", c.seed},
              {"width", d.width},
              {"height", d.height},
              {"fov_x", d.fov_x},
              {"radius_min", d.radius_min},
              {"radius_max", d.radius_max},
              {"elevation_min", d.elevation_min},
              {"elevation_max", d.elevation_max},
              {"camera_mode", "orbit"},
              {"checkpoint_every", 0},
              {"diagnostics_every", 0},
              {"log_every", 100}};
    j.update(render);
    const char* env = std::getenv(kProviderUrlEnv);
    if (env && *env) j["provider"] = std::string("remote:") + env;
    return j;
  }
  if (command == "render" || command == "metrics") {
    json j = {{"orbit", 8}, {"poses", ""}, {"width", 64}, {"height", 64}, {"fov_x", 0.7},
              {"radius", 2.0}, {"elevation", 0.3}, {"azimuth_offset", 0.0}, {"background", {1.0, 1.0, 1.0}}};
    if (command == "metrics") j["out"] = "";
    j.update(render);
    return j;
  }
  throw ValidationError("no configuration for command '" + command + "'");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Instruction-guided conversion of voxel radiance fields", "ig3d"};
  app.require_subcommand(1);

  std::string config_path;
  std::string pos_a;
  std::string pos_b;

  auto* synth = app.add_subcommand("synth", "Rasterize a scene spec and render a posed dataset");
  synth->add_option("spec", pos_a, "Scene spec JSON")->required();
  synth->add_option("out_dir", pos_b, "Output directory")->required();
  synth->add_option("--config", config_path, "JSON config file or run manifest");
  FlagSet synth_flags(synth);
  synth_flags.add<int>("--views", "views", "Number of posed views");
  synth_flags.add<int>("--res", "resolution", "Grid vertices per axis");
  synth_flags.add<std::uint64_t>("--seed", "seed", "Camera sampling seed");
  synth_flags.add<int>("--width", "width", "Image width");
  synth_flags.add<int>("--height", "height", "Image height");
  synth_flags.add<int>("--threads", "threads", "Render threads");

  auto* fit_cmd = app.add_subcommand("fit", "Fit a source grid to a posed dataset");
  fit_cmd->add_option("dataset", pos_a, "Dataset directory")->required();
  fit_cmd->add_option("out_checkpoint", pos_b, "Output checkpoint")->required();
  fit_cmd->add_option("--config", config_path, "JSON config file or run manifest");
  FlagSet fit_flags(fit_cmd);
  fit_flags.add<int>("--iters", "iterations", "Optimization steps");
  fit_flags.add<int>("--batch", "batch_rays", "Rays per step");
  fit_flags.add<int>("--res", "resolution", "Final grid vertices per axis");
  fit_flags.add<double>("--lr-density", "lr_density", "Adam learning rate for density");
  fit_flags.add<double>("--lr-color", "lr_color", "Adam learning rate for colour");
  fit_flags.add<int>("--start-divisor", "start_divisor", "Initial voxel-count divisor (power of two)");
  fit_flags.add<int>("--interval", "interval", "Iterations between resolution doublings");
  fit_flags.add<std::uint64_t>("--seed", "seed", "Ray sampling seed");
  fit_flags.add<int>("--threads", "threads", "Render threads");

  auto* conv = app.add_subcommand("convert", "Convert a source grid following a text instruction");
  conv->add_option("source", pos_a, "Source checkpoint")->required();
  conv->add_option("out_dir", pos_b, "Output directory")->required();
  conv->add_option("--config", config_path, "JSON config file or run manifest");
  FlagSet conv_flags(conv);
  conv_flags.add<std::string>("--instruction", "instruction", "Edit instruction, e.g. \"make it red\"");
  conv_flags.add<double>("--s-i", "s_i", "Image guidance scale");
  conv_flags.add<double>("--s-t", "s_t", "Text guidance scale");
  conv_flags.add<int>("--l", "l", "Dynamic scaling factor");
  conv_flags.add<int>("--iters", "iterations", "Conversion iterations");
  conv_flags.add<int>("--interval", "interval", "Iterations between scaling events");
  conv_flags.add<std::string>("--scaling", "scaling", "dynamic | progressive | none");
  conv_flags.add<int>("--progressive-divisor", "progressive_divisor", "Start divisor for progressive scaling");
  conv_flags.add<std::string>("--provider", "provider", "gaussian | remote | remote:URL");
  conv_flags.add<double>("--sigma", "sigma", "Gaussian provider standard deviation");
  conv_flags.add<std::string>("--codec", "codec", "identity | avgpool2 | avgpool4 | avgpool8");
  conv_flags.add<std::uint64_t>("--seed", "seed", "Seed for poses, timesteps and noise");
  conv_flags.add<int>("--width", "width", "Training view width");
  conv_flags.add<int>("--height", "height", "Training view height");
  conv_flags.add<int>("--threads", "threads", "Render threads");
  conv_flags.add<int>("--checkpoint-every", "checkpoint_every", "Write a checkpoint every N iterations");
  conv_flags.add<int>("--diagnostics-every", "diagnostics_every", "Write the training view every N iterations");

  auto* render_cmd = app.add_subcommand("render", "Render frames of a checkpoint");
  render_cmd->add_option("checkpoint", pos_a, "Checkpoint")->required();
  render_cmd->add_option("out_dir", pos_b, "Output directory")->required();
  render_cmd->add_option("--config", config_path, "JSON config file or run manifest");
  FlagSet render_flags(render_cmd);
  auto* orbit_opt = render_cmd->add_option("--orbit", "Render N frames on an orbit");
  auto* poses_opt = render_cmd->add_option("--poses", "Render at the poses of a dataset manifest");
  orbit_opt->excludes(poses_opt);
  render_flags.add<int>("--width", "width", "Frame width");
  render_flags.add<int>("--height", "height", "Frame height");
  render_flags.add<double>("--radius", "radius", "Orbit radius");
  render_flags.add<double>("--elevation", "elevation", "Orbit elevation (radians)");
  render_flags.add<double>("--azimuth-offset", "azimuth_offset", "Azimuth of the first orbit frame");
  render_flags.add<int>("--threads", "threads", "Render threads");

  auto* metrics_cmd = app.add_subcommand("metrics", "Compare two checkpoints");
  metrics_cmd->add_option("a", pos_a, "Reference checkpoint")->required();
  metrics_cmd->add_option("b", pos_b, "Compared checkpoint")->required();
  metrics_cmd->add_option("--config", config_path, "JSON config file");
  FlagSet metrics_flags(metrics_cmd);
  auto* m_orbit = metrics_cmd->add_option("--orbit", "Compare on N orbit views");
  auto* m_poses = metrics_cmd->add_option("--poses", "Compare at the poses of a dataset manifest");
  m_orbit->excludes(m_poses);
  metrics_flags.add<int>("--width", "width", "View width");
  metrics_flags.add<int>("--height", "height", "View height");
  metrics_flags.add<double>("--radius", "radius", "Orbit radius");
  metrics_flags.add<double>("--elevation", "elevation", "Orbit elevation (radians)");
  metrics_flags.add<std::string>("--out", "out", "Write the JSON report here");
  metrics_flags.add<int>("--threads", "threads", "Render threads");

  auto* instruct_cmd = app.add_subcommand("instruct", "Instruction utilities");
  instruct_cmd->require_subcommand(1);
  auto* parse_cmd = instruct_cmd->add_subcommand("parse", "Print the canonical edit for an instruction");
  std::vector<std::string> words;
  parse_cmd->add_option("text", words, "Instruction text")->required();

  auto* rerun = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rerun->add_option("manifest", pos_a, "run.json")->required();
  rerun->add_option("--out", pos_b, "Replace the recorded output path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  // CLI11 options without a bound variable are read back here.
  auto view_flags = [&](CLI::Option* orbit, CLI::Option* poses, json& cfg) {
    if (orbit->count() > 0) {
      cfg["orbit"] = orbit->as<int>();
      cfg["poses"] = "";
    }
    if (poses->count() > 0) cfg["poses"] = poses->as<std::string>();
  };

  try {
    if (synth->parsed()) {
      run_synth(pos_a, pos_b, resolve_config("synth", config_path, synth_flags), out);
    } else if (fit_cmd->parsed()) {
      run_fit(pos_a, pos_b, resolve_config("fit", config_path, fit_flags), out, err);
    } else if (conv->parsed()) {
      run_convert(pos_a, pos_b, resolve_config("convert", config_path, conv_flags), out, err);
    } else if (render_cmd->parsed()) {
      json cfg = resolve_config("render", config_path, render_flags);
      view_flags(orbit_opt, poses_opt, cfg);
      run_render(pos_a, pos_b, cfg, out);
    } else if (metrics_cmd->parsed()) {
      json cfg = resolve_config("metrics", config_path, metrics_flags);
      view_flags(m_orbit, m_poses, cfg);
      run_metrics(pos_a, pos_b, cfg, out);
    } else if (parse_cmd->parsed()) {
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
      out << to_string(parse_instruction(text)) << "\n";
    } else if (rerun->parsed()) {
      return run_cli(rerun_args(pos_a, pos_b), out, err);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ig3d
