#include "ig3d/sds.hpp"

#include <cmath>
#include <regex>
#include <sstream>

#include "ig3d/error.hpp"

namespace ig3d {

Codec Codec::avgpool(int k) {
  if (k != 2 && k != 4 && k != 8) throw ValidationError("unsupported avgpool factor " + std::to_string(k));
  return Codec(Kind::kAvgPool, k);
}

std::string Codec::name() const { return kind_ == Kind::kIdentity ? "identity" : "avgpool" + std::to_string(k_); }

Tensor Codec::encode(const Tensor& image) const {
  if (kind_ == Kind::kIdentity) return image;
  if (image.height % k_ != 0 || image.width % k_ != 0) {
    throw ShapeMismatchError("image " + image.shape_string() + " not divisible by pool size " + std::to_string(k_));
  }
  return resize_to(image, image.height / k_, image.width / k_);
}

Tensor Codec::decode(const Tensor& latent) const {
  if (kind_ == Kind::kIdentity) return latent;
  return resize_to(latent, latent.height * k_, latent.width * k_);
}

Tensor Codec::encode_adjoint(const Tensor& latent_grad) const {
  if (kind_ == Kind::kIdentity) return latent_grad;
  Tensor out = resize_to(latent_grad, latent_grad.height * k_, latent_grad.width * k_);
  const double inv = 1.0 / (k_ * k_);
  for (double& v : out.data) v *= inv;
  return out;
}

Codec make_codec(const std::string& kind) {
  if (kind == "identity") return Codec::identity();
  static const std::regex pool(R"(avgpool\(?(\d+)\)?)");
  std::smatch m;
  if (std::regex_match(kind, m, pool)) return Codec::avgpool(std::stoi(m[1].str()));
  throw ValidationError("unknown codec '" + kind + "' (expected identity or avgpool{2,4,8})");
}

// ---------------------------------------------------------------------------

void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeMismatchError("adam: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty() && state.step == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) {
    throw ShapeMismatchError("adam moments sized " + std::to_string(state.m.size()) + " for " +
                             std::to_string(params.size()) + " parameters");
  }
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void GridAdam::step(VoxelGrid& grid, const GridGrad& grad, double lr_density, double lr_color) {
  if (!(grad.resolution == grid.resolution())) {
    throw ShapeMismatchError("gradient " + grad.resolution.to_string() + " does not match grid " +
                             grid.resolution().to_string());
  }
  adam_update(density, grid.density(), grad.density, lr_density);
  adam_update(color, grid.color(), grad.color, lr_color);
}

// ---------------------------------------------------------------------------

void ConvertConfig::validate() const {
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  guidance.validate();
  if (scaling == Scaling::kDynamic && scaling_factor > 0 && iterations > 0 && iterations < 10 * interval) {
    throw ValidationError("dynamic scaling needs iterations >= 10 * interval (" + std::to_string(10 * interval) + ")");
  }
  if (scaling_factor < 0) throw ValidationError("scaling factor l must be >= 0");
  if (interval <= 0) throw ValidationError("scaling interval must be positive");
  if (!(t_min > 0.0 && t_min <= t_max && t_max <= 1.0)) throw ValidationError("need 0 < t_min <= t_max <= 1");
  if (!(lr_density > 0.0 && lr_color > 0.0)) throw ValidationError("learning rates must be positive");
  make_codec(codec);
  cameras.validate();
  render.validate();
}

std::pair<int, int> timestep_range(const ConvertConfig& config, const NoiseSchedule& schedule) {
  const int steps = schedule.steps();
  const int lo = std::max(1, static_cast<int>(std::ceil(config.t_min * steps - 1e-9)));
  const int hi = std::clamp(static_cast<int>(std::floor(config.t_max * steps + 1e-9)), lo, steps);
  return {lo, hi};
}

Tensor sds_latent_gradient(const Tensor& latent, const Tensor& source_image,
                           const std::optional<std::string>& instruction, const ScoreProvider& provider,
                           const NoiseSchedule& schedule, const GuidanceWeights& guidance, int t, const Tensor& eps) {
  const Tensor x_t = add_noise(latent, eps, t, schedule);
  Tensor grad = guided_epsilon(provider, x_t, t, instruction, source_image, guidance);
  require_same_shape(grad, latent, "provider output");
  const double w = sds_weight(t, schedule);
  for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] = w * (grad.data[i] - eps.data[i]);
  return grad;
}

SdsStepResult sds_step(const VoxelGrid& target, const VoxelGrid& source, const std::optional<std::string>& instruction,
                       const ConvertConfig& config, const Codec& codec, const ScoreProvider& provider,
                       const NoiseSchedule& schedule, std::mt19937_64& rng, int iteration) {
  if (!(target.bbox() == source.bbox())) throw ValidationError("source and target grids must share a bounding box");

  SdsStepResult out;
  out.camera = random_camera_pose(config.cameras, rng);
  const RenderOutput src = render_image(source, out.camera, config.render);
  RenderOutput tgt = render_image(target, out.camera, config.render);
  const Tensor latent = codec.encode(tgt.rgb);

  const auto [t_lo, t_hi] = timestep_range(config, schedule);
  out.t = std::uniform_int_distribution<int>(t_lo, t_hi)(rng);
  Tensor eps(latent.channels, latent.height, latent.width);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& e : eps.data) e = normal(rng);

  Tensor latent_grad;
  try {
    latent_grad =
        sds_latent_gradient(latent, src.rgb, instruction, provider, schedule, config.guidance, out.t, eps);
  } catch (const ProviderError& e) {
    const Vec3 p = out.camera.position();
    std::ostringstream os;
    os << e.what() << " (iteration " << iteration << ", t=" << out.t << ", camera at " << p.x() << "," << p.y() << ","
       << p.z() << ")";
    throw ProviderError(e.kind(), os.str());
  }
  out.weight = sds_weight(out.t, schedule);
  double sq = 0.0;
  for (double g : latent_grad.data) sq += g * g;
  out.residual_rms = out.weight > 0.0 ? std::sqrt(sq / latent_grad.size()) / out.weight : 0.0;

  out.grad = render_backward(tgt, codec.encode_adjoint(latent_grad));
  out.source_image = src.rgb;
  out.target_image = std::move(tgt.rgb);
  return out;
}

std::optional<ScalingSchedule> conversion_schedule(const ConvertConfig& config, Resolution base) {
  if (config.iterations == 0) return std::nullopt;
  switch (config.scaling) {
    case ConvertConfig::Scaling::kDynamic:
      if (config.scaling_factor == 0) return std::nullopt;
      return dynamic_schedule(base, config.scaling_factor, config.iterations, config.interval);
    case ConvertConfig::Scaling::kProgressive:
      return progressive_schedule(base, config.progressive_divisor, config.iterations, config.interval);
    case ConvertConfig::Scaling::kNone:
      break;
  }
  return std::nullopt;
}

ConvertResult convert(const VoxelGrid& source, const std::optional<std::string>& instruction,
                      const ConvertConfig& config, const ScoreProvider& provider, const NoiseSchedule& schedule,
                      const std::function<void(const ConvertProgress&)>& on_iteration) {
  config.validate();
  const Codec codec = make_codec(config.codec);
  ConvertResult result{source, conversion_schedule(config, source.resolution())};
  VoxelGrid& target = result.target;

  GridAdam adam;
  for (AdamState* s : {&adam.density, &adam.color}) {
    s->beta1 = config.adam_beta1;
    s->beta2 = config.adam_beta2;
    s->epsilon = config.adam_epsilon;
  }
  std::mt19937_64 rng(config.seed);

  for (int it = 0; it < config.iterations; ++it) {
    bool resampled = false;
    if (result.schedule) {
      if (const ScalingEvent* ev = result.schedule->event_at(it); ev && !(ev->resolution == target.resolution())) {
        target = resample(target, ev->resolution);
        // Moment buffers no longer match the new parameter layout.
        adam.reset();
        resampled = true;
      }
    }
    const SdsStepResult step = sds_step(target, source, instruction, config, codec, provider, schedule, rng, it);
    adam.step(target, step.grad, config.lr_density, config.lr_color);
    if (on_iteration) on_iteration({it, &target, &step, resampled});
  }
  // An event scheduled at the final iteration still sets the output size.
  if (result.schedule) {
    const Resolution last = result.schedule->resolution_at(config.iterations);
    if (!(last == target.resolution())) target = resample(target, last);
  }
  return result;
}

}  // namespace ig3d
