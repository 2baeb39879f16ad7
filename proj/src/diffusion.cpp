#include "ig3d/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "ig3d/error.hpp"

namespace ig3d {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw ValidationError("noise schedule needs at least one step");
  alpha_.reserve(beta_.size());
  alpha_bar_.reserve(beta_.size());
  double prod = 1.0;
  for (double b : beta_) {
    if (!(b > 0.0 && b < 1.0)) throw ValidationError("beta values must lie in (0, 1)");
    alpha_.push_back(1.0 - b);
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
}

std::size_t NoiseSchedule::check(int t) const {
  if (t < 1 || t > steps()) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ValidationError("beta range must satisfy 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * f;
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule default_schedule() { return build_schedule(1000, 1e-4, 2e-2); }

Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "add_noise");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  Tensor out = x0;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * x0.data[i] + b * eps.data[i];
  return out;
}

double sds_weight(int t, const NoiseSchedule& schedule) { return 1.0 - schedule.alpha_bar(t); }

Tensor cfg_single(const Tensor& eps_uncond, const Tensor& eps_cond, double s) {
  require_same_shape(eps_uncond, eps_cond, "cfg_single");
  Tensor out = eps_uncond;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = eps_uncond.data[i] + s * (eps_cond.data[i] - eps_uncond.data[i]);
  }
  return out;
}

void GuidanceWeights::validate() const {
  if (!std::isfinite(image) || !std::isfinite(text) || image < 0.0 || text < 0.0) {
    throw ValidationError("guidance scales must be finite and non-negative");
  }
}

Tensor cfg_dual(const Tensor& eps_null_null, const Tensor& eps_null_img, const Tensor& eps_txt_img,
                const GuidanceWeights& w) {
  require_same_shape(eps_null_null, eps_null_img, "cfg_dual");
  require_same_shape(eps_null_null, eps_txt_img, "cfg_dual");
  Tensor out = eps_null_null;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double nn = eps_null_null.data[i];
    const double ni = eps_null_img.data[i];
    out.data[i] = nn + w.image * (ni - nn) + w.text * (eps_txt_img.data[i] - ni);
  }
  return out;
}

void ScoreRequest::validate(int max_t) const {
  if (t < 1 || t > max_t) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(max_t) + "]");
  }
  require_finite(x_t, "x_t");
  if (source_image) {
    if (source_image->channels != 3) throw ShapeMismatchError("source image must have 3 channels");
    require_finite(*source_image, "source image");
  }
}

GaussianProvider::GaussianProvider(MeanFn mean_fn, double sigma, NoiseSchedule schedule)
    : mean_fn_(std::move(mean_fn)), sigma_(sigma), schedule_(std::move(schedule)) {
  if (!mean_fn_) throw ValidationError("gaussian provider needs a mean function");
  if (!(sigma_ >= 0.0) || !std::isfinite(sigma_)) throw ValidationError("gaussian provider sigma must be >= 0");
}

Tensor GaussianProvider::mean_for(const ScoreRequest& request) const {
  const Tensor& x = request.x_t;
  Tensor mu = mean_fn_(request.instruction, request.source_image, x.height, x.width);
  if (mu.channels != x.channels) {
    throw ShapeMismatchError("mean function produced " + mu.shape_string() + " for latent " + x.shape_string());
  }
  return resize_to(mu, x.height, x.width);
}

Tensor GaussianProvider::predict(const ScoreRequest& request) const {
  request.validate(schedule_.steps());
  const Tensor mu = mean_for(request);
  const double ab = schedule_.alpha_bar(request.t);
  const double sqrt_ab = std::sqrt(ab);
  const double scale = std::sqrt(1.0 - ab) / (ab * sigma_ * sigma_ + 1.0 - ab);
  Tensor eps = request.x_t;
  for (std::size_t i = 0; i < eps.data.size(); ++i) {
    eps.data[i] = scale * (request.x_t.data[i] - sqrt_ab * mu.data[i]);
  }
  return eps;
}

std::string GaussianProvider::id() const {
  std::ostringstream os;
  os << "gaussian(sigma=" << sigma_ << ",T=" << schedule_.steps() << ")";
  return os.str();
}

std::unique_ptr<GaussianProvider> gaussian_provider(MeanFn mean_fn, double sigma, NoiseSchedule schedule) {
  return std::make_unique<GaussianProvider>(std::move(mean_fn), sigma, std::move(schedule));
}

Tensor guided_epsilon(const ScoreProvider& provider, const Tensor& x_t, int t,
                      const std::optional<std::string>& instruction, const Tensor& source_image,
                      const GuidanceWeights& w) {
  w.validate();
  auto query = [&](bool with_text, bool with_image) {
    ScoreRequest req;
    req.x_t = x_t;
    req.t = t;
    if (with_text) req.instruction = instruction;
    if (with_image) req.source_image = source_image;
    return provider.predict(req);
  };
  // Expanded coefficients: (1 - s_I) nn + (s_I - s_T) ni + s_T yi.
  const double c_nn = 1.0 - w.image;
  const double c_ni = w.image - w.text;
  const double c_yi = w.text;
  if (c_nn == 0.0 && c_ni == 0.0 && c_yi == 1.0) return query(true, true);
  if (c_nn == 0.0 && c_yi == 0.0 && c_ni == 1.0) return query(false, true);
  return cfg_dual(query(false, false), query(false, true), query(true, true), w);
}

}  // namespace ig3d
