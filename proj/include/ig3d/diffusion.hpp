#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ig3d/tensor.hpp"

namespace ig3d {

/// Discrete forward-process schedule. Timesteps are 1-based: t in [1, T].
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(check(t)); }
  double alpha(int t) const { return alpha_.at(check(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t)); }

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }

 private:
  std::size_t check(int t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// Linearly spaced betas from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule build_schedule(int steps, double beta_start, double beta_end);

/// Common latent-diffusion defaults: T = 1000, beta in [1e-4, 2e-2].
NoiseSchedule default_schedule();

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& schedule);

/// SDS weighting w(t) = 1 - abar_t.
double sds_weight(int t, const NoiseSchedule& schedule);

/// eps_uncond + s (eps_cond - eps_uncond).
Tensor cfg_single(const Tensor& eps_uncond, const Tensor& eps_cond, double s);

struct GuidanceWeights {
  double image = 5.0;  // s_I
  double text = 100.0; // s_T

  void validate() const;
};

/// Two-condition guidance over the (null, null), (null, image) and
/// (text, image) predictions.
Tensor cfg_dual(const Tensor& eps_null_null, const Tensor& eps_null_img, const Tensor& eps_txt_img,
                const GuidanceWeights& w);

/// A noise-prediction query. Absent `instruction` / `source_image` encode the
/// null condition.
struct ScoreRequest {
  Tensor x_t;
  int t = 1;
  std::optional<std::string> instruction;
  std::optional<Tensor> source_image;  // 3 x H' x W', pixel space

  void validate(int max_t) const;
};

/// Anything that predicts the noise in x_t given the conditions. Providers
/// are pure: equal requests give equal answers.
class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual Tensor predict(const ScoreRequest& request) const = 0;
  virtual std::string id() const = 0;
};

/// Mean of the data distribution for a condition pair. `height`/`width` give
/// the latent size for rules that need a shape when no image is supplied.
using MeanFn = std::function<Tensor(const std::optional<std::string>& instruction,
                                    const std::optional<Tensor>& source_image, int height, int width)>;

/// Exact posterior-mean noise predictor for data x0 ~ N(mu, sigma^2 I):
///   eps_hat = sqrt(1 - abar) (x_t - sqrt(abar) mu) / (abar sigma^2 + 1 - abar)
/// This is the minimiser of the usual denoising objective for Gaussian data.
class GaussianProvider final : public ScoreProvider {
 public:
  GaussianProvider(MeanFn mean_fn, double sigma, NoiseSchedule schedule);

  Tensor predict(const ScoreRequest& request) const override;
  std::string id() const override;

  /// The mean used for a request, resized to the latent shape.
  Tensor mean_for(const ScoreRequest& request) const;
  double sigma() const noexcept { return sigma_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  MeanFn mean_fn_;
  double sigma_;
  NoiseSchedule schedule_;
};

std::unique_ptr<GaussianProvider> gaussian_provider(MeanFn mean_fn, double sigma, NoiseSchedule schedule);

/// Guided noise for the dual-condition rule. When the weights collapse onto a
/// single slot with coefficient one (s_I = s_T = 1, or s_I = 1 and s_T = 0)
/// only that slot is queried and its prediction is returned unchanged.
Tensor guided_epsilon(const ScoreProvider& provider, const Tensor& x_t, int t,
                      const std::optional<std::string>& instruction, const Tensor& source_image,
                      const GuidanceWeights& w);

}  // namespace ig3d
