#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ig3d/camera.hpp"
#include "ig3d/diffusion.hpp"
#include "ig3d/grid.hpp"
#include "ig3d/render.hpp"

namespace ig3d {

// ---------------------------------------------------------------------------
// Latent codec: stand-in for the image encoder of a latent diffusion model.

class Codec {
 public:
  enum class Kind { kIdentity, kAvgPool };

  static Codec identity() { return Codec(Kind::kIdentity, 1); }
  /// k x k mean pooling; k in {2, 4, 8}.
  static Codec avgpool(int k);

  Kind kind() const noexcept { return kind_; }
  int downscale() const noexcept { return k_; }
  std::string name() const;

  Tensor encode(const Tensor& image) const;
  /// Nearest-neighbour upsampling back to pixel resolution.
  Tensor decode(const Tensor& latent) const;
  /// Transpose of encode: spreads each latent gradient evenly over its window.
  Tensor encode_adjoint(const Tensor& latent_grad) const;

 private:
  Codec(Kind kind, int k) : kind_(kind), k_(k) {}

  Kind kind_;
  int k_;
};

/// Accepts "identity", "avgpool2", "avgpool(4)", ...
Codec make_codec(const std::string& kind);

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;

  void reset() {
    m.clear();
    v.clear();
    step = 0;
  }
};

/// One bias-corrected Adam step in place. Moment buffers are allocated on the
/// first call and must keep matching `params` afterwards.
void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads, double lr);

/// Adam over both value arrays of a grid.
struct GridAdam {
  AdamState density;
  AdamState color;

  void reset() {
    density.reset();
    color.reset();
  }
  void step(VoxelGrid& grid, const GridGrad& grad, double lr_density, double lr_color);
};

// ---------------------------------------------------------------------------
// Conversion.

struct ConvertConfig {
  enum class Scaling { kDynamic, kProgressive, kNone };

  int iterations = 2000;
  GuidanceWeights guidance{5.0, 100.0};
  Scaling scaling = Scaling::kDynamic;
  int scaling_factor = 4;  // l
  int interval = 150;
  /// Start divisor when scaling == kProgressive.
  int progressive_divisor = 16;
  /// Timestep sampling range as fractions of T.
  double t_min = 1e-3;
  double t_max = 1.0;
  double lr_density = 0.1;
  double lr_color = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_epsilon = 1e-8;
  std::string codec = "identity";
  CameraDistribution cameras;
  RenderParams render;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Integer timestep range [lo, hi] implied by t_min/t_max.
std::pair<int, int> timestep_range(const ConvertConfig& config, const NoiseSchedule& schedule);

/// Per-latent SDS gradient w(t) (eps_guided - eps) for a given draw.
Tensor sds_latent_gradient(const Tensor& latent, const Tensor& source_image,
                           const std::optional<std::string>& instruction, const ScoreProvider& provider,
                           const NoiseSchedule& schedule, const GuidanceWeights& guidance, int t, const Tensor& eps);

struct SdsStepResult {
  GridGrad grad;
  int t = 0;
  Camera camera;
  double weight = 0.0;        // w(t)
  double residual_rms = 0.0;  // rms of eps_guided - eps
  Tensor source_image;
  Tensor target_image;
};

/// One iteration of the conversion loop, without the optimizer update.
SdsStepResult sds_step(const VoxelGrid& target, const VoxelGrid& source, const std::optional<std::string>& instruction,
                       const ConvertConfig& config, const Codec& codec, const ScoreProvider& provider,
                       const NoiseSchedule& schedule, std::mt19937_64& rng, int iteration = 0);

struct ConvertProgress {
  int iteration = 0;
  const VoxelGrid* target = nullptr;
  const SdsStepResult* step = nullptr;
  bool resampled = false;
};

struct ConvertResult {
  VoxelGrid target;
  std::optional<ScalingSchedule> schedule;
};

/// The scaling plan convert() will follow for a source at `base`.
std::optional<ScalingSchedule> conversion_schedule(const ConvertConfig& config, Resolution base);

ConvertResult convert(const VoxelGrid& source, const std::optional<std::string>& instruction,
                      const ConvertConfig& config, const ScoreProvider& provider, const NoiseSchedule& schedule,
                      const std::function<void(const ConvertProgress&)>& on_iteration = {});

}  // namespace ig3d
