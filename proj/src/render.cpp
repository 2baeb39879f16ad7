#include "ig3d/render.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "ig3d/error.hpp"

namespace ig3d {

double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) {
  y = std::max(y, 1e-300);
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double inverse_sigmoid(double y) {
  y = std::clamp(y, 1e-300, 1.0 - 1e-16);
  return std::log(y) - std::log1p(-y);
}

void RenderParams::validate() const {
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ValidationError("step_size must be positive");
  for (double c : background) {
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("background components must lie in [0, 1]");
  }
  if (max_samples <= 0) throw ValidationError("max_samples must be positive");
  if (threads <= 0) throw ValidationError("threads must be positive");
}

double effective_step(const VoxelGrid& grid, const RenderParams& params) {
  return params.step_size > 0.0 ? params.step_size : 0.5 * grid.cell_size().minCoeff();
}

namespace {

struct SampleRecord {
  Footprint footprint;
  double alpha;
  double transmittance;  // before this sample
  double dsigma_draw;    // d softplus / d raw
  std::array<double, 3> color;
};

int sample_count(const Ray& ray, double step, int max_samples) {
  if (!ray.hit) return 0;
  // Midpoints strictly before t_far: count = ceil(L / step - 0.5).
  const double span = ray.t_far - ray.t_near;
  int n = static_cast<int>(std::ceil(span / step - 0.5));
  while (n > 0 && ray.t_near + (n - 0.5) * step >= ray.t_far) --n;
  return std::clamp(n, 0, max_samples);
}

/// Forward march; fills `records` when non-null.
RayResult march(const VoxelGrid& grid, const Ray& ray, const RenderParams& params, double step,
                std::vector<SampleRecord>* records) {
  RayResult out;
  const int n = sample_count(ray, step, params.max_samples);
  double trans = 1.0;
  if (records) records->clear();
  for (int i = 0; i < n; ++i) {
    const double t = ray.t_near + (i + 0.5) * step;
    const GridSample s = sample_trilinear(grid, ray.origin + t * ray.direction);
    const double pre = s.density + params.density_bias;
    const double sigma = softplus(pre);
    const double alpha = -std::expm1(-sigma * step);
    const std::array<double, 3> c{sigmoid(s.color[0]), sigmoid(s.color[1]), sigmoid(s.color[2])};
    const double w = trans * alpha;
    for (int ch = 0; ch < 3; ++ch) out.rgb[ch] += w * c[ch];
    out.depth += w * t;
    if (records) records->push_back({s.footprint, alpha, trans, sigmoid(pre), c});
    trans *= 1.0 - alpha;
  }
  for (int ch = 0; ch < 3; ++ch) out.rgb[ch] += trans * params.background[ch];
  out.depth += trans * (ray.hit ? ray.t_far : 0.0);
  out.opacity = 1.0 - trans;
  out.samples = n;
  return out;
}

void require_finite_grid(const VoxelGrid& grid) {
  if (auto bad = grid.find_non_finite()) {
    const auto ijk = grid.coords(*bad);
    throw RuntimeFailure("non-finite grid value at vertex (" + std::to_string(ijk[0]) + ", " +
                         std::to_string(ijk[1]) + ", " + std::to_string(ijk[2]) + ")");
  }
}

template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    fn(0, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, w * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

RayResult render_ray(const VoxelGrid& grid, const Ray& ray, const RenderParams& params) {
  params.validate();
  require_finite_grid(grid);
  return march(grid, ray, params, effective_step(grid, params), nullptr);
}

RenderOutput render_rays(const VoxelGrid& grid, std::vector<Ray> rays, const RenderParams& params) {
  params.validate();
  require_finite_grid(grid);
  if (rays.empty()) throw ValidationError("cannot render an empty ray batch");
  RenderOutput out;
  out.width = static_cast<int>(rays.size());
  out.height = 1;
  for (auto& r : rays) clip_to_box(r, grid.bbox());
  out.rgb = Tensor(3, 1, out.width);
  out.opacity.assign(rays.size(), 0.0);
  out.depth.assign(rays.size(), 0.0);
  const double step = effective_step(grid, params);
  const std::size_t plane = rays.size();
  parallel_chunks(rays.size(), params.threads, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const RayResult r = march(grid, rays[p], params, step, nullptr);
      for (int ch = 0; ch < 3; ++ch) out.rgb.data[ch * plane + p] = r.rgb[ch];
      out.opacity[p] = r.opacity;
      out.depth[p] = r.depth;
    }
  });
  out.tape.grid = std::make_shared<const VoxelGrid>(grid);
  out.tape.rays = std::move(rays);
  out.tape.params = params;
  return out;
}

RenderOutput render_image(const VoxelGrid& grid, const Camera& camera, const RenderParams& params) {
  RenderOutput out = render_rays(grid, rays_for_camera(camera), params);
  out.width = camera.width;
  out.height = camera.height;
  out.rgb.height = camera.height;
  out.rgb.width = camera.width;
  return out;
}

GridGrad render_backward(const RenderOutput& output, const Tensor& d_rgb) {
  const RenderTape& tape = output.tape;
  if (!tape.grid) throw ShapeMismatchError("render output carries no tape");
  if (d_rgb.channels != 3 || d_rgb.height != output.height || d_rgb.width != output.width ||
      tape.rays.size() != static_cast<std::size_t>(output.width) * output.height) {
    throw ShapeMismatchError("d_rgb shape " + d_rgb.shape_string() + " does not match render output 3x" +
                             std::to_string(output.height) + "x" + std::to_string(output.width));
  }
  const VoxelGrid& grid = *tape.grid;
  const RenderParams& params = tape.params;
  const double step = effective_step(grid, params);
  const std::size_t plane = tape.rays.size();

  const int workers = std::max(1, std::min<int>(params.threads, static_cast<int>(plane)));
  std::vector<GridGrad> partial(workers, GridGrad(grid.resolution()));
  parallel_chunks(plane, workers, [&](int w, std::size_t begin, std::size_t end) {
    GridGrad& grad = partial[w];
    std::vector<SampleRecord> records;
    for (std::size_t p = begin; p < end; ++p) {
      const std::array<double, 3> g{d_rgb.data[p], d_rgb.data[plane + p], d_rgb.data[2 * plane + p]};
      if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0) continue;
      march(grid, tape.rays[p], params, step, &records);
      // Colour seen just behind the current sample, composited back to front.
      std::array<double, 3> behind = params.background;
      for (auto it = records.rbegin(); it != records.rend(); ++it) {
        const SampleRecord& s = *it;
        const double w = s.transmittance * s.alpha;
        std::array<double, 3> d_color{};
        double d_alpha = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          d_color[ch] = w * g[ch] * s.color[ch] * (1.0 - s.color[ch]);
          d_alpha += s.transmittance * g[ch] * (s.color[ch] - behind[ch]);
        }
        const double d_density = d_alpha * step * (1.0 - s.alpha) * s.dsigma_draw;
        accumulate_sample_grad(grad, s.footprint, d_density, d_color);
        for (int ch = 0; ch < 3; ++ch) behind[ch] = s.alpha * s.color[ch] + (1.0 - s.alpha) * behind[ch];
      }
    }
  });
  GridGrad total = std::move(partial.front());
  for (std::size_t w = 1; w < partial.size(); ++w) total += partial[w];
  return total;
}

}  // namespace ig3d
