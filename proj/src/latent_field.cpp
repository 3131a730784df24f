#include "rlf/latent_field.hpp"

#include <cmath>
#include <random>

#include "rlf/error.hpp"

namespace rlf {

LatentGrid make_latent_grid(const VoxelScene& scene, int n, const LatentInit& init) {
  if (n < 1) throw Error(ErrorKind::config, "latent dimension must be >= 1");
  LatentGrid g;
  g.dims = scene.dims();
  g.n = n;
  g.spacing = scene.spacing();
  g.origin = scene.origin();
  g.values.resize(n, static_cast<Eigen::Index>(scene.voxel_count()));

  const Vec3 mid = 0.5 * (scene.bbox_min() + scene.bbox_max());
  std::mt19937_64 rng(init.seed);
  std::uniform_real_distribution<double> noise(-init.noise, init.noise);
  for (std::size_t v = 0; v < scene.voxel_count(); ++v) {
    const Vec3 c = (scene.center(v) - mid) * init.coord_scale;
    for (int k = 0; k < n; ++k) {
      const double r = noise(rng);
      if (k < 3)
        g.values(k, static_cast<Eigen::Index>(v)) = c[k];
      else if (k == 3 && init.bias_channel)
        g.values(k, static_cast<Eigen::Index>(v)) = 1.0;
      else
        g.values(k, static_cast<Eigen::Index>(v)) = r;
    }
  }
  return g;
}

InterpWeights interp_weights(const VoxelScene& scene, const Position& p) {
  if (!scene.in_free_voxel(p))
    throw Error(ErrorKind::input, "interpolation point must lie in a free voxel");

  const Index3& dims = scene.dims();
  // Vertex coordinates: vertex i sits at grid coordinate i.
  const Vec3 g = (p - scene.origin()) / scene.spacing();
  Index3 base;
  Vec3 frac;
  for (int ax = 0; ax < 3; ++ax) {
    int b = static_cast<int>(std::floor(g[ax]));
    b = std::clamp(b, 0, dims[ax] - 2);
    base[ax] = b;
    frac[ax] = std::clamp(g[ax] - b, 0.0, 1.0);
  }

  InterpWeights out;
  double total = 0.0;
  for (int c = 0; c < 8; ++c) {
    const Index3 off((c & 1) ? 1 : 0, (c & 2) ? 1 : 0, (c & 4) ? 1 : 0);
    double w = 1.0;
    for (int ax = 0; ax < 3; ++ax) w *= off[ax] ? frac[ax] : 1.0 - frac[ax];
    if (w <= 0.0) continue;
    const Index3 v = base + off;
    if (scene.occupied(v)) continue;
    const auto idx = scene.linear_index(v);
    if (!line_of_sight(scene, scene.center(v), p)) continue;
    out.corners[out.count] = idx;
    out.weights[out.count] = w;
    ++out.count;
    total += w;
  }
  if (out.count > 0 && total > 0.0) {
    for (int c = 0; c < out.count; ++c) out.weights[c] /= total;
    return out;
  }

  // Fallback: nearest visible vertex within two shells around the nearest vertex.
  Index3 nearest;
  for (int ax = 0; ax < 3; ++ax)
    nearest[ax] = std::clamp(static_cast<int>(std::lround(g[ax])), 0, dims[ax] - 1);
  for (int shell = 1; shell <= 2; ++shell) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = SIZE_MAX;
    for (int dk = -shell; dk <= shell; ++dk)
      for (int dj = -shell; dj <= shell; ++dj)
        for (int di = -shell; di <= shell; ++di) {
          const Index3 v = nearest + Index3(di, dj, dk);
          if (!scene.in_grid(v) || scene.occupied(v)) continue;
          const auto idx = scene.linear_index(v);
          const double d = (scene.center(v) - p).squaredNorm();
          if (d > best || (d == best && idx >= best_idx)) continue;
          if (!line_of_sight(scene, scene.center(v), p)) continue;
          best = d;
          best_idx = idx;
        }
    if (best_idx != SIZE_MAX) {
      InterpWeights w = vertex_weights(best_idx);
      w.fallback = true;
      return w;
    }
  }
  throw Error(ErrorKind::isolation, "no visible grid vertex within two shells of query point");
}

InterpResult interp_latent(const LatentGrid& grid, const VoxelScene& scene, const Position& p) {
  if (grid.dims != scene.dims())
    throw Error(ErrorKind::config, "latent grid dims do not match the scene");
  InterpResult r;
  r.weights = interp_weights(scene, p);
  r.latent = gather(grid.values, r.weights);
  return r;
}

SparseGridGradient interp_backward(const InterpResult& result,
                                   const Eigen::Ref<const VectorXd>& upstream) {
  SparseGridGradient out;
  out.reserve(static_cast<std::size_t>(result.weights.count));
  for (int c = 0; c < result.weights.count; ++c)
    out.emplace_back(result.weights.corners[c], result.weights.weights[c] * upstream);
  return out;
}

void interp_backward(const InterpWeights& weights, const Eigen::Ref<const VectorXd>& upstream,
                     MatrixXd& grad) {
  for (int c = 0; c < weights.count; ++c)
    grad.col(static_cast<Eigen::Index>(weights.corners[c])).noalias() +=
        weights.weights[c] * upstream;
}

}  // namespace rlf
