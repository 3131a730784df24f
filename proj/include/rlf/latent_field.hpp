#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "rlf/scene.hpp"
#include "rlf/types.hpp"

namespace rlf {

/// Trainable latent vectors, one per scene voxel center. Column v of `values`
/// is the latent of vertex v (x-fastest linear order).
struct LatentGrid {
  Index3 dims{0, 0, 0};
  int n = 0;
  double spacing = 1.0;
  Vec3 origin = Vec3::Zero();
  MatrixXd values;  // n x voxel_count

  std::size_t vertex_count() const { return static_cast<std::size_t>(values.cols()); }
};

struct LatentInit {
  /// Multiplier applied to the centered physical coordinates stored in the
  /// first three components (1 = meters).
  double coord_scale = 1.0;
  /// Component 3 is a constant 1 when n >= 4, acting as a bias input for
  /// the Riemannian metric layers.
  bool bias_channel = true;
  double noise = 0.01;
  std::uint64_t seed = 0;
};

LatentGrid make_latent_grid(const VoxelScene& scene, int n, const LatentInit& init = {});

/// Visibility-masked trilinear weights over the enclosing grid vertices.
struct InterpWeights {
  std::array<std::size_t, 8> corners{};
  std::array<double, 8> weights{};
  int count = 0;
  bool fallback = false;  // nearest-visible-vertex search was used
};

struct InterpResult {
  VectorXd latent;
  InterpWeights weights;
};

/// Weights for p: standard trilinear weights, with vertices that are occupied
/// or not in line of sight of p set to zero and the rest renormalized. When
/// every positive weight is masked, picks the nearest visible vertex within a
/// two-shell neighborhood. Throws ErrorKind::isolation if none exists and
/// ErrorKind::input if p is not in a free voxel.
InterpWeights interp_weights(const VoxelScene& scene, const Position& p);

/// Weight 1 on the vertex of a voxel center, without visibility tests.
inline InterpWeights vertex_weights(std::size_t vertex) {
  InterpWeights w;
  w.corners[0] = vertex;
  w.weights[0] = 1.0;
  w.count = 1;
  return w;
}

template <typename Derived>
VectorXd gather(const Eigen::MatrixBase<Derived>& values, const InterpWeights& w) {
  VectorXd out = VectorXd::Zero(values.rows());
  for (int c = 0; c < w.count; ++c) out.noalias() += w.weights[c] * values.col(w.corners[c]);
  return out;
}

InterpResult interp_latent(const LatentGrid& grid, const VoxelScene& scene, const Position& p);

/// Sparse adjoint of interp_latent: corner vertex -> weight * upstream.
using SparseGridGradient = std::vector<std::pair<std::size_t, VectorXd>>;

SparseGridGradient interp_backward(const InterpResult& result,
                                   const Eigen::Ref<const VectorXd>& upstream);

/// Dense-buffer variant used by training: grad.col(v) += w_v * upstream.
void interp_backward(const InterpWeights& weights, const Eigen::Ref<const VectorXd>& upstream,
                     MatrixXd& grad);

}  // namespace rlf
