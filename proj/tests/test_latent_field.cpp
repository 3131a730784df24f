#include <doctest.h>

#include <random>

#include "rlf/error.hpp"
#include "rlf/latent_field.hpp"

using namespace rlf;

namespace {

VoxelScene make(SceneKind kind, Index3 dims) {
  SceneSpec spec;
  spec.kind = kind;
  spec.dims = dims;
  return build_scene(spec);
}

}  // namespace

TEST_CASE("grid initialization") {
  const VoxelScene box = make(SceneKind::empty_box, {8, 4, 8});
  const LatentGrid g = make_latent_grid(box, 6, {});
  CHECK(g.values.rows() == 6);
  CHECK(g.values.cols() == 256);
  const Vec3 mid = 0.5 * (box.bbox_min() + box.bbox_max());
  const auto v = box.linear_index(2, 1, 5);
  CHECK((g.values.col(v).head<3>() - (box.center(v) - mid)).norm() < 1e-12);
  CHECK(g.values(3, v) == 1.0);
  CHECK(g.values.bottomRows(2).cwiseAbs().maxCoeff() <= 0.01);
  CHECK_THROWS_AS(make_latent_grid(box, 0, {}), Error);
}

TEST_CASE("interpolation weights in open space") {
  const VoxelScene box = make(SceneKind::empty_box, {8, 4, 8});
  const LatentGrid g = make_latent_grid(box, 4, {});
  const auto v = box.linear_index(3, 1, 3);
  const InterpResult at = interp_latent(g, box, box.center(v));
  CHECK(at.weights.count == 1);
  CHECK(at.weights.corners[0] == v);
  CHECK(at.latent == g.values.col(v));

  const InterpResult mid = interp_latent(g, box, box.center(v) + Vec3::Constant(0.5));
  CHECK(mid.weights.count == 8);
  for (int c = 0; c < 8; ++c) CHECK(mid.weights.weights[c] == doctest::Approx(0.125));
  CHECK_THROWS_AS(interp_weights(box, {0.0, 0.0, 0.0}), Error);
}

TEST_CASE("masked interpolation next to a wall") {
  const VoxelScene wall = make(SceneKind::wall_with_aperture, {16, 4, 16});
  LatentGrid g = make_latent_grid(wall, 4, {});
  // Cell between x = 7 (free) and x = 8 (wall); the upper-x corners are occupied.
  const Position p = wall.center(wall.linear_index(7, 1, 3)) + Vec3(0.4, 0.5, 0.5);
  const InterpResult r = interp_latent(g, wall, p);
  CHECK(r.weights.count == 4);
  // Hand computation: lower-x corners carry (0.6 * 0.5 * 0.5) each, renormalized.
  for (int c = 0; c < r.weights.count; ++c) {
    CHECK(wall.voxel_of_index(r.weights.corners[c]).x() == 7);
    CHECK(r.weights.weights[c] == doctest::Approx(0.25));
  }
  double sum = 0.0;
  for (int c = 0; c < r.weights.count; ++c) sum += r.weights.weights[c];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // Far-side latents never leak into near-side interpolation.
  const VectorXd before = r.latent;
  for (std::size_t i = 0; i < wall.voxel_count(); ++i)
    if (wall.voxel_of_index(i).x() > 8) g.values.col(static_cast<Eigen::Index>(i)).setConstant(1e6);
  const InterpResult after = interp_latent(g, wall, p);
  CHECK(after.latent == before);
}

TEST_CASE("interpolation is multilinear within a cell") {
  const VoxelScene box = make(SceneKind::empty_box, {8, 4, 8});
  const LatentGrid g = make_latent_grid(box, 5, {.seed = 3});
  const Position base = box.center(box.linear_index(2, 1, 2)) + Vec3(0.1, 0.3, 0.4);
  for (int ax = 0; ax < 3; ++ax) {
    const Vec3 e = Vec3::Unit(ax) * 0.2;
    const VectorXd f0 = interp_latent(g, box, base).latent;
    const VectorXd f1 = interp_latent(g, box, base + e).latent;
    const VectorXd f2 = interp_latent(g, box, base + 2.0 * e).latent;
    CHECK((f2 - 2.0 * f1 + f0).norm() < 1e-12);
  }
}

TEST_CASE("backward pass is the adjoint of interpolation") {
  const VoxelScene wall = make(SceneKind::wall_with_aperture, {16, 4, 16});
  const LatentGrid g = make_latent_grid(wall, 3, {.seed = 2});
  const auto v = wall.linear_index(4, 1, 4);
  const InterpResult one = interp_latent(g, wall, wall.center(v));
  const auto single = interp_backward(one, Eigen::Vector3d(1, 2, 3));
  REQUIRE(single.size() == 1);
  CHECK(single[0].first == v);
  CHECK(single[0].second == Eigen::Vector3d(1, 2, 3));

  const InterpResult eight = interp_latent(g, wall, wall.center(v) + Vec3::Constant(0.5));
  for (const auto& [idx, grad] : interp_backward(eight, Eigen::Vector3d(8, 8, 8)))
    CHECK(grad.isApprox(Eigen::Vector3d(1, 1, 1)));

  // Finite differences of J(theta) = c . f(p) against the sparse gradient.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const Eigen::Vector3d c(0.3, -1.1, 0.7);
  for (int t = 0; t < 20; ++t) {
    const Position p = wall.center(wall.linear_index(7, 1, 3 + t % 8)) + Vec3(u(rng), u(rng), u(rng));
    const InterpResult r = interp_latent(g, wall, p);
    for (const auto& [idx, grad] : interp_backward(r, c)) {
      for (int k = 0; k < 3; ++k) {
        LatentGrid gp = g, gm = g;
        const double h = 1e-6;
        gp.values(k, static_cast<Eigen::Index>(idx)) += h;
        gm.values(k, static_cast<Eigen::Index>(idx)) -= h;
        const double fd = (c.dot(interp_latent(gp, wall, p).latent) - c.dot(interp_latent(gm, wall, p).latent)) / (2 * h);
        CHECK(fd == doctest::Approx(grad[k]).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("a sealed one-voxel pocket interpolates from its own vertex only") {
  const Index3 dims{5, 5, 5};
  std::vector<std::uint8_t> occ(125, 1);
  occ[2 + 5 * (2 + 5 * 2)] = 0;
  const VoxelScene pocket(dims, 1.0, Vec3::Zero(), occ, {}, {{}});
  const InterpWeights w = interp_weights(pocket, {2.3, 2.2, 1.8});
  CHECK(w.count == 1);
  CHECK(w.corners[0] == pocket.linear_index(2, 2, 2));
}
