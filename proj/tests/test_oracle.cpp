#include <doctest.h>

#include <cmath>
#include <random>

#include "rlf/error.hpp"
#include "rlf/irparams.hpp"
#include "rlf/oracle.hpp"

using namespace rlf;

namespace {

VoxelScene make(SceneKind kind, Index3 dims) {
  SceneSpec spec;
  spec.kind = kind;
  spec.dims = dims;
  return build_scene(spec);
}

// Dense O(V^2) Dijkstra over an explicitly built adjacency list.
std::vector<double> reference_dijkstra(const VoxelScene& s, std::size_t start) {
  const std::size_t n = s.voxel_count();
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (std::size_t a = 0; a < n; ++a) {
    if (s.occupied(a)) continue;
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b || s.occupied(b)) continue;
      const Index3 d = s.voxel_of_index(a) - s.voxel_of_index(b);
      if (d.cwiseAbs().maxCoeff() == 1) adj[a].emplace_back(b, (s.center(a) - s.center(b)).norm());
    }
  }
  std::vector<double> dist(n, INFINITY);
  std::vector<bool> done(n, false);
  dist[start] = 0.0;
  for (;;) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!done[i] && std::isfinite(dist[i]) && (best == n || dist[i] < dist[best])) best = i;
    if (best == n) break;
    done[best] = true;
    for (const auto& [j, w] : adj[best]) dist[j] = std::min(dist[j], dist[best] + w);
  }
  return dist;
}

}  // namespace

TEST_CASE("geodesic distances on simple geometry") {
  const VoxelScene box = make(SceneKind::empty_box, {14, 4, 4});
  const FieldVolume f = geodesic_field(box, box.center(box.linear_index(1, 1, 1)));
  CHECK(f[box.linear_index(1, 1, 1)] == 0.0);
  CHECK(f[box.linear_index(11, 1, 1)] == 10.0);
  CHECK_FALSE(f.valid(box.linear_index(0, 0, 0)));
  CHECK_THROWS_AS(geodesic_field(box, {0.0, 0.0, 0.0}), Error);
}

TEST_CASE("geodesic field matches an independent Dijkstra behind a wall") {
  const VoxelScene wall = make(SceneKind::wall_with_aperture, {12, 4, 12});
  const std::size_t src = wall.linear_index(2, 1, 2);
  const FieldVolume f = geodesic_field(wall, wall.center(src));
  const auto ref = reference_dijkstra(wall, src);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (wall.occupied(i)) {
      CHECK_FALSE(f.valid(i));
      continue;
    }
    CHECK(f[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  // A shadowed receiver takes a detour.
  const std::size_t rcv = wall.linear_index(9, 1, 2);
  CHECK(f[rcv] > (wall.center(rcv) - wall.center(src)).norm() + 1.0);
}

TEST_CASE("geodesic invariants: lower bound, discretization bound, triangle inequality, reciprocity") {
  const VoxelScene s = make(SceneKind::wall_with_aperture, {16, 4, 16});
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < s.voxel_count(); ++i)
    if (!s.occupied(i)) free.push_back(i);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
  std::vector<std::size_t> sources;
  for (int t = 0; t < 12; ++t) sources.push_back(free[pick(rng)]);
  std::vector<FieldVolume> fields;
  for (auto a : sources) fields.push_back(geodesic_field(s, s.center(a)));

  double worst_ratio = 1.0;
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const auto a = sources[si];
    for (auto b : free) {
      const double straight = (s.center(a) - s.center(b)).norm();
      const double geo = fields[si][b];
      CHECK(geo >= straight - 1e-12);
      if (straight > 0.0 && line_of_sight(s, s.center(a), s.center(b)))
        worst_ratio = std::max(worst_ratio, geo / straight);
    }
    for (std::size_t sj = 0; sj < sources.size(); ++sj) {
      // Reciprocity between voxel-center sources.
      CHECK(std::abs(fields[si][sources[sj]] - fields[sj][a]) <= 1e-9);
      for (int t = 0; t < 20; ++t) {
        const auto c = free[pick(rng)];
        CHECK(fields[si][c] <= fields[si][sources[sj]] + fields[sj][c] + s.spacing() * std::sqrt(3.0));
      }
    }
  }
  // 26-neighbour paths overestimate straight lines by at most
  // max over directions of the octile-3D length ratio (about 1.128).
  CHECK(worst_ratio <= 1.1281);
}

TEST_CASE("synthetic level and decay fields") {
  const VoxelScene box = make(SceneKind::empty_box, {14, 4, 4});
  const Position a = box.center(box.linear_index(1, 1, 1));
  const FieldVolume geo = geodesic_field(box, a);
  const SyntheticFields f = synth_acoustic_fields(box, a, geo);
  CHECK(f.l_ds[box.linear_index(2, 1, 1)] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.l_ds[box.linear_index(11, 1, 1)] == doctest::Approx(-20.0).epsilon(1e-12));
  CHECK(f.l_er[box.linear_index(11, 1, 1)] == doctest::Approx(-10.0 - 10.0).epsilon(1e-12));
  CHECK(f.l_ds[box.linear_index(1, 1, 1)] == doctest::Approx(0.0));  // clamped at one spacing

  SceneSpec spec;
  spec.kind = SceneKind::coupled_rooms;
  spec.dims = {16, 4, 16};
  const VoxelScene rooms = build_scene(spec);
  const auto& reg = rooms.regions();
  REQUIRE(reg.size() == 2);
  const Position src = rooms.center(rooms.linear_index(3, 1, 3));
  const SyntheticFields g = synth_acoustic_fields(rooms, src, geodesic_field(rooms, src));
  for (std::size_t i = 0; i < rooms.voxel_count(); ++i) {
    if (!g.tau_lr.valid(i)) continue;
    const auto r = rooms.region_of(i);
    const double expected = r == 0 ? reg[0].tau_lr : 0.5 * (reg[0].tau_lr + reg[1].tau_lr);
    CHECK(g.tau_lr[i] == expected);
    CHECK(g.tau_er[i] == (r == 0 ? reg[0].tau_er : 0.5 * (reg[0].tau_er + reg[1].tau_er)));
  }
  // Reciprocal by construction.
  const Position b = rooms.center(rooms.linear_index(12, 1, 10));
  const SyntheticFields h = synth_acoustic_fields(rooms, b, geodesic_field(rooms, b));
  const auto ia = rooms.linear_index(3, 1, 3), ib = rooms.linear_index(12, 1, 10);
  CHECK(g.l_ds[ib] == doctest::Approx(h.l_ds[ia]).epsilon(1e-12));
  CHECK(g.l_er[ib] == doctest::Approx(h.l_er[ia]).epsilon(1e-12));
  CHECK(g.tau_lr[ib] == h.tau_lr[ia]);
}

TEST_CASE("synthetic impulse responses") {
  AcousticParamSet p;
  p.path_distance = 34.3;
  p.l_ds = -6.02;
  SyntheticIRConfig cfg;
  cfg.noise = false;
  const ImpulseResponse ir = synth_ir(p, cfg);
  const WindowConfig win;
  const Arrival a = arrival_and_distance(ir, win);
  CHECK(a.time == doctest::Approx(0.1).epsilon(1e-12));
  const double e = std::pow(10.0, window_level(ir, {a.time, a.time + win.ds_length}) / 10.0);
  CHECK(e == doctest::Approx(0.25).epsilon(1e-3));

  cfg.noise = true;
  p.path_distance = 5.0;
  p.tau_lr = 1.0;
  const ImpulseResponse noisy = synth_ir(p, cfg);
  const double t = arrival_and_distance(noisy, win).time;
  const SchroederCurve s = schroeder_curve(noisy);
  const double tau = decay_time(s, {t + win.lr_begin, t + win.lr_end}, DecayMethod::linear_regression);
  CHECK(-60.0 / tau == doctest::Approx(-60.0).epsilon(0.03));

  cfg.duration = 0.5;
  CHECK_THROWS_AS(synth_ir(p, cfg), Error);
}
