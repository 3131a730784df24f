#include "rlf/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <random>

#include "rlf/error.hpp"

namespace rlf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::no_arrival: return "no-arrival";
    case ErrorKind::zero_energy: return "zero-energy";
    case ErrorKind::undefined_decay: return "undefined-decay";
    case ErrorKind::degenerate_gradient: return "degenerate-gradient";
    case ErrorKind::isolation: return "isolation";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

namespace {

constexpr std::array<std::pair<SceneKind, std::string_view>, 5> kKindNames{{
    {SceneKind::empty_box, "empty-box"},
    {SceneKind::wall_with_aperture, "wall-with-aperture"},
    {SceneKind::maze, "maze"},
    {SceneKind::coupled_rooms, "coupled-rooms"},
    {SceneKind::cylinder_forest, "cylinder-forest"},
}};

std::vector<RegionAcoustics> default_regions(SceneKind kind) {
  switch (kind) {
    case SceneKind::wall_with_aperture:
      return {{-10.0, 0.3, 0.8}, {-8.0, 0.5, 1.2}};
    case SceneKind::coupled_rooms:
      // absorptive room coupled to a reflective one
      return {{-14.0, 0.15, 0.4}, {-4.0, 0.8, 1.8}};
    case SceneKind::cylinder_forest:
      return {{-16.0, 0.2, 0.6}};
    case SceneKind::maze:
      return {{-6.0, 0.4, 1.0}};
    case SceneKind::empty_box:
      break;
  }
  return {{-10.0, 0.3, 0.8}};
}

struct Builder {
  Index3 dims;
  std::vector<std::uint8_t> occ;
  std::vector<std::uint8_t> region;

  explicit Builder(const Index3& d)
      : dims(d),
        occ(static_cast<std::size_t>(d.prod()), 0),
        region(static_cast<std::size_t>(d.prod()), 0) {}

  std::size_t idx(int i, int j, int k) const {
    return static_cast<std::size_t>(i + dims.x() * (j + dims.y() * k));
  }
  void set(int i, int j, int k, bool v) { occ[idx(i, j, k)] = v ? 1 : 0; }

  void shell() {
    for (int k = 0; k < dims.z(); ++k)
      for (int j = 0; j < dims.y(); ++j)
        for (int i = 0; i < dims.x(); ++i)
          if (i == 0 || j == 0 || k == 0 || i == dims.x() - 1 || j == dims.y() - 1 ||
              k == dims.z() - 1)
            set(i, j, k, true);
  }
  // Fills the interior height at column (i, k).
  void column(int i, int k, bool v) {
    for (int j = 1; j < dims.y() - 1; ++j) set(i, j, k, v);
  }
  void regions_by_x(int split) {
    for (int k = 0; k < dims.z(); ++k)
      for (int j = 0; j < dims.y(); ++j)
        for (int i = 0; i < dims.x(); ++i) region[idx(i, j, k)] = i < split ? 0 : 1;
  }
};

int uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<int>(rng() % n);
}

void carve_maze(Builder& b, std::uint64_t seed) {
  // Cells on odd (x, z) coordinates; walls on even ones.
  const int cx = (b.dims.x() - 2) / 2;
  const int cz = (b.dims.z() - 2) / 2;
  for (int k = 1; k < b.dims.z() - 1; ++k)
    for (int i = 1; i < b.dims.x() - 1; ++i) b.column(i, k, true);
  if (cx < 1 || cz < 1) return;

  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(cx * cz), 0);
  std::vector<std::pair<int, int>> stack{{0, 0}};
  visited[0] = 1;
  b.column(1, 1, false);
  constexpr std::array<std::pair<int, int>, 4> kSteps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  while (!stack.empty()) {
    auto [x, z] = stack.back();
    std::array<int, 4> options{};
    int count = 0;
    for (int d = 0; d < 4; ++d) {
      const int nx = x + kSteps[d].first;
      const int nz = z + kSteps[d].second;
      if (nx >= 0 && nz >= 0 && nx < cx && nz < cz && !visited[nx + cx * nz]) options[count++] = d;
    }
    if (count == 0) {
      stack.pop_back();
      continue;
    }
    const int d = options[uniform_index(rng, count)];
    const int nx = x + kSteps[d].first;
    const int nz = z + kSteps[d].second;
    visited[nx + cx * nz] = 1;
    b.column(2 * x + 1 + kSteps[d].first, 2 * z + 1 + kSteps[d].second, false);
    b.column(2 * nx + 1, 2 * nz + 1, false);
    stack.emplace_back(nx, nz);
  }
}

}  // namespace

std::string_view to_string(SceneKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

SceneKind scene_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw Error(ErrorKind::config, "unknown scene kind '" + std::string(name) + "'");
}

VoxelScene::VoxelScene(Index3 dims, double spacing, Vec3 origin,
                       std::vector<std::uint8_t> occupancy,
                       std::vector<std::uint8_t> region_ids,
                       std::vector<RegionAcoustics> regions, SceneKind kind,
                       std::uint64_t seed)
    : dims_(dims),
      spacing_(spacing),
      origin_(origin),
      kind_(kind),
      seed_(seed),
      occupancy_(std::move(occupancy)),
      region_ids_(std::move(region_ids)),
      regions_(std::move(regions)) {
  if ((dims_.array() < 2).any())
    throw Error(ErrorKind::config, "scene dims must all be >= 2");
  if (!(spacing_ > 0.0) || !std::isfinite(spacing_))
    throw Error(ErrorKind::config, "scene spacing must be positive");
  const auto n = static_cast<std::size_t>(dims_.prod());
  if (occupancy_.size() != n)
    throw Error(ErrorKind::config, "occupancy length does not match dims");
  if (region_ids_.empty()) region_ids_.assign(n, 0);
  if (region_ids_.size() != n)
    throw Error(ErrorKind::config, "region map length does not match dims");
  free_count_ = static_cast<std::size_t>(std::count(occupancy_.begin(), occupancy_.end(), 0));
  if (free_count_ == 0) throw Error(ErrorKind::config, "scene has no free voxel");
}

Index3 VoxelScene::voxel_of_index(std::size_t idx) const {
  const auto nx = static_cast<std::size_t>(dims_.x());
  const auto ny = static_cast<std::size_t>(dims_.y());
  return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny),
          static_cast<int>(idx / (nx * ny))};
}

Index3 VoxelScene::voxel_at(const Position& p) const {
  const Vec3 g = to_grid(p);
  Index3 v(static_cast<int>(std::floor(g.x())), static_cast<int>(std::floor(g.y())),
           static_cast<int>(std::floor(g.z())));
  if (!in_grid(v)) return Index3::Constant(-1);
  return v;
}

bool VoxelScene::inside_bounds(const Position& p) const {
  return p.allFinite() && (p.array() >= bbox_min().array()).all() &&
         (p.array() <= bbox_max().array()).all();
}

bool VoxelScene::in_free_voxel(const Position& p) const {
  if (!inside_bounds(p)) return false;
  const Index3 v = voxel_at(p);
  return in_grid(v) && !occupied(v);
}

VoxelScene VoxelScene::without_obstacles() const {
  return VoxelScene(dims_, spacing_, origin_, std::vector<std::uint8_t>(occupancy_.size(), 0),
                    region_ids_, regions_, kind_, seed_);
}

VoxelScene build_scene(const SceneSpec& spec) {
  if ((spec.dims.array() < 2).any())
    throw Error(ErrorKind::config, "scene dims must all be >= 2");
  if (!(spec.spacing > 0.0) || !std::isfinite(spec.spacing))
    throw Error(ErrorKind::config, "scene spacing must be positive");

  Builder b(spec.dims);
  b.shell();
  const int nx = spec.dims.x();
  const int nz = spec.dims.z();

  switch (spec.kind) {
    case SceneKind::empty_box:
      break;
    case SceneKind::wall_with_aperture:
    case SceneKind::coupled_rooms: {
      if (spec.aperture_width < 1)
        throw Error(ErrorKind::config, "aperture width must be >= 1");
      const int wall = nx / 2;
      const int z0 = nz / 2 - (spec.aperture_width - 1) / 2;
      for (int k = 1; k < nz - 1; ++k) {
        const bool open = k >= z0 && k < z0 + spec.aperture_width;
        b.column(wall, k, !open);
      }
      b.regions_by_x(wall);
      break;
    }
    case SceneKind::maze:
      carve_maze(b, spec.seed);
      break;
    case SceneKind::cylinder_forest: {
      std::mt19937_64 rng(spec.seed);
      const double r = spec.cylinder_radius;
      const int pitch = std::max(spec.cylinder_pitch, 2);
      for (int cz = pitch / 2 + 1; cz < nz - 1; cz += pitch) {
        for (int cx = pitch / 2 + 1; cx < nx - 1; cx += pitch) {
          const double jx = (static_cast<double>(rng() % 1001) / 1000.0 - 0.5);
          const double jz = (static_cast<double>(rng() % 1001) / 1000.0 - 0.5);
          for (int k = 1; k < nz - 1; ++k)
            for (int i = 1; i < nx - 1; ++i) {
              const double dx = i - (cx + jx);
              const double dz = k - (cz + jz);
              if (dx * dx + dz * dz <= r * r) b.column(i, k, true);
            }
        }
      }
      break;
    }
  }

  auto regions = spec.regions.empty() ? default_regions(spec.kind) : spec.regions;
  const auto max_region = *std::max_element(b.region.begin(), b.region.end());
  if (max_region >= regions.size())
    throw Error(ErrorKind::config, "region annotation missing for region id " +
                                       std::to_string(static_cast<int>(max_region)));
  return VoxelScene(spec.dims, spec.spacing, spec.origin, std::move(b.occ), std::move(b.region),
                    std::move(regions), spec.kind, spec.seed);
}

namespace {

// Grid-space tolerance for treating two boundary crossings as simultaneous.
constexpr double kTieEps = 1e-9;

bool blocked(const VoxelScene& scene, const Index3& v) {
  return !scene.in_grid(v) || scene.occupied(v);
}

// Traverses the open segment a->b (grid coordinates) starting in voxel `start`.
bool traverse(const VoxelScene& scene, const Vec3& a, const Vec3& b, Index3 cur) {
  const Vec3 d = b - a;
  Index3 step;
  Vec3 t_max;
  Vec3 t_delta;
  for (int ax = 0; ax < 3; ++ax) {
    if (d[ax] > 0.0) {
      step[ax] = 1;
      t_max[ax] = (cur[ax] + 1 - a[ax]) / d[ax];
      t_delta[ax] = 1.0 / d[ax];
    } else if (d[ax] < 0.0) {
      step[ax] = -1;
      t_max[ax] = (cur[ax] - a[ax]) / d[ax];
      t_delta[ax] = -1.0 / d[ax];
    } else {
      step[ax] = 0;
      t_max[ax] = std::numeric_limits<double>::infinity();
      t_delta[ax] = std::numeric_limits<double>::infinity();
    }
  }
  if (blocked(scene, cur)) return false;
  for (;;) {
    const double t = t_max.minCoeff();
    if (!(t < 1.0 - kTieEps)) return true;
    std::array<int, 3> axes{};
    int count = 0;
    for (int ax = 0; ax < 3; ++ax)
      if (t_max[ax] <= t + kTieEps) axes[count++] = ax;
    // Edge or corner crossing: every voxel sharing the crossed edge/corner
    // touches the segment's closure and must be free.
    for (int mask = 1; mask < (1 << count); ++mask) {
      Index3 v = cur;
      for (int c = 0; c < count; ++c)
        if (mask & (1 << c)) v[axes[c]] += step[axes[c]];
      if (blocked(scene, v)) return false;
    }
    for (int c = 0; c < count; ++c) {
      cur[axes[c]] += step[axes[c]];
      t_max[axes[c]] += t_delta[axes[c]];
    }
  }
}

}  // namespace

bool line_of_sight(const VoxelScene& scene, const Position& p, const Position& q) {
  // Canonical order makes the result exactly symmetric.
  const bool swap = std::lexicographical_compare(q.data(), q.data() + 3, p.data(), p.data() + 3);
  const Position& from = swap ? q : p;
  const Position& to = swap ? p : q;

  if (!scene.in_free_voxel(from) || !scene.in_free_voxel(to)) return false;
  const Vec3 a = scene.to_grid(from);
  const Vec3 b = scene.to_grid(to);
  const Vec3 d = b - a;

  // Start voxel(s): the voxel entered immediately after t = 0. A segment lying
  // in a boundary plane touches the voxels on both sides of it.
  std::array<std::array<int, 2>, 3> choices{};
  std::array<int, 3> counts{};
  for (int ax = 0; ax < 3; ++ax) {
    const double fl = std::floor(a[ax]);
    const bool on_plane = a[ax] == fl;
    const int base = static_cast<int>(fl);
    if (!on_plane) {
      choices[ax][0] = base;
      counts[ax] = 1;
    } else if (d[ax] > 0.0) {
      choices[ax][0] = base;
      counts[ax] = 1;
    } else if (d[ax] < 0.0) {
      choices[ax][0] = base - 1;
      counts[ax] = 1;
    } else {
      choices[ax][0] = base - 1;
      choices[ax][1] = base;
      counts[ax] = 2;
    }
  }
  if (d.isZero(0.0)) return true;
  for (int i = 0; i < counts[0]; ++i)
    for (int j = 0; j < counts[1]; ++j)
      for (int k = 0; k < counts[2]; ++k)
        if (!traverse(scene, a, b, Index3(choices[0][i], choices[1][j], choices[2][k])))
          return false;
  return true;
}

std::vector<std::uint8_t> visible_voxels(const VoxelScene& scene, const Position& p) {
  std::vector<std::uint8_t> mask(scene.voxel_count(), 0);
  if (!scene.in_free_voxel(p)) return mask;
  for (std::size_t idx = 0; idx < mask.size(); ++idx) {
    if (scene.occupied(idx)) continue;
    mask[idx] = line_of_sight(scene, p, scene.center(idx)) ? 1 : 0;
  }
  return mask;
}

std::vector<std::uint8_t> flood_fill(const VoxelScene& scene, std::size_t start) {
  std::vector<std::uint8_t> seen(scene.voxel_count(), 0);
  if (scene.occupied(start)) return seen;
  std::deque<std::size_t> queue{start};
  seen[start] = 1;
  while (!queue.empty()) {
    const Index3 v = scene.voxel_of_index(queue.front());
    queue.pop_front();
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const Index3 w = v + Index3(di, dj, dk);
          if (!scene.in_grid(w) || scene.occupied(w)) continue;
          const auto wi = scene.linear_index(w);
          if (!seen[wi]) {
            seen[wi] = 1;
            queue.push_back(wi);
          }
        }
  }
  return seen;
}

}  // namespace rlf
