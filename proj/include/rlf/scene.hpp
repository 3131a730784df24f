#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rlf/types.hpp"

namespace rlf {

enum class SceneKind {
  empty_box,
  wall_with_aperture,
  maze,
  coupled_rooms,
  cylinder_forest,
};

std::string_view to_string(SceneKind kind);
SceneKind scene_kind_from_string(std::string_view name);

/// Synthetic acoustics of one annotated region, consumed by the oracle.
struct RegionAcoustics {
  double er_level_db = -10.0;  // early-reflection level offset at unit distance
  double tau_er = 0.3;         // s
  double tau_lr = 0.8;         // s
};

struct SceneSpec {
  SceneKind kind = SceneKind::empty_box;
  Index3 dims{8, 4, 8};
  double spacing = 1.0;
  Vec3 origin = Vec3::Zero();
  std::uint64_t seed = 0;

  // wall-with-aperture / coupled-rooms
  int aperture_width = 1;
  // cylinder-forest
  double cylinder_radius = 1.0;  // voxels
  int cylinder_pitch = 5;        // voxels between lattice points

  /// Acoustics per region id; empty means the kind's defaults.
  std::vector<RegionAcoustics> regions;
};

/// Axis-aligned occupancy grid. Voxel (i, j, k) has its center at
/// origin + spacing * (i, j, k); x varies fastest in linear indexing.
/// Immutable after construction.
class VoxelScene {
 public:
  VoxelScene() = default;
  VoxelScene(Index3 dims, double spacing, Vec3 origin,
             std::vector<std::uint8_t> occupancy,
             std::vector<std::uint8_t> region_ids,
             std::vector<RegionAcoustics> regions, SceneKind kind = SceneKind::empty_box,
             std::uint64_t seed = 0);

  const Index3& dims() const { return dims_; }
  double spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  SceneKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t voxel_count() const { return occupancy_.size(); }
  std::size_t free_count() const { return free_count_; }

  std::size_t linear_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_.x()) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_.y()) * k);
  }
  std::size_t linear_index(const Index3& v) const {
    return linear_index(v.x(), v.y(), v.z());
  }
  Index3 voxel_of_index(std::size_t idx) const;

  bool in_grid(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_.x() && j < dims_.y() && k < dims_.z();
  }
  bool in_grid(const Index3& v) const { return in_grid(v.x(), v.y(), v.z()); }

  bool occupied(std::size_t idx) const { return occupancy_[idx] != 0; }
  bool occupied(int i, int j, int k) const { return occupancy_[linear_index(i, j, k)] != 0; }
  bool occupied(const Index3& v) const { return occupied(v.x(), v.y(), v.z()); }

  Vec3 center(const Index3& v) const { return origin_ + spacing_ * v.cast<double>(); }
  Vec3 center(std::size_t idx) const { return center(voxel_of_index(idx)); }

  /// Continuous grid coordinates: voxel v spans [v, v + 1) on each axis.
  Vec3 to_grid(const Position& p) const {
    return (p - origin_) / spacing_ + Vec3::Constant(0.5);
  }
  /// Voxel containing p, or nullopt-like (-1,-1,-1) when outside.
  Index3 voxel_at(const Position& p) const;
  bool inside_bounds(const Position& p) const;
  bool in_free_voxel(const Position& p) const;

  Vec3 bbox_min() const { return origin_ - Vec3::Constant(0.5 * spacing_); }
  Vec3 bbox_max() const { return origin_ + spacing_ * (dims_.cast<double>() - Vec3::Constant(0.5)); }
  /// Length of the bounding-box diagonal in meters.
  double diagonal() const { return spacing_ * dims_.cast<double>().norm(); }

  const std::vector<std::uint8_t>& occupancy() const { return occupancy_; }
  const std::vector<std::uint8_t>& region_ids() const { return region_ids_; }
  const std::vector<RegionAcoustics>& regions() const { return regions_; }
  std::uint8_t region_of(std::size_t idx) const { return region_ids_[idx]; }

  /// Copy with every obstacle removed (same dims, regions kept).
  VoxelScene without_obstacles() const;

 private:
  Index3 dims_{0, 0, 0};
  double spacing_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  SceneKind kind_ = SceneKind::empty_box;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> occupancy_;
  std::vector<std::uint8_t> region_ids_;
  std::vector<RegionAcoustics> regions_;
  std::size_t free_count_ = 0;
};

/// Builds one of the five synthetic scenes. Every kind carries an occupied
/// boundary shell; obstacles span the full interior height.
VoxelScene build_scene(const SceneSpec& spec);

/// True iff the open segment p->q meets no occupied voxel. Voxels whose closed
/// cube the segment only grazes (edge or corner ties) count as blocking.
/// Symmetric in (p, q) bit-for-bit.
bool line_of_sight(const VoxelScene& scene, const Position& p, const Position& q);

/// mask[v] = line_of_sight(p, center(v)) for free voxels, false for occupied.
std::vector<std::uint8_t> visible_voxels(const VoxelScene& scene, const Position& p);

/// Indices of all voxels reachable from `start` over 26-connected free voxels.
std::vector<std::uint8_t> flood_fill(const VoxelScene& scene, std::size_t start);

}  // namespace rlf
