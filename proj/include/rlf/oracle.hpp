#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "rlf/scene.hpp"
#include "rlf/types.hpp"

namespace rlf {

enum class FieldKind : std::uint32_t {
  path_distance = 0,  // m
  level = 1,          // dB
  decay_time = 2,     // s
  doa = 3,            // unit 3-vector
};

std::string_view to_string(FieldKind kind);

inline constexpr double kSentinel = std::numeric_limits<double>::quiet_NaN();
inline bool is_valid(double v) { return !std::isnan(v); }

/// One field over every voxel of a scene for a fixed source. Occupied or
/// unreachable voxels hold kSentinel. DOA fields store 3 values per voxel.
struct FieldVolume {
  Index3 dims{0, 0, 0};
  FieldKind kind = FieldKind::path_distance;
  Position source = Position::Zero();
  std::vector<double> values;

  int components() const { return kind == FieldKind::doa ? 3 : 1; }
  std::size_t voxel_count() const { return static_cast<std::size_t>(dims.prod()); }
  double operator[](std::size_t idx) const { return values[idx]; }
  bool valid(std::size_t idx) const { return is_valid(values[idx * components()]); }
  Vec3 vector_at(std::size_t idx) const {
    return {values[3 * idx], values[3 * idx + 1], values[3 * idx + 2]};
  }

  static FieldVolume filled(const Index3& dims, FieldKind kind, const Position& source,
                            double value = kSentinel);
};

/// Shortest 26-connected free-voxel path length (Euclidean edge weights) from
/// the source to every voxel center. Throws ErrorKind::input when the source
/// lies in an occupied voxel.
FieldVolume geodesic_field(const VoxelScene& scene, const Position& source);

/// Dijkstra predecessor map for the same graph (index of previous voxel, or
/// SIZE_MAX at the root / unreachable voxels).
std::vector<std::size_t> geodesic_predecessors(const VoxelScene& scene, const Position& source);

struct SyntheticFields {
  FieldVolume l_ds;
  FieldVolume l_er;
  FieldVolume tau_er;
  FieldVolume tau_lr;
};

/// Diffraction penalty applied to the direct level per meter of detour.
inline constexpr double kDetourPenaltyDbPerMeter = 1.0;

/// Level and decay fields with analytically known structure. Region terms are
/// averaged between the source and receiver regions, which keeps every field
/// reciprocal.
SyntheticFields synth_acoustic_fields(const VoxelScene& scene, const Position& source,
                                      const FieldVolume& geo);

/// Per-pair parameter bundle consumed by the renderer.
struct AcousticParamSet {
  double path_distance = 0.0;  // m
  double l_ds = 0.0;           // dB
  double l_er = 0.0;           // dB
  double tau_er = 0.3;         // s
  double tau_lr = 0.8;         // s
  double l_lr = 0.0;           // dB, derived
  Vec3 doa = Vec3::UnitX();
};

struct SyntheticIRConfig {
  double sample_rate = 16000.0;
  double duration = 2.0;       // s
  double emission_time = 0.0;  // t0, s
  double speed_of_sound = 343.0;
  std::uint64_t noise_seed = 1;
  bool noise = true;  // false: direct impulse only
};

struct ImpulseResponse;

/// Impulse response with a direct spike carrying 10^(L_DS/10) energy at
/// t0 + pi/c and a sign-randomized exponential tail: the ER segment holds
/// 10^(L_ER/10) energy decaying at tau_ER, continues at tau_ER through the
/// gap, then decays at tau_LR from the LR window start onward.
ImpulseResponse synth_ir(const AcousticParamSet& params, const SyntheticIRConfig& cfg);

}  // namespace rlf
