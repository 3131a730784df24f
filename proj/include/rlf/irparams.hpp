#pragma once

#include <vector>

#include "rlf/oracle.hpp"
#include "rlf/scene.hpp"
#include "rlf/types.hpp"

namespace rlf {

struct ImpulseResponse {
  std::vector<double> samples;
  double sample_rate = 16000.0;
  double emission_time = 0.0;  // t0, s

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Analysis windows relative to the direct-sound arrival t_DS (seconds).
struct WindowConfig {
  double ds_length = 0.015;
  double er_begin = 0.015;
  double er_end = 0.115;
  double lr_begin = 0.415;
  double lr_end = 1.015;
  double match_length = 0.025;
  double arrival_threshold = 0.1;  // fraction of peak |x|

  void validate() const;
};

struct TimeWindow {
  double begin = 0.0;  // s, absolute
  double end = 0.0;
};

struct Arrival {
  double time = 0.0;           // t_DS, s
  double path_distance = 0.0;  // m
  std::size_t sample = 0;
};

Arrival arrival_and_distance(const ImpulseResponse& ir, const WindowConfig& cfg,
                             double speed_of_sound = 343.0);

inline constexpr double kSchroederFloorDb = -400.0;

/// Backward-integrated energy in dB relative to the total, one value per
/// sample, clamped at kSchroederFloorDb.
struct SchroederCurve {
  std::vector<double> db;
  double sample_rate = 16000.0;
  double time_of(std::size_t i) const { return static_cast<double>(i) / sample_rate; }
};

SchroederCurve schroeder_curve(const ImpulseResponse& ir);

/// 10 log10 of the summed squared samples in [begin, end).
double window_level(const ImpulseResponse& ir, const TimeWindow& window);

struct LrMatch {
  double level = 0.0;   // L_LR: energy of the LR window, dB
  double offset = 0.0;  // ER tail minus LR head energy over match_length, dB
};

/// Late-reflection level plus the gain that lifts the first match_length of
/// the LR window to the energy of the last match_length of the ER window.
LrMatch level_lr_matched(const ImpulseResponse& ir, const WindowConfig& cfg, double t_ds);

enum class DecayMethod { rms_forward_diff, linear_regression };

/// tau = -60 / slope, slope estimated over [begin, end) of the curve.
double decay_time(const SchroederCurve& curve, const TimeWindow& window, DecayMethod method);

/// All six scalar parameters of one impulse response.
struct ExtractedParams {
  double path_distance = 0.0;
  double l_ds = 0.0;
  double l_er = 0.0;
  double l_lr = 0.0;
  double tau_er = 0.0;
  double tau_lr = 0.0;
};

ExtractedParams extract_params(const ImpulseResponse& ir, const WindowConfig& cfg = {},
                               double speed_of_sound = 343.0);

/// Direction of arrival at b, -grad/|grad| of a path-distance field, from
/// central differences with one grid-spacing step. Falls back to one-sided
/// differences where a neighbor is occupied, invalid or hidden from b.
Vec3 doa_from_field(const FieldVolume& field, const Position& b, const VoxelScene& scene);

/// doa_from_field for every valid voxel; entries that are degenerate hold the
/// sentinel.
FieldVolume doa_field(const FieldVolume& field, const VoxelScene& scene);

}  // namespace rlf
