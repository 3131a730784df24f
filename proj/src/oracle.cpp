#include "rlf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <random>

#include "rlf/error.hpp"
#include "rlf/irparams.hpp"

namespace rlf {

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::path_distance: return "path-distance";
    case FieldKind::level: return "level";
    case FieldKind::decay_time: return "decay-time";
    case FieldKind::doa: return "doa";
  }
  return "unknown";
}

FieldVolume FieldVolume::filled(const Index3& dims, FieldKind kind, const Position& source,
                                double value) {
  FieldVolume f;
  f.dims = dims;
  f.kind = kind;
  f.source = source;
  f.values.assign(f.voxel_count() * static_cast<std::size_t>(f.components()), value);
  return f;
}

namespace {

struct DijkstraResult {
  std::vector<double> dist;
  std::vector<std::size_t> prev;
};

DijkstraResult run_dijkstra(const VoxelScene& scene, const Position& source) {
  if (!scene.in_free_voxel(source))
    throw Error(ErrorKind::input, "geodesic source must lie in a free voxel");
  const Index3 sv = scene.voxel_at(source);
  const auto start = scene.linear_index(sv);
  const double h = scene.spacing();

  std::array<double, 27> weight{};
  std::array<Index3, 27> offset{};
  int count = 0;
  for (int dk = -1; dk <= 1; ++dk)
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0 && dk == 0) continue;
        offset[count] = Index3(di, dj, dk);
        weight[count] = h * std::sqrt(static_cast<double>(di * di + dj * dj + dk * dk));
        ++count;
      }

  DijkstraResult r;
  r.dist.assign(scene.voxel_count(), std::numeric_limits<double>::infinity());
  r.prev.assign(scene.voxel_count(), SIZE_MAX);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  r.dist[start] = (source - scene.center(sv)).norm();
  heap.emplace(r.dist[start], start);
  while (!heap.empty()) {
    const auto [d, idx] = heap.top();
    heap.pop();
    if (d > r.dist[idx]) continue;
    const Index3 v = scene.voxel_of_index(idx);
    for (int e = 0; e < count; ++e) {
      const Index3 w = v + offset[e];
      if (!scene.in_grid(w) || scene.occupied(w)) continue;
      const auto wi = scene.linear_index(w);
      const double nd = d + weight[e];
      if (nd < r.dist[wi]) {
        r.dist[wi] = nd;
        r.prev[wi] = idx;
        heap.emplace(nd, wi);
      }
    }
  }
  return r;
}

}  // namespace

FieldVolume geodesic_field(const VoxelScene& scene, const Position& source) {
  auto r = run_dijkstra(scene, source);
  FieldVolume f = FieldVolume::filled(scene.dims(), FieldKind::path_distance, source);
  for (std::size_t i = 0; i < f.values.size(); ++i)
    if (std::isfinite(r.dist[i])) f.values[i] = r.dist[i];
  return f;
}

std::vector<std::size_t> geodesic_predecessors(const VoxelScene& scene, const Position& source) {
  return run_dijkstra(scene, source).prev;
}

SyntheticFields synth_acoustic_fields(const VoxelScene& scene, const Position& source,
                                      const FieldVolume& geo) {
  if (geo.dims != scene.dims() || geo.kind != FieldKind::path_distance)
    throw Error(ErrorKind::config, "geodesic field does not match the scene");
  if (!scene.in_free_voxel(source))
    throw Error(ErrorKind::input, "source must lie in a free voxel");
  const auto& regions = scene.regions();
  const auto src_region = scene.region_of(scene.linear_index(scene.voxel_at(source)));
  if (src_region >= regions.size())
    throw Error(ErrorKind::config, "missing region annotation for source region");

  SyntheticFields out{
      FieldVolume::filled(scene.dims(), FieldKind::level, source),
      FieldVolume::filled(scene.dims(), FieldKind::level, source),
      FieldVolume::filled(scene.dims(), FieldKind::decay_time, source),
      FieldVolume::filled(scene.dims(), FieldKind::decay_time, source),
  };
  const double h = scene.spacing();
  const RegionAcoustics& ra = regions[src_region];
  for (std::size_t i = 0; i < geo.values.size(); ++i) {
    const double pi = geo.values[i];
    if (!is_valid(pi)) continue;
    const auto reg = scene.region_of(i);
    if (reg >= regions.size())
      throw Error(ErrorKind::config, "missing region annotation for region " +
                                         std::to_string(static_cast<int>(reg)));
    const RegionAcoustics& rb = regions[reg];
    const double clamped = std::max(pi, h);
    const double straight = (source - scene.center(i)).norm();
    out.l_ds.values[i] =
        -20.0 * std::log10(clamped) - kDetourPenaltyDbPerMeter * std::max(pi - straight, 0.0);
    out.l_er.values[i] = 0.5 * (ra.er_level_db + rb.er_level_db) - 10.0 * std::log10(clamped);
    out.tau_er.values[i] = 0.5 * (ra.tau_er + rb.tau_er);
    out.tau_lr.values[i] = 0.5 * (ra.tau_lr + rb.tau_lr);
  }
  return out;
}

ImpulseResponse synth_ir(const AcousticParamSet& params, const SyntheticIRConfig& cfg) {
  const WindowConfig win;
  if (cfg.sample_rate < 8000.0)
    throw Error(ErrorKind::config, "sample rate must be >= 8000 Hz");
  if (!(params.tau_er > 0.0) || !(params.tau_lr > 0.0) || !std::isfinite(params.l_ds) ||
      !std::isfinite(params.l_er) || !(params.path_distance >= 0.0))
    throw Error(ErrorKind::config, "synthetic IR parameters out of range");

  const double fs = cfg.sample_rate;
  const double t_ds = cfg.emission_time + params.path_distance / cfg.speed_of_sound;
  if (cfg.duration < t_ds + win.lr_end + 0.1)
    throw Error(ErrorKind::config, "IR duration too short for the analysis windows");

  ImpulseResponse ir;
  ir.sample_rate = fs;
  ir.emission_time = cfg.emission_time;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration * fs));
  ir.samples.assign(n, 0.0);

  const auto samples_of = [fs](double t) { return static_cast<std::size_t>(std::llround(t * fs)); };
  const std::size_t i_ds = samples_of(t_ds);
  ir.samples[i_ds] = std::pow(10.0, params.l_ds / 20.0);
  if (!cfg.noise) return ir;

  const std::size_t i_er = i_ds + samples_of(win.er_begin);
  const std::size_t i_er_end = i_ds + samples_of(win.er_end);
  const std::size_t i_lr = i_ds + samples_of(win.lr_begin);

  // Per-sample energy decays by 60 dB per tau: e[i] = e0 * 10^(-6 t / tau).
  const double er_rate = std::pow(10.0, -6.0 / (params.tau_er * fs));
  const double lr_rate = std::pow(10.0, -6.0 / (params.tau_lr * fs));
  double er_window_sum = 0.0;
  {
    double e = 1.0;
    for (std::size_t i = i_er; i < i_er_end; ++i, e *= er_rate) er_window_sum += e;
  }
  const double e0 = std::pow(10.0, params.l_er / 10.0) / er_window_sum;

  std::mt19937_64 rng(cfg.noise_seed);
  double e = e0;
  for (std::size_t i = i_er; i < n; ++i) {
    const double sign = (rng() & 1U) ? 1.0 : -1.0;
    ir.samples[i] = sign * std::sqrt(e);
    e *= i + 1 < i_lr ? er_rate : lr_rate;
  }
  return ir;
}

}  // namespace rlf
