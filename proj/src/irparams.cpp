#include "rlf/irparams.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlf/error.hpp"
#include "rlf/latent_field.hpp"

namespace rlf {

void WindowConfig::validate() const {
  const bool ordered = ds_length > 0.0 && ds_length <= er_begin && er_begin < er_end &&
                       er_end <= lr_begin && lr_begin < lr_end;
  if (!ordered) throw Error(ErrorKind::config, "analysis windows must be ordered and disjoint");
  if (!(match_length > 0.0) || match_length > er_end - er_begin || match_length > lr_end - lr_begin)
    throw Error(ErrorKind::config, "match length must fit inside the ER and LR windows");
  if (!(arrival_threshold > 0.0 && arrival_threshold < 1.0))
    throw Error(ErrorKind::config, "arrival threshold must lie in (0, 1)");
}

namespace {

std::size_t sample_of(double t, double fs) {
  return static_cast<std::size_t>(std::max<long long>(0, std::llround(t * fs)));
}

double energy(const ImpulseResponse& ir, std::size_t begin, std::size_t end) {
  double e = 0.0;
  for (std::size_t i = begin; i < end; ++i) e += ir.samples[i] * ir.samples[i];
  return e;
}

std::pair<std::size_t, std::size_t> window_samples(const ImpulseResponse& ir,
                                                   const TimeWindow& w) {
  const double tol = 0.5 / ir.sample_rate;
  if (w.begin < -tol || w.end > ir.duration() + tol || !(w.end > w.begin))
    throw Error(ErrorKind::config, "window lies outside the impulse response");
  const auto b = sample_of(w.begin, ir.sample_rate);
  const auto e = std::min(sample_of(w.end, ir.sample_rate), ir.samples.size());
  if (e <= b) throw Error(ErrorKind::config, "empty analysis window");
  return {b, e};
}

}  // namespace

Arrival arrival_and_distance(const ImpulseResponse& ir, const WindowConfig& cfg,
                             double speed_of_sound) {
  double peak = 0.0;
  for (double x : ir.samples) peak = std::max(peak, std::abs(x));
  if (!(peak > 0.0)) throw Error(ErrorKind::no_arrival, "impulse response has no arrival");
  const double threshold = cfg.arrival_threshold * peak;
  Arrival a;
  for (std::size_t i = 0; i < ir.samples.size(); ++i) {
    if (std::abs(ir.samples[i]) >= threshold) {
      a.sample = i;
      break;
    }
  }
  a.time = static_cast<double>(a.sample) / ir.sample_rate;
  a.path_distance = std::max(0.0, speed_of_sound * (a.time - ir.emission_time));
  return a;
}

SchroederCurve schroeder_curve(const ImpulseResponse& ir) {
  SchroederCurve s;
  s.sample_rate = ir.sample_rate;
  s.db.resize(ir.samples.size());
  std::vector<double> tail(ir.samples.size() + 1, 0.0);
  for (std::size_t i = ir.samples.size(); i-- > 0;)
    tail[i] = tail[i + 1] + ir.samples[i] * ir.samples[i];
  const double total = tail[0];
  if (!(total > 0.0)) throw Error(ErrorKind::zero_energy, "impulse response has zero energy");
  for (std::size_t i = 0; i < s.db.size(); ++i) {
    const double r = tail[i] / total;
    s.db[i] = r > 0.0 ? std::max(10.0 * std::log10(r), kSchroederFloorDb) : kSchroederFloorDb;
  }
  // Cumulative rounding can produce +ulp at the head.
  s.db[0] = 0.0;
  for (std::size_t i = 1; i < s.db.size(); ++i) s.db[i] = std::min(s.db[i], s.db[i - 1]);
  return s;
}

double window_level(const ImpulseResponse& ir, const TimeWindow& window) {
  const auto [b, e] = window_samples(ir, window);
  return 10.0 * std::log10(energy(ir, b, e));
}

LrMatch level_lr_matched(const ImpulseResponse& ir, const WindowConfig& cfg, double t_ds) {
  const auto [tb, te] =
      window_samples(ir, {t_ds + cfg.er_end - cfg.match_length, t_ds + cfg.er_end});
  const auto [hb, he] =
      window_samples(ir, {t_ds + cfg.lr_begin, t_ds + cfg.lr_begin + cfg.match_length});
  const double e_tail = energy(ir, tb, te);
  const double e_head = energy(ir, hb, he);
  if (!(e_tail > 0.0) || !(e_head > 0.0))
    throw Error(ErrorKind::zero_energy, "ER tail or LR head window has zero energy");
  LrMatch m;
  m.offset = 10.0 * std::log10(e_tail) - 10.0 * std::log10(e_head);
  m.level = window_level(ir, {t_ds + cfg.lr_begin, t_ds + cfg.lr_end});
  return m;
}

double decay_time(const SchroederCurve& curve, const TimeWindow& window, DecayMethod method) {
  const double fs = curve.sample_rate;
  const auto b = sample_of(window.begin, fs);
  const auto e = std::min(sample_of(window.end, fs), curve.db.size());
  if (e < b + 2) throw Error(ErrorKind::config, "decay window needs at least two samples");

  double slope = 0.0;
  if (method == DecayMethod::rms_forward_diff) {
    double sq = 0.0;
    for (std::size_t i = b; i + 1 < e; ++i) {
      const double d = curve.db[i + 1] - curve.db[i];
      sq += d * d;
    }
    const double rms = std::sqrt(sq / static_cast<double>(e - b - 1));
    slope = -rms * fs;
  } else {
    const auto count = static_cast<double>(e - b);
    double st = 0.0, ss = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      st += curve.time_of(i);
      ss += curve.db[i];
    }
    const double mt = st / count;
    const double ms = ss / count;
    double num = 0.0, den = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double dt = curve.time_of(i) - mt;
      num += dt * (curve.db[i] - ms);
      den += dt * dt;
    }
    slope = num / den;
  }
  if (!(slope < 0.0)) throw Error(ErrorKind::undefined_decay, "decay slope is not negative");
  return -60.0 / slope;
}

ExtractedParams extract_params(const ImpulseResponse& ir, const WindowConfig& cfg,
                               double speed_of_sound) {
  cfg.validate();
  const Arrival a = arrival_and_distance(ir, cfg, speed_of_sound);
  const double t = a.time;
  ExtractedParams p;
  p.path_distance = a.path_distance;
  p.l_ds = window_level(ir, {t, t + cfg.ds_length});
  p.l_er = window_level(ir, {t + cfg.er_begin, t + cfg.er_end});
  p.l_lr = level_lr_matched(ir, cfg, t).level;
  const SchroederCurve s = schroeder_curve(ir);
  p.tau_er = decay_time(s, {t + cfg.er_begin, t + cfg.er_end}, DecayMethod::rms_forward_diff);
  p.tau_lr = decay_time(s, {t + cfg.lr_begin, t + cfg.lr_end}, DecayMethod::linear_regression);
  return p;
}

namespace {

// Field value at p from the masked trilinear stencil, skipping sentinels.
double sample_field(const FieldVolume& field, const VoxelScene& scene, const Position& p) {
  const InterpWeights w = interp_weights(scene, p);
  double sum = 0.0, total = 0.0;
  for (int c = 0; c < w.count; ++c) {
    const double v = field.values[w.corners[c]];
    if (!is_valid(v)) continue;
    sum += w.weights[c] * v;
    total += w.weights[c];
  }
  return total > 0.0 ? sum / total : kSentinel;
}

}  // namespace

Vec3 doa_from_field(const FieldVolume& field, const Position& b, const VoxelScene& scene) {
  if (field.kind != FieldKind::path_distance || field.dims != scene.dims())
    throw Error(ErrorKind::config, "DOA needs a path-distance field over the scene grid");
  const double h = scene.spacing();
  const double center = sample_field(field, scene, b);
  const auto probe = [&](const Position& p) {
    if (!scene.in_free_voxel(p) || !line_of_sight(scene, b, p)) return kSentinel;
    return sample_field(field, scene, p);
  };
  Vec3 g = Vec3::Zero();
  for (int ax = 0; ax < 3; ++ax) {
    const Vec3 e = Vec3::Unit(ax) * h;
    const double fp = probe(b + e);
    const double fm = probe(b - e);
    if (is_valid(fp) && is_valid(fm))
      g[ax] = (fp - fm) / (2.0 * h);
    else if (is_valid(fp) && is_valid(center))
      g[ax] = (fp - center) / h;
    else if (is_valid(fm) && is_valid(center))
      g[ax] = (center - fm) / h;
  }
  const double norm = g.norm();
  if (!(norm >= 1e-9)) throw Error(ErrorKind::degenerate_gradient, "path-distance gradient vanishes");
  return -g / norm;
}

FieldVolume doa_field(const FieldVolume& field, const VoxelScene& scene) {
  FieldVolume out = FieldVolume::filled(scene.dims(), FieldKind::doa, field.source);
  for (std::size_t i = 0; i < scene.voxel_count(); ++i) {
    if (scene.occupied(i) || !is_valid(field.values[i])) continue;
    try {
      const Vec3 d = doa_from_field(field, scene.center(i), scene);
      for (int k = 0; k < 3; ++k) out.values[3 * i + k] = d[k];
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_gradient) throw;
    }
  }
  return out;
}

}  // namespace rlf
