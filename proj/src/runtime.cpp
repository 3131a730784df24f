#include "rlf/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "rlf/error.hpp"
#include "rlf/latent_field.hpp"

namespace rlf {

namespace {

constexpr double kNegativeTolerance = -1e-12;

double distance_between(const ParameterGroup& g, const VectorXd& u, const VectorXd& v) {
  return decode_pair(g.decoder, u, v)[0];
}

}  // namespace

AcousticParamSet query_params(const RuntimeModels& models, const VoxelScene& scene,
                              const Position& a, const Position& b, const QueryConfig& cfg) {
  AcousticParamSet p;
  const ParameterGroup& dist = models.distance;
  const VectorXd ua = interp_latent(dist.grid, scene, a).latent;
  const VectorXd ub = interp_latent(dist.grid, scene, b).latent;
  p.path_distance = distance_between(dist, ua, ub);

  const double h = cfg.stencil_step > 0.0 ? cfg.stencil_step : scene.spacing();
  const auto probe = [&](const Position& q) -> std::optional<double> {
    if (!scene.in_free_voxel(q) || !line_of_sight(scene, b, q)) return std::nullopt;
    return distance_between(dist, ua, interp_latent(dist.grid, scene, q).latent);
  };
  Vec3 grad = Vec3::Zero();
  for (int ax = 0; ax < 3; ++ax) {
    const Vec3 e = Vec3::Unit(ax) * h;
    const auto fp = probe(b + e);
    const auto fm = probe(b - e);
    if (fp && fm)
      grad[ax] = (*fp - *fm) / (2.0 * h);
    else if (fp)
      grad[ax] = (*fp - p.path_distance) / h;
    else if (fm)
      grad[ax] = (p.path_distance - *fm) / h;
  }
  const double norm = grad.norm();
  if (norm >= 1e-9)
    p.doa = -grad / norm;
  else if (a != b)  // coincident points keep the default direction
    throw Error(ErrorKind::degenerate_gradient, "predicted distance gradient vanishes");

  if (models.levels) {
    const auto& g = *models.levels;
    const VectorXd out = decode_pair(g.decoder, interp_latent(g.grid, scene, a).latent,
                                     interp_latent(g.grid, scene, b).latent);
    p.l_ds = out[0];
    p.l_er = out[1];
  }
  if (models.decays) {
    const auto& g = *models.decays;
    const VectorXd out = decode_pair(g.decoder, interp_latent(g.grid, scene, a).latent,
                                     interp_latent(g.grid, scene, b).latent);
    if (out.size() == 1) {
      p.tau_lr = out[0];
    } else {
      p.tau_er = out[0];
      p.tau_lr = out[1];
    }
  }
  p.l_lr = derive_l_lr(p.l_er, p.tau_er, cfg.windows);
  return p;
}

double dry_gain(double l_ds_db) { return std::pow(10.0, l_ds_db / 20.0); }

std::array<double, 3> wet_weights(double tau, const std::array<double, 3>& refs) {
  if (!(refs[0] < refs[1] && refs[1] < refs[2]))
    throw Error(ErrorKind::config, "reference decay times must be strictly increasing");
  if (tau <= refs[0]) return {1.0, 0.0, 0.0};
  if (tau >= refs[2]) return {0.0, 0.0, 1.0};
  if (tau <= refs[1]) {
    const double t = (tau - refs[0]) / (refs[1] - refs[0]);
    return {1.0 - t, t, 0.0};
  }
  const double t = (tau - refs[1]) / (refs[2] - refs[1]);
  return {0.0, 1.0 - t, t};
}

double derive_l_lr(double l_er_db, double tau_er, const WindowConfig& windows) {
  if (!(tau_er > 0.0)) throw Error(ErrorKind::config, "early decay time must be positive");
  return l_er_db - 60.0 * (windows.lr_begin - windows.er_begin) / tau_er;
}

void SpeakerLayout::validate() const {
  if (directions.empty()) throw Error(ErrorKind::config, "speaker layout is empty");
  for (const Vec3& d : directions)
    if (std::abs(d.norm() - 1.0) > 1e-9)
      throw Error(ErrorKind::config, "speaker directions must be unit vectors");
  const auto n = static_cast<int>(directions.size());
  for (const auto& t : triples)
    for (int i : t)
      if (i < 0 || i >= n) throw Error(ErrorKind::config, "triple refers to a missing speaker");
  for (const auto& p : pairs)
    for (int i : p)
      if (i < 0 || i >= n) throw Error(ErrorKind::config, "pair refers to a missing speaker");
}

SpeakerLayout SpeakerLayout::octahedral() {
  SpeakerLayout l;
  l.directions = {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(),
                  -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
  for (int sx = 0; sx < 2; ++sx)
    for (int sy = 0; sy < 2; ++sy)
      for (int sz = 0; sz < 2; ++sz) l.triples.push_back({sx, 2 + sy, 4 + sz});
  return l;
}

SpeakerLayout SpeakerLayout::quad() {
  SpeakerLayout l;
  l.directions = {Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitX(), -Vec3::UnitY()};
  l.pairs = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  return l;
}

SpeakerLayout SpeakerLayout::mono() {
  SpeakerLayout l;
  l.directions = {Vec3::UnitX()};
  return l;
}

VectorXd vbap_gains(const Vec3& d, const SpeakerLayout& layout) {
  if (std::abs(d.norm() - 1.0) > 1e-6) throw Error(ErrorKind::input, "direction must be a unit vector");
  const auto n = static_cast<Eigen::Index>(layout.size());
  VectorXd gains = VectorXd::Zero(n);
  const auto finish = [&]() {
    gains = gains.cwiseMax(0.0);
    return VectorXd(gains / gains.norm());
  };

  for (const auto& t : layout.triples) {
    Eigen::Matrix3d base;
    for (int c = 0; c < 3; ++c) base.col(c) = layout.directions[static_cast<std::size_t>(t[c])];
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(base);
    if (!lu.isInvertible()) continue;
    const Eigen::Vector3d g = lu.solve(d);
    if ((g.array() >= kNegativeTolerance).all() && g.sum() > 0.0) {
      for (int c = 0; c < 3; ++c) gains[t[c]] = g[c];
      return finish();
    }
  }
  for (const auto& p : layout.pairs) {
    Eigen::Matrix<double, 3, 2> base;
    for (int c = 0; c < 2; ++c) base.col(c) = layout.directions[static_cast<std::size_t>(p[c])];
    const Eigen::Matrix2d gram = base.transpose() * base;
    if (std::abs(gram.determinant()) < 1e-12) continue;
    const Eigen::Vector2d g = gram.ldlt().solve(base.transpose() * d);
    if ((g.array() >= kNegativeTolerance).all() && g.sum() > 0.0) {
      for (int c = 0; c < 2; ++c) gains[p[c]] = g[c];
      return finish();
    }
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    if (layout.directions[static_cast<std::size_t>(i)].dot(d) >
        layout.directions[static_cast<std::size_t>(best)].dot(d))
      best = i;
  gains[best] = 1.0;
  return gains;
}

VectorXd spatialize_wet(double wet_gain, const Vec3& d, const SpeakerLayout& layout) {
  const VectorXd pan = vbap_gains(d, layout);
  const double energy = wet_gain * wet_gain;
  const double spread = 2.0 * energy / (3.0 * static_cast<double>(layout.size()));
  return (energy / 3.0 * pan.array().square() + spread).sqrt().matrix();
}

void ReferenceIRSet::validate() const {
  const auto increasing = [](const std::array<double, 3>& t) { return t[0] < t[1] && t[1] < t[2]; };
  if (!increasing(tau_er) || !increasing(tau_lr))
    throw Error(ErrorKind::config, "reference decay times must be strictly increasing");
  const double fs = er[0].sample_rate;
  for (const auto* set : {&er, &lr})
    for (const auto& ir : *set)
      if (ir.sample_rate != fs) throw Error(ErrorKind::config, "reference IR sample rates differ");
}

ReferenceIRSet make_reference_irs(double sample_rate, std::uint64_t seed) {
  if (!(sample_rate > 0.0)) throw Error(ErrorKind::config, "sample rate must be positive");
  ReferenceIRSet refs;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto make = [&](double tau) {
    ImpulseResponse ir;
    ir.sample_rate = sample_rate;
    const auto len = static_cast<std::size_t>(std::ceil(tau * sample_rate));
    ir.samples.resize(len);
    double energy = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      // Amplitude falls 60 dB over tau.
      const double env = std::pow(10.0, -3.0 * static_cast<double>(i) / (tau * sample_rate));
      ir.samples[i] = env * noise(rng);
      energy += ir.samples[i] * ir.samples[i];
    }
    const double scale = 1.0 / std::sqrt(energy);
    for (double& x : ir.samples) x *= scale;
    return ir;
  };
  for (int j = 0; j < 3; ++j) refs.er[j] = make(refs.tau_er[j]);
  for (int j = 0; j < 3; ++j) refs.lr[j] = make(refs.tau_lr[j]);
  return refs;
}

RenderParams make_render_params(const AcousticParamSet& p, const ReferenceIRSet& refs,
                                const SpeakerLayout& layout) {
  layout.validate();
  RenderParams r;
  r.dry = dry_gain(p.l_ds);
  r.er = dry_gain(p.l_er);
  r.lr = dry_gain(p.l_lr);
  r.w_er = wet_weights(p.tau_er, refs.tau_er);
  r.w_lr = wet_weights(p.tau_lr, refs.tau_lr);
  r.doa = p.doa.normalized();
  r.dry_speakers = vbap_gains(r.doa, layout);
  r.er_speakers = spatialize_wet(1.0, r.doa, layout);
  r.lr_speakers = spatialize_wet(1.0, r.doa, layout);
  return r;
}

std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) return {};
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    for (std::size_t k = 0; k < h.size(); ++k) y[i + k] += x[i] * h[k];
  }
  return y;
}

MultichannelSignal render_offline(const Signal& input, const RenderParams& params,
                                  const ReferenceIRSet& refs) {
  refs.validate();
  if (input.sample_rate != refs.sample_rate())
    throw Error(ErrorKind::config, "input and reference IR sample rates differ");
  const auto channels = params.dry_speakers.size();
  if (params.er_speakers.size() != channels || params.lr_speakers.size() != channels)
    throw Error(ErrorKind::config, "speaker gain vectors differ in size");

  std::size_t longest = 1;
  for (const auto* set : {&refs.er, &refs.lr})
    for (const auto& ir : *set) longest = std::max(longest, ir.samples.size());
  MultichannelSignal out;
  out.sample_rate = input.sample_rate;
  out.channels = MatrixXd::Zero(channels, static_cast<Eigen::Index>(input.samples.size() + longest - 1));
  if (input.samples.empty()) return out;

  const auto add_wet = [&](const std::array<ImpulseResponse, 3>& irs, const std::array<double, 3>& w,
                           double gain, const VectorXd& speakers) {
    std::vector<double> wet(static_cast<std::size_t>(out.channels.cols()), 0.0);
    for (int j = 0; j < 3; ++j) {
      if (w[j] == 0.0) continue;
      const auto y = convolve(input.samples, irs[j].samples);
      for (std::size_t i = 0; i < y.size(); ++i) wet[i] += w[j] * y[i];
    }
    const Eigen::Map<const Eigen::RowVectorXd> row(wet.data(), static_cast<Eigen::Index>(wet.size()));
    out.channels.noalias() += (gain * speakers) * row;
  };

  const Eigen::Map<const Eigen::RowVectorXd> x(input.samples.data(),
                                               static_cast<Eigen::Index>(input.samples.size()));
  out.channels.leftCols(x.size()).noalias() += (params.dry * params.dry_speakers) * x;
  add_wet(refs.er, params.w_er, params.er, params.er_speakers);
  add_wet(refs.lr, params.w_lr, params.lr, params.lr_speakers);
  return out;
}

}  // namespace rlf
