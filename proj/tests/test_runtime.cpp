#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "rlf/error.hpp"
#include "rlf/irparams.hpp"
#include "rlf/oracle.hpp"
#include "rlf/runtime.hpp"

using namespace rlf;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

VoxelScene box(Index3 dims = {10, 4, 10}) {
  SceneSpec spec;
  spec.dims = dims;
  return build_scene(spec);
}

}  // namespace

TEST_CASE("dry gain") {
  CHECK(dry_gain(0.0) == 1.0);
  CHECK(std::abs(dry_gain(-6.0206) - 0.5) <= 1e-8);
  CHECK(std::abs(dry_gain(20.0 * std::log10(0.5)) - 0.5) <= 1e-15);
  CHECK(dry_gain(-20.0) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("wet blend weights") {
  const std::array<double, 3> refs{0.4, 1.0, 1.8};
  CHECK(wet_weights(1.0, refs) == std::array<double, 3>{0.0, 1.0, 0.0});
  const auto mid = wet_weights(1.4, refs);
  CHECK(mid[0] == 0.0);
  CHECK(mid[1] == doctest::Approx(0.5));
  CHECK(mid[2] == doctest::Approx(0.5));
  CHECK(wet_weights(0.1, refs) == std::array<double, 3>{1.0, 0.0, 0.0});
  CHECK(wet_weights(5.0, refs) == std::array<double, 3>{0.0, 0.0, 1.0});

  std::array<double, 3> prev = wet_weights(0.0, refs);
  double worst_jump = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const auto w = wet_weights(2.5 * i / 1000.0, refs);
    int nonzero = 0;
    for (int j = 0; j < 3; ++j) {
      CHECK(w[j] >= 0.0);
      if (w[j] != 0.0) ++nonzero;
      worst_jump = std::max(worst_jump, std::abs(w[j] - prev[j]));
    }
    CHECK(nonzero <= 2);
    CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-14));
    prev = w;
  }
  // Step 0.0025 s over a 0.6 s interval bounds the change per step.
  CHECK(worst_jump <= 0.0025 / 0.6 + 1e-12);

  CHECK_THROWS_AS(wet_weights(1.0, {0.4, 0.4, 1.8}), Error);
  CHECK_THROWS_AS(wet_weights(1.0, {1.0, 0.4, 1.8}), Error);
}

TEST_CASE("late level derived from the early decay") {
  CHECK(derive_l_lr(-10.0, 0.4) == doctest::Approx(-70.0).epsilon(1e-14));
  CHECK(std::abs(derive_l_lr(-10.0, 1e12) + 10.0) <= 1e-9);
  CHECK_THROWS_AS(derive_l_lr(0.0, 0.0), Error);

  // Continuous decay: the measured LR window level of a synthetic IR exceeds
  // the extrapolation by the ratio of the window integrals, under 1 dB up to
  // tau ~ 0.9 s.
  for (double tau : {0.5, 0.8, 1.2, 1.8}) {
    AcousticParamSet p;
    p.l_er = -8.0;
    p.tau_er = tau;
    p.tau_lr = tau;
    const ImpulseResponse ir = synth_ir(p, {});
    const WindowConfig cfg;
    const double t = arrival_and_distance(ir, cfg).time;
    const double l_er = window_level(ir, {t + cfg.er_begin, t + cfg.er_end});
    const double measured = level_lr_matched(ir, cfg, t).level;
    const double excess = 10.0 * std::log10((1.0 - std::pow(10.0, -6.0 * 0.6 / tau)) /
                                            (1.0 - std::pow(10.0, -6.0 * 0.1 / tau)));
    CHECK(std::abs(measured - derive_l_lr(l_er, tau) - excess) <= 0.1);
    if (tau <= 0.8) CHECK(std::abs(derive_l_lr(l_er, tau) - measured) <= 1.0);
  }
}

TEST_CASE("vector base amplitude panning") {
  const SpeakerLayout oct = SpeakerLayout::octahedral();
  const VectorXd on = vbap_gains(Vec3::UnitZ(), oct);
  CHECK(on[4] == doctest::Approx(1.0));
  CHECK(on.norm() == doctest::Approx(1.0));
  CHECK(on.sum() == doctest::Approx(1.0));

  const SpeakerLayout quad = SpeakerLayout::quad();
  const VectorXd bis = vbap_gains(Vec3(1, 1, 0).normalized(), quad);
  CHECK(bis[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(bis[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(bis[2] == 0.0);
  CHECK(bis[3] == 0.0);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const Vec3 d = random_unit(rng);
    const VectorXd g = vbap_gains(d, oct);
    Vec3 s = Vec3::Zero();
    for (std::size_t i = 0; i < oct.size(); ++i) s += g[static_cast<Eigen::Index>(i)] * oct.directions[i];
    CHECK(s.normalized().cross(d).norm() <= 1e-9);
    CHECK(s.dot(d) > 0.0);
    CHECK(g.squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.minCoeff() >= 0.0);
  }

  // Straight up is outside every horizontal pair: nearest speaker wins.
  const VectorXd up = vbap_gains(Vec3(0.1, 1.0, 0.0).normalized(), quad);
  CHECK(up.squaredNorm() == doctest::Approx(1.0));
  const VectorXd fallback = vbap_gains(Vec3(0.0, 0.0, 1.0), quad);
  CHECK(fallback.squaredNorm() == doctest::Approx(1.0));
  CHECK((fallback.array() > 0.0).count() == 1);

  CHECK_THROWS_AS(vbap_gains(Vec3(2.0, 0.0, 0.0), oct), Error);
  SpeakerLayout bad = oct;
  bad.triples.push_back({0, 1, 9});
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("wet energy spatialization") {
  const VectorXd mono = spatialize_wet(0.7, Vec3::UnitY(), SpeakerLayout::mono());
  REQUIRE(mono.size() == 1);
  CHECK(mono[0] == doctest::Approx(0.7).epsilon(1e-14));

  const VectorXd quad = spatialize_wet(1.0, Vec3::UnitX(), SpeakerLayout::quad());
  CHECK(quad[0] * quad[0] == doctest::Approx(1.0 / 3.0 + (2.0 / 3.0) / 4.0));
  CHECK(quad[1] * quad[1] == doctest::Approx((2.0 / 3.0) / 4.0));

  const SpeakerLayout oct = SpeakerLayout::octahedral();
  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    const double gain = 0.1 + 0.02 * t;
    const VectorXd g = spatialize_wet(gain, random_unit(rng), oct);
    CHECK(g.squaredNorm() == doctest::Approx(gain * gain).epsilon(1e-12));
  }
}

TEST_CASE("reference impulse responses") {
  const ReferenceIRSet refs = make_reference_irs(8000.0, 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(energy(refs.er[j].samples) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(energy(refs.lr[j].samples) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(refs.er[j].samples.size() == static_cast<std::size_t>(std::ceil(refs.tau_er[j] * 8000.0)));
    CHECK(refs.lr[j].samples.size() == static_cast<std::size_t>(std::ceil(refs.tau_lr[j] * 8000.0)));
  }
  CHECK(make_reference_irs(8000.0, 3).er[1].samples == refs.er[1].samples);
  CHECK(make_reference_irs(8000.0, 4).er[1].samples != refs.er[1].samples);
  CHECK_THROWS_AS(make_reference_irs(0.0), Error);
}

TEST_CASE("convolution") {
  CHECK(convolve({1, 2, 3}, {0, 1, 0.5}) == std::vector<double>{0, 1, 2.5, 4, 1.5});
  CHECK(convolve({}, {1.0}).empty());
  CHECK(convolve({2.0}, {1, -1}) == std::vector<double>{2, -2});
}

TEST_CASE("offline rendering") {
  const ReferenceIRSet refs = make_reference_irs(8000.0, 1);
  const SpeakerLayout layout = SpeakerLayout::quad();
  AcousticParamSet p;
  p.l_ds = -6.0;
  p.l_er = -10.0;
  p.l_lr = -20.0;
  p.tau_er = 0.2;
  p.tau_lr = 1.4;
  p.doa = Vec3(1, 1, 0).normalized();
  const RenderParams r = make_render_params(p, refs, layout);
  CHECK(r.w_lr[1] == doctest::Approx(0.5));

  Signal silent;
  silent.sample_rate = 8000.0;
  silent.samples.assign(400, 0.0);
  const auto quiet = render_offline(silent, r, refs);
  CHECK(quiet.channels.rows() == 4);
  CHECK(quiet.channels.cols() == static_cast<Eigen::Index>(400 + refs.lr[2].samples.size() - 1));
  CHECK(quiet.channels.cwiseAbs().maxCoeff() == 0.0);

  // Impulse through the ER path alone reproduces the first ER reference.
  Signal impulse;
  impulse.sample_rate = 8000.0;
  impulse.samples = {1.0};
  RenderParams er_only = r;
  er_only.dry = 0.0;
  er_only.lr = 0.0;
  er_only.er = 1.0;
  er_only.w_er = {1.0, 0.0, 0.0};
  const auto er = render_offline(impulse, er_only, refs);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < er.channels.rows(); ++c)
    for (std::size_t i = 0; i < refs.er[0].samples.size(); ++i)
      worst = std::max(worst, std::abs(er.channels(c, static_cast<Eigen::Index>(i)) -
                                       er_only.er_speakers[c] * refs.er[0].samples[i]));
  CHECK(worst <= 1e-15);

  // +6.02 dB on every level quadruples the output energy.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  Signal noise;
  noise.sample_rate = 8000.0;
  for (int i = 0; i < 800; ++i) noise.samples.push_back(g(rng));
  AcousticParamSet louder = p;
  const double boost = 20.0 * std::log10(2.0);
  louder.l_ds += boost;
  louder.l_er += boost;
  louder.l_lr += boost;
  const double e0 = render_offline(noise, r, refs).channels.squaredNorm();
  const double e1 = render_offline(noise, make_render_params(louder, refs, layout), refs).channels.squaredNorm();
  CHECK(e1 / e0 == doctest::Approx(4.0).epsilon(1e-12));

  Signal wrong_rate = noise;
  wrong_rate.sample_rate = 16000.0;
  CHECK_THROWS_AS(render_offline(wrong_rate, r, refs), Error);
  Signal empty;
  empty.sample_rate = 8000.0;
  CHECK(render_offline(empty, r, refs).channels.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("query against untrained metric models") {
  const VoxelScene s = box({10, 6, 10});
  DecoderConfig dc;
  dc.family = DecoderFamily::euclidean;
  dc.n = 4;
  RuntimeModels models{make_group(s, dc, 1), std::nullopt, std::nullopt};
  DecoderConfig lc;
  lc.family = DecoderFamily::mlp;
  lc.task = Task::levels;
  lc.n = 8;
  models.levels = make_group(s, lc, 2);

  // Meter-scaled initial latents make the Euclidean decoder the straight-line distance.
  const Position a = s.center(s.linear_index(2, 1, 2));
  const Position b = s.center(s.linear_index(7, 2, 6));
  const AcousticParamSet ab = query_params(models, s, a, b);
  const AcousticParamSet ba = query_params(models, s, b, a);
  CHECK(ab.path_distance == doctest::Approx((a - b).norm()).epsilon(1e-9));
  CHECK(ab.path_distance == ba.path_distance);
  CHECK(ab.l_ds == ba.l_ds);
  CHECK(ab.l_er == ba.l_er);
  CHECK(ab.l_lr == derive_l_lr(ab.l_er, ab.tau_er));
  // Same central-difference stencil on the exact distance.
  Vec3 grad;
  for (int ax = 0; ax < 3; ++ax)
    grad[ax] = ((b + Vec3::Unit(ax) - a).norm() - (b - Vec3::Unit(ax) - a).norm()) / 2.0;
  CHECK((ab.doa + grad.normalized()).norm() <= 1e-9);
  CHECK(ab.doa.dot((a - b).normalized()) >= std::cos(2.0 * M_PI / 180.0));

  const AcousticParamSet same = query_params(models, s, a, a + Vec3(0.2, 0.1, 0.0));
  CHECK(same.path_distance < 0.3);
  CHECK(query_params(models, s, a, a).path_distance == 0.0);

  DecoderConfig rc;
  rc.family = DecoderFamily::riemann_diag;
  rc.n = 16;
  const RuntimeModels diag{make_group(s, rc, 3), std::nullopt, std::nullopt};
  constexpr int kQueries = 200;
  const auto t0 = std::chrono::steady_clock::now();
  double sink = 0.0;
  for (int q = 0; q < kQueries; ++q) sink += query_params(diag, s, a, b + Vec3(0.001 * q, 0, 0)).path_distance;
  const double us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count() / kQueries;
  MESSAGE("riemann-diag n=16 query: " << us << " us");
  CHECK(std::isfinite(sink));
  CHECK(us <= 50.0);
}
