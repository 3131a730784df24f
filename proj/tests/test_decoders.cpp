#include <doctest.h>

#include <cmath>
#include <random>

#include "rlf/decoders.hpp"
#include "rlf/error.hpp"

using namespace rlf;

namespace {

DecoderModel make(DecoderFamily family, Task task, int n, std::vector<int> hidden = {32, 32},
                  std::uint64_t seed = 1) {
  DecoderConfig cfg;
  cfg.family = family;
  cfg.task = task;
  cfg.n = n;
  cfg.hidden = std::move(hidden);
  return make_decoder(cfg, seed);
}

VectorXd random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

void perturb(DecoderModel& m, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index i = 0; i < m.params.size(); ++i) m.params[i] += g(rng);
}

// Sets the metric layer so that lambda(mid) = c (diag) or Lambda(mid) = c I (psd)
// whenever mid[3] = 1.
void constant_metric(DecoderModel& m, double c) {
  const int n = m.n;
  m.params.segment(m.layout.metric, m.layout.metric_size).setZero();
  if (m.family == DecoderFamily::riemann_diag) {
    for (int i = 0; i < n; ++i) m.params[m.layout.metric + 3 * n + i] = c;
  } else {
    for (int i = 0; i < n; ++i) m.params[m.layout.metric + 3 * n * n + i * n + i] = c;
  }
}

// Plain loop forward pass of an mlp decoder, independent of the Eigen path.
double reference_mlp(const DecoderModel& m, const VectorXd& u, const VectorXd& v, int head) {
  auto pass = [&](const VectorXd& a, const VectorXd& b) {
    std::vector<double> x(a.data(), a.data() + a.size());
    x.insert(x.end(), b.data(), b.data() + b.size());
    const auto& s = m.layout.mlp_sizes;
    for (std::size_t l = 0; l + 1 < s.size(); ++l) {
      std::vector<double> y(static_cast<std::size_t>(s[l + 1]));
      for (int o = 0; o < s[l + 1]; ++o) {
        double acc = m.params[m.layout.mlp_bias[l] + o];
        for (int i = 0; i < s[l]; ++i) acc += m.params[m.layout.mlp_weight[l] + i * s[l + 1] + o] * x[i];
        y[o] = l + 2 < s.size() ? std::max(acc, 0.0) : acc;
      }
      x = std::move(y);
    }
    return x[head];
  };
  return 0.5 * (pass(u, v) + pass(v, u));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

struct FamilyCase {
  DecoderFamily family;
  Task task;
  int heads;
};

const FamilyCase kCases[] = {
    {DecoderFamily::euclidean, Task::distance, 1},    {DecoderFamily::riemann_diag, Task::distance, 1},
    {DecoderFamily::riemann_psd, Task::distance, 1},  {DecoderFamily::mlp, Task::distance, 1},
    {DecoderFamily::euclidean, Task::levels, 2},      {DecoderFamily::riemann_diag, Task::levels, 2},
    {DecoderFamily::riemann_psd, Task::levels, 2},    {DecoderFamily::mlp, Task::levels, 2},
    {DecoderFamily::dot_product, Task::decays, 2},    {DecoderFamily::dot_product, Task::decays, 1},
    {DecoderFamily::mlp, Task::decays, 2},
};

}  // namespace

TEST_CASE("euclidean distance examples and axioms") {
  VectorXd u = VectorXd::Zero(5), v = VectorXd::Zero(5);
  u[0] = 3.0;
  u[1] = 4.0;
  CHECK(euclid_distance(u, v) == 5.0);
  CHECK(euclid_distance(u, u) == 0.0);

  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const VectorXd a = random_vec(16, rng), b = random_vec(16, rng), c = random_vec(16, rng);
    double ss = 0.0;
    for (int i = 0; i < 16; ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(euclid_distance(a, b) == doctest::Approx(std::sqrt(ss)).epsilon(1e-12));
    CHECK(euclid_distance(a, b) >= 0.0);
    CHECK(euclid_distance(a, b) == euclid_distance(b, a));
    CHECK(euclid_distance(a, c) <= euclid_distance(a, b) + euclid_distance(b, c) + 1e-9);
  }

  const DecoderModel m = make(DecoderFamily::euclidean, Task::distance, 2);
  VectorXd p(2), q(2);
  p << 3.0, 4.0;
  q << 0.0, 0.0;
  const PairGradient g = decoder_gradients(m, p, q, 0, 1.0);
  CHECK(g.du[0] == doctest::Approx(0.6));
  CHECK(g.du[1] == doctest::Approx(0.8));
  CHECK(g.dv[0] == doctest::Approx(-0.6));
  const PairGradient z = decoder_gradients(m, p, p, 0, 1.0);
  CHECK(z.du.isZero(0.0));
  CHECK(z.dv.isZero(0.0));
}

TEST_CASE("riemannian reductions to the euclidean distance") {
  std::mt19937_64 rng(2);
  for (DecoderFamily f : {DecoderFamily::riemann_diag, DecoderFamily::riemann_psd}) {
    DecoderModel m = make(f, Task::distance, 8);
    constant_metric(m, 1.0);
    DecoderModel twice = m;
    constant_metric(twice, 2.0);
    for (int t = 0; t < 200; ++t) {
      VectorXd u = random_vec(8, rng), v = random_vec(8, rng);
      u[3] = v[3] = 1.0;
      const double e = euclid_distance(u, v);
      CHECK(std::abs(riemann_distance(u, v, m) - e) <= 1e-12 * std::max(1.0, e));
      CHECK(std::abs(riemann_distance(u, v, twice) - 2.0 * e) <= 1e-12 * std::max(1.0, e));
    }
  }
  // Warm start: a fresh model reads the bias channel and stays close to euclidean.
  const DecoderModel fresh = make(DecoderFamily::riemann_diag, Task::distance, 16);
  VectorXd u = random_vec(16, rng), v = random_vec(16, rng);
  u[3] = v[3] = 1.0;
  CHECK(riemann_distance(u, v, fresh) == doctest::Approx(euclid_distance(u, v)).epsilon(0.05));
  CHECK_THROWS_AS(riemann_distance(u, v, make(DecoderFamily::euclidean, Task::distance, 16)), Error);
}

TEST_CASE("mlp decoder: symmetry, constant output, independent forward pass") {
  std::mt19937_64 rng(3);
  DecoderModel m = make(DecoderFamily::mlp, Task::levels, 6, {7, 5}, 4);
  perturb(m, rng, 0.1);
  for (int t = 0; t < 100; ++t) {
    const VectorXd u = random_vec(6, rng), v = random_vec(6, rng);
    CHECK(mlp_distance(u, v, m, 0) == mlp_distance(v, u, m, 0));
    CHECK(mlp_distance(u, v, m, 1) == mlp_distance(v, u, m, 1));
    for (int h = 0; h < 2; ++h)
      CHECK(std::abs(mlp_distance(u, v, m, h) - reference_mlp(m, u, v, h)) <= 1e-10);
  }

  DecoderModel zero = make(DecoderFamily::mlp, Task::distance, 4);
  zero.params.setZero();
  zero.params[zero.layout.mlp_bias.back()] = 2.5;
  CHECK(mlp_distance(random_vec(4, rng), random_vec(4, rng), zero) == 2.5);
}

TEST_CASE("level heads") {
  DecoderModel m = make(DecoderFamily::euclidean, Task::levels, 4);
  m.params[m.layout.level] = -3.0;
  std::mt19937_64 rng(5);
  const VectorXd u = random_vec(4, rng);
  CHECK(level_heads(u, u, m).direct == -3.0);

  // ER head: w = 0, beta = -10, projected distance 2.
  m.params.segment(m.layout.level + 1, 4).setZero();
  m.params[m.layout.level + 1 + 4] = -10.0;
  const MatrixXd eye = MatrixXd::Identity(4, 4);
  m.params.segment(m.layout.projection, 16) = eye.reshaped();
  VectorXd v = u;
  v[2] += 2.0;
  CHECK(level_heads(u, v, m).early == doctest::Approx(-12.0).epsilon(1e-14));

  for (DecoderFamily f : {DecoderFamily::euclidean, DecoderFamily::riemann_diag, DecoderFamily::riemann_psd,
                          DecoderFamily::mlp}) {
    DecoderModel lm = make(f, Task::levels, 8);
    perturb(lm, rng, 0.05);
    for (int t = 0; t < 20; ++t) {
      const VectorXd a = random_vec(8, rng), b = random_vec(8, rng);
      const LevelPair ab = level_heads(a, b, lm), ba = level_heads(b, a, lm);
      CHECK(ab.direct == doctest::Approx(ba.direct).epsilon(1e-14));
      CHECK(ab.early == doctest::Approx(ba.early).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(level_heads(u, u, make(DecoderFamily::euclidean, Task::distance, 4)), Error);
}

TEST_CASE("dot-product decay decoder") {
  VectorXd u = VectorXd::Zero(3), v = VectorXd::Zero(3);
  u[0] = 1.0;
  v[1] = 1.0;
  CHECK(decay_dot(u, v, 2.0) == 1.0);
  v[0] = std::log(3.0);
  CHECK(decay_dot(u, v, 2.0) == doctest::Approx(1.5).epsilon(1e-14));
  v[0] = 30.0;
  CHECK(std::abs(decay_dot(u, v, 2.0) - 2.0) <= 1e-9 * 2.0);
  CHECK(decay_dot(u, v, 2.0) < 2.0);
  double prev = 0.0;
  for (double s = -30.0; s <= 30.0; s += 0.5) {
    v[0] = s;
    const double tau = decay_dot(u, v, 2.0);
    CHECK(tau > prev);
    CHECK(tau > 0.0);
    CHECK(tau < 2.0);
    prev = tau;
  }

  DecoderConfig cfg;
  cfg.family = DecoderFamily::dot_product;
  cfg.task = Task::decays;
  cfg.n = 3;
  cfg.heads = 1;
  cfg.decay_max = 2.0;
  const DecoderModel m = make_decoder(cfg, 0);
  VectorXd a(3), b(3);
  a << 1.0, 0.0, 0.0;
  b << 0.0, 0.7, -0.2;  // a.b = 0
  const PairGradient g = decoder_gradients(m, a, b, 0, 1.0);
  CHECK((g.du - 0.25 * 2.0 * b).norm() <= 1e-14);
  CHECK(decode_pair(m, a, b)[0] == 1.0);
}

TEST_CASE("gradients match central finite differences for every family") {
  std::mt19937_64 rng(6);
  for (const FamilyCase& fc : kCases) {
    for (int n : {2, 8, 16}) {
      double worst = 0.0;
      DecoderConfig cfg;
      cfg.family = fc.family;
      cfg.task = fc.task;
      cfg.n = n;
      cfg.heads = fc.heads;
      cfg.hidden = {8, 6};
      DecoderModel m = make_decoder(cfg, 10 + n);
      perturb(m, rng, 0.1);
      for (int t = 0; t < 12; ++t) {
        const double scale = fc.family == DecoderFamily::dot_product ? 0.4 : 1.0;
        const VectorXd u = random_vec(n, rng, scale), v = random_vec(n, rng, scale);
        const int head = t % m.heads;
        const PairGradient g = decoder_gradients(m, u, v, head, 1.0);
        const double h = 1e-6;
        auto out = [&](const DecoderModel& mm, const VectorXd& a, const VectorXd& b) {
          return decode_pair(mm, a, b)[head];
        };
        for (int i = 0; i < n; ++i) {
          VectorXd up = u, um = u, vp = v, vm = v;
          up[i] += h;
          um[i] -= h;
          vp[i] += h;
          vm[i] -= h;
          const double fdu = (out(m, up, v) - out(m, um, v)) / (2 * h);
          const double fdv = (out(m, u, vp) - out(m, u, vm)) / (2 * h);
          worst = std::max({worst, rel_err(fdu, g.du[i]), rel_err(fdv, g.dv[i])});
        }
        std::uniform_int_distribution<Eigen::Index> pick(0, std::max<Eigen::Index>(m.params.size() - 1, 0));
        for (int k = 0; k < std::min<Eigen::Index>(m.params.size(), 24); ++k) {
          const Eigen::Index p = pick(rng);
          DecoderModel mp = m, mm = m;
          mp.params[p] += h;
          mm.params[p] -= h;
          worst = std::max(worst, rel_err((out(mp, u, v) - out(mm, u, v)) / (2 * h), g.dparams[p]));
        }
      }
      INFO(to_string(fc.family), " ", to_string(fc.task), " n=", n);
      CHECK(worst <= 1e-4);
    }
  }
}

TEST_CASE("batched evaluation matches single pairs and swaps symmetrically") {
  std::mt19937_64 rng(7);
  for (const FamilyCase& fc : kCases) {
    DecoderConfig cfg;
    cfg.family = fc.family;
    cfg.task = fc.task;
    cfg.n = 8;
    cfg.heads = fc.heads;
    DecoderModel m = make_decoder(cfg, 3);
    perturb(m, rng, 0.05);
    const VectorXd u = random_vec(8, rng);
    MatrixXd V(8, 5);
    for (int j = 0; j < 5; ++j) V.col(j) = random_vec(8, rng);
    const MatrixXd batch = decode(m, u, V);
    for (int j = 0; j < 5; ++j) {
      const VectorXd one = decode_pair(m, u, V.col(j));
      const VectorXd swapped = decode_pair(m, V.col(j), u);
      for (int h = 0; h < m.heads; ++h) {
        CHECK(batch(h, j) == doctest::Approx(one[h]).epsilon(1e-13));
        if (fc.family == DecoderFamily::mlp)
          CHECK(one[h] == swapped[h]);
        else
          CHECK(one[h] == doctest::Approx(swapped[h]).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("parameter and FLOP counts") {
  CHECK(make(DecoderFamily::riemann_psd, Task::distance, 16).param_count() == 4096);
  CHECK(make(DecoderFamily::riemann_diag, Task::distance, 16).param_count() == 256);
  CHECK(make(DecoderFamily::mlp, Task::distance, 16, {32, 32}).param_count() == 2145);
  CHECK(make(DecoderFamily::mlp, Task::distance, 16, {128, 64, 32}).param_count() == 14593);
  CHECK(make(DecoderFamily::euclidean, Task::distance, 16).param_count() == 0);
  DecoderConfig dot;
  dot.family = DecoderFamily::dot_product;
  dot.task = Task::decays;
  dot.heads = 1;
  const DecoderModel dm = make_decoder(dot, 0);
  CHECK(dm.param_count() == 0);

  auto within = [](std::size_t got, double reference) { return std::abs(static_cast<double>(got) - reference) <= 0.15 * reference; };
  CHECK(within(flop_count(make(DecoderFamily::euclidean, Task::distance, 16)), 46.0));
  CHECK(within(flop_count(make(DecoderFamily::riemann_diag, Task::distance, 16)), 335.0));
  CHECK(within(flop_count(dm), 32.0));
  CHECK(flop_count(make(DecoderFamily::euclidean, Task::distance, 16)) == 48);

  // Hand count for a tiny mlp: 2 passes of (4*3 + 3 + 3 relu + 3*1 + 1) plus sum and halve.
  CHECK(flop_count(make(DecoderFamily::mlp, Task::distance, 2, {3})) == 2 * 22 + 2);
}

TEST_CASE("configuration errors and name round trips") {
  DecoderConfig cfg;
  cfg.n = 0;
  CHECK_THROWS_AS(make_decoder(cfg, 0), Error);
  cfg.n = 4;
  cfg.family = DecoderFamily::dot_product;
  CHECK_THROWS_AS(make_decoder(cfg, 0), Error);
  cfg.family = DecoderFamily::euclidean;
  cfg.task = Task::decays;
  CHECK_THROWS_AS(make_decoder(cfg, 0), Error);
  cfg.task = Task::distance;
  cfg.heads = 2;
  CHECK_THROWS_AS(make_decoder(cfg, 0), Error);
  for (DecoderFamily f : {DecoderFamily::euclidean, DecoderFamily::riemann_psd, DecoderFamily::riemann_diag,
                          DecoderFamily::mlp, DecoderFamily::dot_product})
    CHECK(decoder_family_from_string(to_string(f)) == f);
  for (Task t : {Task::distance, Task::levels, Task::decays}) CHECK(task_from_string(to_string(t)) == t);
  CHECK_THROWS_AS(decoder_family_from_string("bogus"), Error);
}
