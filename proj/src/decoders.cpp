#include "rlf/decoders.hpp"

#include <array>
#include <random>

#include "rlf/error.hpp"

namespace rlf {

namespace {

constexpr std::array<std::pair<DecoderFamily, std::string_view>, 5> kFamilyNames{{
    {DecoderFamily::euclidean, "euclidean"},
    {DecoderFamily::riemann_psd, "riemann-psd"},
    {DecoderFamily::riemann_diag, "riemann-diag"},
    {DecoderFamily::mlp, "mlp"},
    {DecoderFamily::dot_product, "dot-product"},
}};
constexpr std::array<std::pair<Task, std::string_view>, 3> kTaskNames{{
    {Task::distance, "distance"},
    {Task::levels, "levels"},
    {Task::decays, "decays"},
}};

// Component of the latent that carries the constant bias at grid init.
constexpr int kBiasChannel = 3;

using RowVectorXd = Eigen::RowVectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

bool is_metric(DecoderFamily f) {
  return f == DecoderFamily::euclidean || f == DecoderFamily::riemann_psd ||
         f == DecoderFamily::riemann_diag;
}

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

ConstMap metric_weights(const DecoderModel& m) {
  const Eigen::Index n = m.n;
  const Eigen::Index rows = m.family == DecoderFamily::riemann_psd ? n * n : n;
  return ConstMap(m.params.data() + m.layout.metric, rows, n);
}

ConstMap projection(const DecoderModel& m, int head) {
  const Eigen::Index n = m.n;
  return ConstMap(m.params.data() + m.layout.projection + (head - 1) * n * n, n, n);
}

// ---- metric core over column pairs ----------------------------------------

RowVectorXd metric_forward(const DecoderModel& m, const MatrixXd& U, const MatrixXd& V) {
  const Eigen::Index n = m.n;
  const Eigen::Index R = U.cols();
  const MatrixXd delta = U - V;
  switch (m.family) {
    case DecoderFamily::euclidean:
      return delta.colwise().norm();
    case DecoderFamily::riemann_diag: {
      const MatrixXd mid = 0.5 * (U + V);
      const MatrixXd lam = metric_weights(m) * mid;
      return lam.cwiseProduct(delta).colwise().norm();
    }
    case DecoderFamily::riemann_psd: {
      const MatrixXd mid = 0.5 * (U + V);
      const MatrixXd lam = metric_weights(m) * mid;  // n*n x R
      RowVectorXd d(R);
      for (Eigen::Index j = 0; j < R; ++j) {
        const ConstMap L(lam.col(j).data(), n, n);
        d[j] = (L * delta.col(j)).norm();
      }
      return d;
    }
    default:
      throw Error(ErrorKind::config, "metric evaluation requested for a non-metric family");
  }
}

// Accumulates gradients of sum(g .* d) into dU, dV and (optionally) the metric block.
void metric_backward(const DecoderModel& m, const MatrixXd& U, const MatrixXd& V,
                     const RowVectorXd& g, MatrixXd& dU, MatrixXd& dV, VectorXd* dparams) {
  const Eigen::Index n = m.n;
  const Eigen::Index R = U.cols();
  const MatrixXd delta = U - V;
  switch (m.family) {
    case DecoderFamily::euclidean: {
      const RowVectorXd d = delta.colwise().norm();
      for (Eigen::Index j = 0; j < R; ++j) {
        if (d[j] <= 0.0) continue;
        const double c = g[j] / d[j];
        dU.col(j) += c * delta.col(j);
        dV.col(j) -= c * delta.col(j);
      }
      return;
    }
    case DecoderFamily::riemann_diag: {
      const auto W = metric_weights(m);
      const MatrixXd mid = 0.5 * (U + V);
      const MatrixXd lam = W * mid;
      MatrixXd r = lam.cwiseProduct(delta);
      const RowVectorXd d = r.colwise().norm();
      for (Eigen::Index j = 0; j < R; ++j) r.col(j) *= d[j] > 0.0 ? g[j] / d[j] : 0.0;
      const MatrixXd g_lam = r.cwiseProduct(delta);
      const MatrixXd g_delta = r.cwiseProduct(lam);
      const MatrixXd g_mid = W.transpose() * g_lam;
      dU += g_delta + 0.5 * g_mid;
      dV += -g_delta + 0.5 * g_mid;
      if (dparams) {
        Map dW(dparams->data() + m.layout.metric, n, n);
        dW.noalias() += g_lam * mid.transpose();
      }
      return;
    }
    case DecoderFamily::riemann_psd: {
      const auto W = metric_weights(m);
      const MatrixXd mid = 0.5 * (U + V);
      const MatrixXd lam = W * mid;
      MatrixXd g_lam(n * n, R);
      MatrixXd g_delta(n, R);
      for (Eigen::Index j = 0; j < R; ++j) {
        const ConstMap L(lam.col(j).data(), n, n);
        const VectorXd r = L * delta.col(j);
        const double d = r.norm();
        if (d <= 0.0) {
          g_lam.col(j).setZero();
          g_delta.col(j).setZero();
          continue;
        }
        const VectorXd gr = (g[j] / d) * r;
        Map(g_lam.col(j).data(), n, n).noalias() = gr * delta.col(j).transpose();
        g_delta.col(j).noalias() = L.transpose() * gr;
      }
      const MatrixXd g_mid = W.transpose() * g_lam;
      dU += g_delta + 0.5 * g_mid;
      dV += -g_delta + 0.5 * g_mid;
      if (dparams) {
        Map dW(dparams->data() + m.layout.metric, n * n, n);
        dW.noalias() += g_lam * mid.transpose();
      }
      return;
    }
    default:
      throw Error(ErrorKind::config, "metric gradient requested for a non-metric family");
  }
}

// ---- mlp ------------------------------------------------------------------

struct MlpTrace {
  std::vector<MatrixXd> act;  // act[0] = input, act[L] = output
};

MlpTrace mlp_forward(const DecoderModel& m, const MatrixXd& X) {
  const auto& sizes = m.layout.mlp_sizes;
  const std::size_t layers = sizes.size() - 1;
  MlpTrace t;
  t.act.reserve(layers + 1);
  t.act.push_back(X);
  for (std::size_t l = 0; l < layers; ++l) {
    const ConstMap W(m.params.data() + m.layout.mlp_weight[l], sizes[l + 1], sizes[l]);
    const Eigen::Map<const VectorXd> b(m.params.data() + m.layout.mlp_bias[l], sizes[l + 1]);
    MatrixXd z = W * t.act.back();
    z.colwise() += b;
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    t.act.push_back(std::move(z));
  }
  return t;
}

// Returns dL/dX given dL/d(output).
MatrixXd mlp_backward(const DecoderModel& m, const MlpTrace& t, MatrixXd grad, VectorXd* dparams) {
  const auto& sizes = m.layout.mlp_sizes;
  const std::size_t layers = sizes.size() - 1;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) grad = grad.cwiseProduct((t.act[l + 1].array() > 0.0).cast<double>().matrix());
    const ConstMap W(m.params.data() + m.layout.mlp_weight[l], sizes[l + 1], sizes[l]);
    if (dparams) {
      Map dW(dparams->data() + m.layout.mlp_weight[l], sizes[l + 1], sizes[l]);
      dW.noalias() += grad * t.act[l].transpose();
      Eigen::Map<VectorXd> db(dparams->data() + m.layout.mlp_bias[l], sizes[l + 1]);
      db += grad.rowwise().sum();
    }
    grad = W.transpose() * grad;
  }
  return grad;
}

MatrixXd stack(const MatrixXd& top, const MatrixXd& bottom) {
  MatrixXd x(top.rows() + bottom.rows(), top.cols());
  x << top, bottom;
  return x;
}

void validate(const DecoderConfig& cfg, int heads) {
  if (cfg.n < 1) throw Error(ErrorKind::config, "latent dimension must be >= 1");
  if (cfg.family == DecoderFamily::dot_product && cfg.task != Task::decays)
    throw Error(ErrorKind::config, "dot-product decoder only predicts decay times");
  if (is_metric(cfg.family) && cfg.task == Task::decays)
    throw Error(ErrorKind::config, "metric decoders predict distances and levels only");
  if (cfg.task == Task::distance && heads != 1)
    throw Error(ErrorKind::config, "distance task has exactly one head");
  if (cfg.task == Task::levels && heads != 2)
    throw Error(ErrorKind::config, "levels task has exactly two heads");
  if (cfg.task == Task::decays && (heads < 1 || heads > 2))
    throw Error(ErrorKind::config, "decays task has one or two heads");
  if (!(cfg.decay_max > 0.0)) throw Error(ErrorKind::config, "decay_max must be positive");
  if (cfg.family == DecoderFamily::mlp)
    for (int h : cfg.hidden)
      if (h < 1) throw Error(ErrorKind::config, "mlp hidden sizes must be positive");
}

}  // namespace

std::string_view to_string(DecoderFamily family) {
  for (const auto& [f, name] : kFamilyNames)
    if (f == family) return name;
  return "unknown";
}

std::string_view to_string(Task task) {
  for (const auto& [t, name] : kTaskNames)
    if (t == task) return name;
  return "unknown";
}

DecoderFamily decoder_family_from_string(std::string_view name) {
  for (const auto& [f, n] : kFamilyNames)
    if (n == name) return f;
  throw Error(ErrorKind::config, "unknown decoder family '" + std::string(name) + "'");
}

Task task_from_string(std::string_view name) {
  for (const auto& [t, n] : kTaskNames)
    if (n == name) return t;
  throw Error(ErrorKind::config, "unknown task '" + std::string(name) + "'");
}

int task_default_heads(Task task) { return task == Task::distance ? 1 : 2; }

void compute_layout(DecoderModel& m) {
  const Eigen::Index n = m.n;
  DecoderModel::Layout l;
  Eigen::Index off = 0;
  l.metric = off;
  if (m.family == DecoderFamily::riemann_psd) l.metric_size = n * n * n;
  if (m.family == DecoderFamily::riemann_diag) l.metric_size = n * n;
  off += l.metric_size;
  if (m.family == DecoderFamily::mlp) {
    l.mlp_sizes.push_back(2 * m.n);
    for (int h : m.hidden) l.mlp_sizes.push_back(h);
    l.mlp_sizes.push_back(m.heads);
    for (std::size_t i = 0; i + 1 < l.mlp_sizes.size(); ++i) {
      l.mlp_weight.push_back(off);
      off += static_cast<Eigen::Index>(l.mlp_sizes[i]) * l.mlp_sizes[i + 1];
      l.mlp_bias.push_back(off);
      off += l.mlp_sizes[i + 1];
    }
  }
  l.projection = off;
  if (m.family != DecoderFamily::mlp) off += static_cast<Eigen::Index>(m.heads - 1) * n * n;
  l.level = off;
  if (m.task == Task::levels && m.family != DecoderFamily::mlp) off += n + 2;
  l.total = off;
  m.layout = std::move(l);
}

DecoderModel make_decoder(const DecoderConfig& cfg, std::uint64_t seed,
                          const VectorXd* mean_latent) {
  const int heads = cfg.heads > 0 ? cfg.heads : task_default_heads(cfg.task);
  validate(cfg, heads);
  DecoderModel m;
  m.family = cfg.family;
  m.task = cfg.task;
  m.n = cfg.n;
  m.heads = heads;
  m.decay_max = cfg.decay_max;
  if (cfg.family == DecoderFamily::mlp) m.hidden = cfg.hidden;
  compute_layout(m);
  m.params = VectorXd::Zero(m.layout.total);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> small(-1e-3, 1e-3);
  const Eigen::Index n = m.n;

  // Weights of the metric layer applied to a latent direction giving lambda = 1
  // (diag) or Lambda = I (psd).
  VectorXd probe = VectorXd::Zero(n);
  if (n > kBiasChannel) {
    probe[kBiasChannel] = 1.0;
  } else if (mean_latent && mean_latent->norm() > 1e-9) {
    probe = *mean_latent / mean_latent->squaredNorm();
  } else {
    probe.setConstant(1.0 / static_cast<double>(n));
  }

  if (m.family == DecoderFamily::riemann_diag) {
    Map W(m.params.data() + m.layout.metric, n, n);
    W = VectorXd::Ones(n) * probe.transpose();
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] += small(rng);
  } else if (m.family == DecoderFamily::riemann_psd) {
    Map W(m.params.data() + m.layout.metric, n * n, n);
    const MatrixXd eye = MatrixXd::Identity(n, n);
    const Eigen::Map<const VectorXd> vec_eye(eye.data(), n * n);
    W = vec_eye * probe.transpose();
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] += small(rng);
  } else if (m.family == DecoderFamily::mlp) {
    const auto& sizes = m.layout.mlp_sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const double bound = std::sqrt(6.0 / sizes[l]) * (l + 2 == sizes.size() ? 0.5 : 1.0);
      std::uniform_real_distribution<double> he(-bound, bound);
      Map W(m.params.data() + m.layout.mlp_weight[l], sizes[l + 1], sizes[l]);
      for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = he(rng);
    }
  }
  if (m.family != DecoderFamily::mlp) {
    for (int h = 1; h < m.heads; ++h) {
      Map P(m.params.data() + m.layout.projection + (h - 1) * n * n, n, n);
      P.setIdentity();
      for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] += small(rng);
    }
  }
  return m;
}

MatrixXd decode(const DecoderModel& m, const Eigen::Ref<const VectorXd>& u,
                const Eigen::Ref<const MatrixXd>& V) {
  const Eigen::Index R = V.cols();
  const MatrixXd U = u.replicate(1, R);
  MatrixXd out(m.heads, R);
  if (m.family == DecoderFamily::mlp) {
    const MlpTrace a = mlp_forward(m, stack(U, V));
    const MlpTrace b = mlp_forward(m, stack(V, U));
    out = 0.5 * (a.act.back() + b.act.back());
    return out;
  }
  for (int h = 0; h < m.heads; ++h) {
    MatrixXd Uh, Vh;
    if (h == 0) {
      Uh = U;
      Vh = V;
    } else {
      const auto P = projection(m, h);
      Uh = P * U;
      Vh = P * V;
    }
    if (m.family == DecoderFamily::dot_product) {
      const RowVectorXd s = Uh.cwiseProduct(Vh).colwise().sum();
      for (Eigen::Index j = 0; j < R; ++j) out(h, j) = m.decay_max * sigmoid(s[j]);
      continue;
    }
    const RowVectorXd d = metric_forward(m, Uh, Vh);
    if (m.task == Task::distance) {
      out.row(h) = d;
    } else if (h == 0) {
      out.row(h) = m.params[m.layout.level] - d.array();
    } else {
      const Eigen::Map<const VectorXd> w(m.params.data() + m.layout.level + 1, m.n);
      const double beta = m.params[m.layout.level + 1 + m.n];
      const RowVectorXd local = 0.5 * (w.transpose() * (U + V));
      out.row(h) = (local.array() + beta - d.array()).matrix();
    }
  }
  return out;
}

void decode_backward(const DecoderModel& m, const Eigen::Ref<const VectorXd>& u,
                     const Eigen::Ref<const MatrixXd>& V, const Eigen::Ref<const MatrixXd>& upstream,
                     VectorXd* du, MatrixXd* dV, VectorXd* dparams) {
  const Eigen::Index R = V.cols();
  const Eigen::Index n = m.n;
  const MatrixXd U = u.replicate(1, R);
  MatrixXd dU = MatrixXd::Zero(n, R);
  MatrixXd dVl = MatrixXd::Zero(n, R);

  if (m.family == DecoderFamily::mlp) {
    const MlpTrace a = mlp_forward(m, stack(U, V));
    const MlpTrace b = mlp_forward(m, stack(V, U));
    const MatrixXd half = 0.5 * upstream;
    const MatrixXd ga = mlp_backward(m, a, half, dparams);
    const MatrixXd gb = mlp_backward(m, b, half, dparams);
    dU = ga.topRows(n) + gb.bottomRows(n);
    dVl = ga.bottomRows(n) + gb.topRows(n);
  } else {
    for (int h = 0; h < m.heads; ++h) {
      const RowVectorXd g = upstream.row(h);
      MatrixXd Uh = U, Vh = V;
      if (h > 0) {
        const auto P = projection(m, h);
        Uh = P * U;
        Vh = P * V;
      }
      MatrixXd dUh = MatrixXd::Zero(n, R);
      MatrixXd dVh = MatrixXd::Zero(n, R);
      if (m.family == DecoderFamily::dot_product) {
        const RowVectorXd s = Uh.cwiseProduct(Vh).colwise().sum();
        RowVectorXd gs(R);
        for (Eigen::Index j = 0; j < R; ++j) {
          const double sg = sigmoid(s[j]);
          gs[j] = g[j] * m.decay_max * sg * (1.0 - sg);
        }
        dUh = Vh * gs.asDiagonal();
        dVh = Uh * gs.asDiagonal();
      } else if (m.task == Task::distance) {
        metric_backward(m, Uh, Vh, g, dUh, dVh, dparams);
      } else {
        // Levels: out0 = L0 - d, out1 = mean(w.u + beta) - d.
        const RowVectorXd neg = -g;
        metric_backward(m, Uh, Vh, neg, dUh, dVh, dparams);
        if (h == 0) {
          if (dparams) (*dparams)[m.layout.level] += g.sum();
        } else {
          const Eigen::Map<const VectorXd> w(m.params.data() + m.layout.level + 1, n);
          dU += 0.5 * w * g;
          dVl += 0.5 * w * g;
          if (dparams) {
            Eigen::Map<VectorXd> dw(dparams->data() + m.layout.level + 1, n);
            dw.noalias() += 0.5 * (U + V) * g.transpose();
            (*dparams)[m.layout.level + 1 + n] += g.sum();
          }
        }
      }
      if (h == 0) {
        dU += dUh;
        dVl += dVh;
      } else {
        const auto P = projection(m, h);
        dU.noalias() += P.transpose() * dUh;
        dVl.noalias() += P.transpose() * dVh;
        if (dparams) {
          Map dP(dparams->data() + m.layout.projection + (h - 1) * n * n, n, n);
          dP.noalias() += dUh * U.transpose() + dVh * V.transpose();
        }
      }
    }
  }
  if (du) *du += dU.rowwise().sum();
  if (dV) *dV += dVl;
}

VectorXd decode_pair(const DecoderModel& model, const VectorXd& u, const VectorXd& v) {
  return decode(model, u, v);
}

double riemann_distance(const VectorXd& u, const VectorXd& v, const DecoderModel& model) {
  if (model.family != DecoderFamily::riemann_psd && model.family != DecoderFamily::riemann_diag)
    throw Error(ErrorKind::config, "riemann_distance needs a psd or diag decoder");
  return metric_forward(model, u, v)[0];
}

double head_distance(const VectorXd& u, const VectorXd& v, const DecoderModel& model, int head) {
  if (!is_metric(model.family))
    throw Error(ErrorKind::config, "head_distance needs a metric decoder");
  if (head == 0) return metric_forward(model, u, v)[0];
  const auto P = projection(model, head);
  return metric_forward(model, P * u, P * v)[0];
}

double mlp_distance(const VectorXd& u, const VectorXd& v, const DecoderModel& model, int head) {
  if (model.family != DecoderFamily::mlp)
    throw Error(ErrorKind::config, "mlp_distance needs an mlp decoder");
  return decode(model, u, v)(head, 0);
}

LevelPair level_heads(const VectorXd& u, const VectorXd& v, const DecoderModel& model) {
  if (model.task != Task::levels) throw Error(ErrorKind::config, "decoder has no level heads");
  const MatrixXd out = decode(model, u, v);
  return {out(0, 0), out(1, 0)};
}

PairGradient decoder_gradients(const DecoderModel& model, const VectorXd& u, const VectorXd& v,
                               int head, double upstream) {
  PairGradient g{VectorXd::Zero(model.n), VectorXd::Zero(model.n),
                 VectorXd::Zero(static_cast<Eigen::Index>(model.param_count()))};
  MatrixXd up = MatrixXd::Zero(model.heads, 1);
  up(head, 0) = upstream;
  MatrixXd dV = MatrixXd::Zero(model.n, 1);
  decode_backward(model, u, v, up, &g.du, &dV, &g.dparams);
  g.dv = dV.col(0);
  return g;
}

std::size_t flop_count(const DecoderModel& m) {
  const std::size_t n = static_cast<std::size_t>(m.n);
  const auto heads = static_cast<std::size_t>(m.heads);
  if (m.family == DecoderFamily::mlp) {
    std::size_t pass = 0;
    const auto& s = m.layout.mlp_sizes;
    for (std::size_t l = 0; l + 1 < s.size(); ++l) {
      pass += static_cast<std::size_t>(s[l]) * s[l + 1] + s[l + 1];  // FMA per weight, bias add
      if (l + 2 < s.size()) pass += s[l + 1];                           // ReLU
    }
    return 2 * pass + 2 * heads;  // two passes, sum and halve
  }
  std::size_t per_head = 0;
  switch (m.family) {
    case DecoderFamily::euclidean:
      per_head = n + n + (n - 1) + 1;  // diff, square, sum, sqrt
      break;
    case DecoderFamily::riemann_diag:
      // midpoint (add, halve), lambda(m), diff, weight, square, sum, sqrt
      per_head = 2 * n + n * n + n + n + n + (n - 1) + 1;
      break;
    case DecoderFamily::riemann_psd:
      // midpoint, Lambda(m), diff, Lambda * diff, square, sum, sqrt
      per_head = 2 * n + n * n * n + n + n * n + n + (n - 1) + 1;
      break;
    case DecoderFamily::dot_product:
      per_head = n + (n - 1) + 1 + 1;  // products, sum, sigmoid, scale by K
      break;
    default:
      break;
  }
  std::size_t total = heads * per_head + (heads - 1) * 2 * n * n;  // projections of both latents
  if (m.task == Task::levels) total += 1 + (2 * n + 3);
  return total;
}

}  // namespace rlf
