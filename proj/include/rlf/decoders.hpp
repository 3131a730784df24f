#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "rlf/types.hpp"

namespace rlf {

enum class DecoderFamily : std::uint32_t {
  euclidean = 0,
  riemann_psd = 1,
  riemann_diag = 2,
  mlp = 3,
  dot_product = 4,
};

/// Which parameter group a decoder serves; fixes the meaning of its heads.
enum class Task : std::uint32_t {
  distance = 0,  // pi
  levels = 1,    // L_DS, L_ER
  decays = 2,    // tau_ER, tau_LR (or a single decay head)
};

std::string_view to_string(DecoderFamily family);
std::string_view to_string(Task task);
DecoderFamily decoder_family_from_string(std::string_view name);
Task task_from_string(std::string_view name);

struct DecoderConfig {
  DecoderFamily family = DecoderFamily::euclidean;
  Task task = Task::distance;
  int n = 16;
  int heads = 0;                   // 0: task default (1 for distance, 2 otherwise)
  std::vector<int> hidden{32, 32};  // mlp only
  double decay_max = 2.0;          // K, s
};

/// One decoder's trainable parameters, stored flat so that optimizers and
/// checkpoints see a single vector. Block order:
///   metric   psd: W (n*n x n), diag: W (n x n), column-major
///   mlp      per layer: W (out x in, column-major), then bias (out)
///   proj     one n x n projection per head >= 1 (non-mlp families)
///   level    L0, w (n), beta (levels task, non-mlp families)
struct DecoderModel {
  DecoderFamily family = DecoderFamily::euclidean;
  Task task = Task::distance;
  int n = 0;
  int heads = 1;
  double decay_max = 2.0;
  std::vector<int> hidden;
  VectorXd params;

  struct Layout {
    Eigen::Index metric = 0;
    Eigen::Index metric_size = 0;
    std::vector<Eigen::Index> mlp_weight;  // offset per layer
    std::vector<Eigen::Index> mlp_bias;
    std::vector<int> mlp_sizes;  // in, hidden..., out
    Eigen::Index projection = 0;
    Eigen::Index level = 0;
    Eigen::Index total = 0;
  } layout;

  std::size_t param_count() const { return static_cast<std::size_t>(params.size()); }
};

/// Lays out parameters for `cfg` and initializes them: projections and the
/// metric at (near) identity, mlp weights He-uniform. When n >= 4 the metric
/// reads latent component 3 (a constant-1 bias channel at grid init) to start
/// at G(m) = I; smaller n fall back to a rank-one map with lambda(mean) = 1.
DecoderModel make_decoder(const DecoderConfig& cfg, std::uint64_t seed,
                          const VectorXd* mean_latent = nullptr);

/// Rebuilds the layout for an existing model (after loading params).
void compute_layout(DecoderModel& model);

int task_default_heads(Task task);

// ---- Single-pair decoders -------------------------------------------------

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclid_distance(const Eigen::MatrixBase<DerivedA>& u,
                                          const Eigen::MatrixBase<DerivedB>& v) {
  return (u - v).norm();
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar decay_dot(const Eigen::MatrixBase<DerivedA>& u,
                                    const Eigen::MatrixBase<DerivedB>& v,
                                    typename DerivedA::Scalar decay_max) {
  using std::exp;
  const auto s = u.dot(v);
  return decay_max / (typename DerivedA::Scalar(1) + exp(-s));
}

/// Midpoint-linearized Riemannian distance (psd or diag family).
double riemann_distance(const VectorXd& u, const VectorXd& v, const DecoderModel& model);
/// Symmetrized MLP output for head `head`.
double mlp_distance(const VectorXd& u, const VectorXd& v, const DecoderModel& model,
                    int head = 0);

struct LevelPair {
  double direct = 0.0;  // L_DS
  double early = 0.0;   // L_ER
};
LevelPair level_heads(const VectorXd& u, const VectorXd& v, const DecoderModel& model);

/// Distance of head `head` in the family's metric (projection applied for
/// heads >= 1). Not defined for mlp and dot-product.
double head_distance(const VectorXd& u, const VectorXd& v, const DecoderModel& model, int head);

// ---- Batched evaluation ---------------------------------------------------

/// All head outputs for one source latent u against receiver latents V
/// (n x R). Returns heads x R.
MatrixXd decode(const DecoderModel& model, const Eigen::Ref<const VectorXd>& u,
                const Eigen::Ref<const MatrixXd>& V);

/// Accumulates gradients of sum(upstream .* decode(u, V)) into du (optional),
/// dV (n x R, optional) and dparams (optional). At u = v distance gradients
/// are zero.
void decode_backward(const DecoderModel& model, const Eigen::Ref<const VectorXd>& u,
                     const Eigen::Ref<const MatrixXd>& V, const Eigen::Ref<const MatrixXd>& upstream,
                     VectorXd* du, MatrixXd* dV, VectorXd* dparams);

/// Single-pair outputs (heads).
VectorXd decode_pair(const DecoderModel& model, const VectorXd& u, const VectorXd& v);

struct PairGradient {
  VectorXd du;
  VectorXd dv;
  VectorXd dparams;
};

/// Gradient of upstream * output[head] for one pair.
PairGradient decoder_gradients(const DecoderModel& model, const VectorXd& u, const VectorXd& v,
                               int head, double upstream);

// ---- Cost accounting ------------------------------------------------------

/// FLOPs of one inference call (all heads), excluding interpolation. Dense
/// matrix-vector products count one fused multiply-add per weight; every
/// other multiply, add/sub, sqrt, exp-based nonlinearity and ReLU counts one.
std::size_t flop_count(const DecoderModel& model);

}  // namespace rlf
