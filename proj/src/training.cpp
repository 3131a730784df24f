#include "rlf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "rlf/evalkit.hpp"

namespace rlf {

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return rng() % n; }

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_index(rng, i)]);
}

FieldKind kind_of(Task task) {
  switch (task) {
    case Task::distance: return FieldKind::path_distance;
    case Task::levels: return FieldKind::level;
    case Task::decays: return FieldKind::decay_time;
  }
  return FieldKind::path_distance;
}

// Receivers of one source with all head targets valid, plus targets (heads x R).
struct SourceBatch {
  InterpWeights source_weights;
  std::vector<Eigen::Index> receivers;
  MatrixXd targets;
};

SourceBatch prepare_source(const ParameterGroup& group, const VoxelScene& scene,
                           const SourceFields& s) {
  SourceBatch b;
  b.source_weights = interp_weights(scene, s.source);
  const int heads = group.decoder.heads;
  std::vector<const FieldVolume*> fields;
  for (int h = 0; h < heads; ++h)
    fields.push_back(&target_field(s, group.decoder.task, heads, h));
  for (std::size_t i = 0; i < scene.voxel_count(); ++i) {
    if (scene.occupied(i)) continue;
    bool ok = true;
    for (const auto* f : fields) ok = ok && f->valid(i);
    if (ok) b.receivers.push_back(static_cast<Eigen::Index>(i));
  }
  b.targets.resize(heads, static_cast<Eigen::Index>(b.receivers.size()));
  for (std::size_t r = 0; r < b.receivers.size(); ++r)
    for (int h = 0; h < heads; ++h)
      b.targets(h, static_cast<Eigen::Index>(r)) = fields[h]->values[b.receivers[r]];
  return b;
}

struct SourceGrad {
  double loss = 0.0;
  VectorXd dparams;
  MatrixXd dV;   // n x R, aligned with receivers
  VectorXd du;   // source-side gradient (when not stopped)
};

void source_gradient(const ParameterGroup& g, const SourceBatch& b, double scale, bool stop_gradient,
                     SourceGrad& out) {
  const Eigen::Index R = static_cast<Eigen::Index>(b.receivers.size());
  const VectorXd u = gather(g.grid.values, b.source_weights);
  MatrixXd V(g.grid.n, R);
  for (Eigen::Index r = 0; r < R; ++r) V.col(r) = g.grid.values.col(b.receivers[r]);
  const MatrixXd residual = decode(g.decoder, u, V) - b.targets;
  out.loss = residual.squaredNorm() / static_cast<double>(R);
  const MatrixXd upstream = (2.0 * scale / static_cast<double>(R)) * residual;
  out.dparams = VectorXd::Zero(g.decoder.params.size());
  out.dV = MatrixXd::Zero(g.grid.n, R);
  out.du = VectorXd::Zero(g.grid.n);
  decode_backward(g.decoder, u, V, upstream, stop_gradient ? nullptr : &out.du, &out.dV,
                  &out.dparams);
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw Error(ErrorKind::config, "unknown split '" + std::string(name) + "'");
}

const FieldVolume& target_field(const SourceFields& s, Task task, int heads, int head) {
  switch (task) {
    case Task::distance: return s.path_distance;
    case Task::levels: return head == 0 ? s.l_ds : s.l_er;
    case Task::decays:
      if (heads == 1) return s.tau_lr;
      return head == 0 ? s.tau_er : s.tau_lr;
  }
  return s.path_distance;
}

ParameterGroup make_group(const VoxelScene& scene, const DecoderConfig& cfg, std::uint64_t seed) {
  LatentInit init;
  init.seed = seed;
  if (cfg.family == DecoderFamily::dot_product) init.coord_scale = 1.0 / scene.diagonal();
  ParameterGroup g;
  g.grid = make_latent_grid(scene, cfg.n, init);
  VectorXd mean = VectorXd::Zero(cfg.n);
  for (std::size_t v = 0; v < scene.voxel_count(); ++v)
    if (!scene.occupied(v)) mean += g.grid.values.col(static_cast<Eigen::Index>(v));
  mean /= static_cast<double>(scene.free_count());
  g.decoder = make_decoder(cfg, seed ^ 0x9e3779b97f4a7c15ULL, &mean);
  return g;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::config, "epochs must be >= 1");
  if (batch_sources < 1) throw Error(ErrorKind::config, "batch size must be >= 1");
  if (lr_grid < 0.0 || lr_decoder < 0.0) throw Error(ErrorKind::config, "learning rates must be >= 0");
  if (lr_grid > lr_decoder)
    throw Error(ErrorKind::config, "grid learning rate must not exceed the decoder learning rate");
  if (eval_interval < 1) throw Error(ErrorKind::config, "eval interval must be >= 1");
  if (workers < 1) throw Error(ErrorKind::config, "workers must be >= 1");
}

void AdamState::step_update(Eigen::Ref<VectorXd> params, const Eigen::Ref<const VectorXd>& grad,
                            double lr, const TrainConfig& cfg,
                            const std::vector<std::uint8_t>* frozen, int stride) {
  if (m.size() != params.size()) {
    m = VectorXd::Zero(params.size());
    v = VectorXd::Zero(params.size());
  }
  ++step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (frozen && (*frozen)[static_cast<std::size_t>(i / stride)]) continue;
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
  }
}

std::vector<Position> sample_sources(const VoxelScene& scene, std::uint64_t seed, int initial) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < scene.voxel_count(); ++i)
    if (!scene.occupied(i)) free.push_back(i);

  std::vector<Position> sources;
  std::vector<std::uint8_t> covered(scene.voxel_count(), 0);
  const auto add = [&](std::size_t idx) {
    const Position p = scene.center(idx);
    sources.push_back(p);
    const auto mask = visible_voxels(scene, p);
    for (std::size_t i = 0; i < mask.size(); ++i) covered[i] |= mask[i];
  };

  const std::size_t first = std::min<std::size_t>(static_cast<std::size_t>(std::max(initial, 0)), free.size());
  for (std::size_t i = 0; i < first; ++i) {
    std::swap(free[i], free[i + uniform_index(rng, free.size() - i)]);
    add(free[i]);
  }
  for (;;) {
    std::vector<std::size_t> remaining;
    for (std::size_t idx : free)
      if (!covered[idx]) remaining.push_back(idx);
    if (remaining.empty()) break;
    add(remaining[uniform_index(rng, remaining.size())]);
  }
  return sources;
}

SourceSplit split_sources(const std::vector<Position>& sources, double val_fraction,
                          double test_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0)
    throw Error(ErrorKind::config, "split fractions must be >= 0 and sum below 1");
  std::vector<Position> order = sources;
  std::mt19937_64 rng(seed);
  shuffle(order, rng);
  const auto n = order.size();
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  SourceSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_val)
      s.val.push_back(order[i]);
    else if (i < n_val + n_test)
      s.test.push_back(order[i]);
    else
      s.train.push_back(order[i]);
  }
  return s;
}

Dataset build_dataset(const VoxelScene& scene, const std::vector<Position>& sources, Split split) {
  Dataset d;
  d.split = split;
  d.sources.reserve(sources.size());
  for (const Position& p : sources) {
    SourceFields s;
    s.source = p;
    s.path_distance = geodesic_field(scene, p);
    auto syn = synth_acoustic_fields(scene, p, s.path_distance);
    s.l_ds = std::move(syn.l_ds);
    s.l_er = std::move(syn.l_er);
    s.tau_er = std::move(syn.tau_er);
    s.tau_lr = std::move(syn.tau_lr);
    d.sources.push_back(std::move(s));
  }
  return d;
}

double mse_loss(const FieldVolume& pred, const FieldVolume& truth) {
  if (pred.dims != truth.dims || pred.components() != truth.components())
    throw Error(ErrorKind::config, "field dims do not match");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (!is_valid(pred.values[i]) || !is_valid(truth.values[i])) continue;
    const double d = pred.values[i] - truth.values[i];
    sum += d * d;
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::input, "no valid voxels to compare");
  return sum / static_cast<double>(count);
}

void fit_output_offsets(ParameterGroup& group, const VoxelScene& scene, const Dataset& data) {
  auto& dec = group.decoder;
  const bool levels = dec.task == Task::levels && dec.family != DecoderFamily::mlp;
  if (!levels && dec.family != DecoderFamily::mlp) return;
  VectorXd residual = VectorXd::Zero(dec.heads);
  std::size_t count = 0;
  for (const auto& s : data.sources) {
    const SourceBatch b = prepare_source(group, scene, s);
    if (b.receivers.empty()) continue;
    const VectorXd u = gather(group.grid.values, b.source_weights);
    MatrixXd V(group.grid.n, static_cast<Eigen::Index>(b.receivers.size()));
    for (std::size_t r = 0; r < b.receivers.size(); ++r)
      V.col(static_cast<Eigen::Index>(r)) = group.grid.values.col(b.receivers[r]);
    residual += (b.targets - decode(dec, u, V)).rowwise().sum();
    count += b.receivers.size();
  }
  if (count == 0) return;
  residual /= static_cast<double>(count);
  if (levels) {
    dec.params[dec.layout.level] += residual[0];
    dec.params[dec.layout.level + 1 + dec.n] += residual[1];
  } else {
    const std::size_t last = dec.layout.mlp_bias.size() - 1;
    for (int h = 0; h < dec.heads; ++h) dec.params[dec.layout.mlp_bias[last] + h] += residual[h];
  }
}

TrainResult train(const ParameterGroup& init, const VoxelScene& scene, const Dataset& train_set,
                  const Dataset* val_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (init.grid.dims != scene.dims())
    throw Error(ErrorKind::config, "latent grid dims do not match the scene");
  if (init.grid.n != init.decoder.n)
    throw Error(ErrorKind::config, "latent dimension does not match the decoder");
  if (train_set.sources.empty()) throw Error(ErrorKind::config, "training set is empty");

  TrainResult result;
  result.final = init;
  ParameterGroup& g = result.final;

  std::vector<SourceBatch> batches;
  batches.reserve(train_set.size());
  for (const auto& s : train_set.sources) batches.push_back(prepare_source(g, scene, s));

  std::vector<std::uint8_t> frozen(scene.voxel_count());
  for (std::size_t i = 0; i < frozen.size(); ++i) frozen[i] = scene.occupied(i) ? 1 : 0;

  AdamState adam_grid, adam_dec;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(batches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  MatrixXd grid_grad(g.grid.values.rows(), g.grid.values.cols());
  VectorXd dec_grad(g.decoder.params.size());

  const auto snapshot = [&](int epoch, std::vector<double> mae) {
    Checkpoint c;
    c.epoch = epoch;
    c.params = g;
    c.mean_val_mae = mae.empty() ? 0.0
                                 : std::accumulate(mae.begin(), mae.end(), 0.0) /
                                       static_cast<double>(mae.size());
    c.val_mae = std::move(mae);
    return c;
  };
  Checkpoint last_good = snapshot(0, {});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_sources)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_sources));
      const std::size_t count = end - start;
      const double scale = 1.0 / static_cast<double>(count);
      std::vector<SourceGrad> grads(count);

      const auto work = [&](std::size_t w) {
        for (std::size_t i = w; i < count; i += static_cast<std::size_t>(cfg.workers))
          source_gradient(g, batches[order[start + i]], scale, cfg.stop_gradient, grads[i]);
      };
      if (cfg.workers == 1 || count == 1) {
        work(0);
      } else {
        std::vector<std::jthread> pool;
        const auto nw = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), count);
        for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(work, w);
      }

      grid_grad.setZero();
      dec_grad.setZero();
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const SourceBatch& b = batches[order[start + i]];
        batch_loss += grads[i].loss * scale;
        dec_grad += grads[i].dparams;
        for (std::size_t r = 0; r < b.receivers.size(); ++r)
          grid_grad.col(b.receivers[r]) += grads[i].dV.col(static_cast<Eigen::Index>(r));
        if (!cfg.stop_gradient) interp_backward(b.source_weights, grads[i].du, grid_grad);
      }
      if (!std::isfinite(batch_loss))
        throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch),
                              last_good);
      epoch_loss += batch_loss * static_cast<double>(count);

      adam_dec.step_update(g.decoder.params, dec_grad, cfg.lr_decoder, cfg);
      Eigen::Map<VectorXd> flat_grid(g.grid.values.data(), g.grid.values.size());
      const Eigen::Map<const VectorXd> flat_grad(grid_grad.data(), grid_grad.size());
      adam_grid.step_update(flat_grid, flat_grad, cfg.lr_grid, cfg, &frozen, g.grid.n);
    }

    LossRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    if (!std::isfinite(rec.train_loss))
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch),
                            last_good);
    const bool eval_now = epoch % cfg.eval_interval == 0 || epoch == cfg.epochs;
    if (eval_now) {
      std::vector<double> mae;
      if (val_set && !val_set->sources.empty()) mae = evaluate_mae(g, scene, *val_set);
      rec.val_mae = mae;
      last_good = snapshot(epoch, mae);
      if (val_set && !val_set->sources.empty()) result.checkpoints.push_back(last_good);
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

const Checkpoint& select_best(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty()) throw Error(ErrorKind::input, "no checkpoints to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    const auto& c = checkpoints[i];
    const auto& b = checkpoints[best];
    if (c.mean_val_mae < b.mean_val_mae ||
        (c.mean_val_mae == b.mean_val_mae && c.epoch < b.epoch))
      best = i;
  }
  return checkpoints[best];
}

FieldVolume predict_field(const ParameterGroup& group, const VoxelScene& scene,
                          const Position& source, int head) {
  const InterpResult src = interp_latent(group.grid, scene, source);
  std::vector<Eigen::Index> receivers;
  for (std::size_t i = 0; i < scene.voxel_count(); ++i)
    if (!scene.occupied(i)) receivers.push_back(static_cast<Eigen::Index>(i));
  MatrixXd V(group.grid.n, static_cast<Eigen::Index>(receivers.size()));
  for (std::size_t r = 0; r < receivers.size(); ++r)
    V.col(static_cast<Eigen::Index>(r)) = group.grid.values.col(receivers[r]);
  const MatrixXd out = decode(group.decoder, src.latent, V);
  FieldVolume f = FieldVolume::filled(scene.dims(), kind_of(group.decoder.task), source);
  for (std::size_t r = 0; r < receivers.size(); ++r)
    f.values[static_cast<std::size_t>(receivers[r])] = out(head, static_cast<Eigen::Index>(r));
  return f;
}

std::vector<double> evaluate_mae(const ParameterGroup& group, const VoxelScene& scene,
                                 const Dataset& data) {
  std::vector<double> mae(static_cast<std::size_t>(group.decoder.heads), 0.0);
  if (data.sources.empty()) return mae;
  for (const auto& s : data.sources)
    for (int h = 0; h < group.decoder.heads; ++h)
      mae[static_cast<std::size_t>(h)] +=
          mae_field(predict_field(group, scene, s.source, h),
                    target_field(s, group.decoder.task, group.decoder.heads, h));
  for (double& m : mae) m /= static_cast<double>(data.sources.size());
  return mae;
}

}  // namespace rlf
