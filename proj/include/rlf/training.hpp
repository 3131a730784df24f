#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "rlf/decoders.hpp"
#include "rlf/error.hpp"
#include "rlf/latent_field.hpp"
#include "rlf/oracle.hpp"
#include "rlf/scene.hpp"

namespace rlf {

enum class Split { train, val, test };
std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

/// Ground truth for one source: the five baked parameter fields.
struct SourceFields {
  Position source = Position::Zero();
  FieldVolume path_distance;
  FieldVolume l_ds;
  FieldVolume l_er;
  FieldVolume tau_er;
  FieldVolume tau_lr;
};

struct Dataset {
  Split split = Split::train;
  std::vector<SourceFields> sources;

  std::size_t size() const { return sources.size(); }
};

/// Field(s) a decoder head is trained against.
const FieldVolume& target_field(const SourceFields& s, Task task, int heads, int head);

/// A latent grid with the decoder that reads it (one parameter family).
struct ParameterGroup {
  LatentGrid grid;
  DecoderModel decoder;
};

/// Grid plus decoder initialized together: metric families get meter-scaled
/// coordinates, dot-product grids coordinates scaled by 1/diagonal.
ParameterGroup make_group(const VoxelScene& scene, const DecoderConfig& cfg, std::uint64_t seed);

struct TrainConfig {
  int epochs = 2000;
  int batch_sources = 4;     // N_B
  double lr_decoder = 1e-3;
  double lr_grid = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int eval_interval = 50;
  bool stop_gradient = true;  // no gradient into the source-position latent
  int workers = 1;

  void validate() const;
};

/// Adaptive-moment optimizer state over one flat parameter block.
struct AdamState {
  VectorXd m;
  VectorXd v;
  std::int64_t step = 0;

  void step_update(Eigen::Ref<VectorXd> params, const Eigen::Ref<const VectorXd>& grad, double lr,
                   const TrainConfig& cfg, const std::vector<std::uint8_t>* frozen = nullptr,
                   int stride = 1);
};

struct Checkpoint {
  int epoch = 0;
  ParameterGroup params;
  std::vector<double> val_mae;  // per head
  double mean_val_mae = 0.0;
};

struct LossRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::vector<double> val_mae;  // empty when not evaluated this epoch
};

struct TrainResult {
  ParameterGroup final;
  std::vector<LossRecord> history;
  std::vector<Checkpoint> checkpoints;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, Checkpoint last_good)
      : Error(ErrorKind::divergence, what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

/// Adaptive source placement: min(initial, free) random free voxels, then
/// sources drawn one at a time from voxels not yet visible from any source
/// until every free voxel is seen. Sources sit at voxel centers.
std::vector<Position> sample_sources(const VoxelScene& scene, std::uint64_t seed, int initial = 20);

/// Splits a source list into train/val/test by a seeded shuffle.
struct SourceSplit {
  std::vector<Position> train, val, test;
};
SourceSplit split_sources(const std::vector<Position>& sources, double val_fraction,
                          double test_fraction, std::uint64_t seed);

Dataset build_dataset(const VoxelScene& scene, const std::vector<Position>& sources, Split split);

/// Mean squared difference over voxels valid in both fields.
double mse_loss(const FieldVolume& pred, const FieldVolume& truth);

/// Sets level offsets (L0, beta) or mlp output biases so the initial mean
/// residual on `data` is zero. No-op for other families.
void fit_output_offsets(ParameterGroup& group, const VoxelScene& scene, const Dataset& data);

using EpochCallback = std::function<void(const LossRecord&)>;

/// Minimizes the per-head MSE summed over heads, averaged over a batch of
/// N_B sources with all receivers. Deterministic for a fixed seed; with
/// workers > 1 per-source gradient buffers are merged in source order.
/// Checkpoints are taken every eval_interval epochs and after the last epoch
/// when a validation set is given.
TrainResult train(const ParameterGroup& init, const VoxelScene& scene, const Dataset& train_set,
                  const Dataset* val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Lowest mean validation MAE over heads; ties go to the earliest epoch.
const Checkpoint& select_best(const std::vector<Checkpoint>& checkpoints);

/// Predicted field of head `head` for a source over every free voxel.
FieldVolume predict_field(const ParameterGroup& group, const VoxelScene& scene,
                          const Position& source, int head);

/// Mean absolute error per head over all sources of `data`.
std::vector<double> evaluate_mae(const ParameterGroup& group, const VoxelScene& scene,
                                 const Dataset& data);

}  // namespace rlf
