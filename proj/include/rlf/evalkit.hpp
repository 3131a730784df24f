#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlf/decoders.hpp"
#include "rlf/oracle.hpp"
#include "rlf/training.hpp"

namespace rlf {

/// Mean |pred - truth| over voxels valid in both fields.
double mae_field(const FieldVolume& pred, const FieldVolume& truth);

/// Mean angle in degrees between unit-vector fields over voxels valid in both.
double doa_error(const FieldVolume& pred, const FieldVolume& truth);

struct CostReport {
  Index3 dims{0, 0, 0};
  int n = 0;
  std::size_t params = 0;
  std::size_t flops = 0;
  std::uint64_t rlf_bytes = 0;         // H*W*D*n float32 values
  std::uint64_t wavecoding_bytes = 0;  // one float32 per grid pair
};

CostReport cost_report(const Index3& dims, int n, const DecoderModel& model);

/// SI-unit size with one decimal below 10 and whole units above, e.g. "3.1 GB".
std::string format_bytes(std::uint64_t bytes);

struct AblationConfig {
  std::vector<DecoderFamily> families{DecoderFamily::euclidean, DecoderFamily::riemann_diag};
  std::vector<int> latent_sizes{2, 4, 8, 16};
  Task task = Task::distance;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  bool select_best = true;  // evaluate the best validation checkpoint
};

struct AblationRow {
  DecoderFamily family = DecoderFamily::euclidean;
  int n = 0;
  std::string param;  // field name of the head, e.g. "pi"
  double mae = 0.0;   // NaN when the cell failed
  std::string error;  // empty on success
};

/// Trains every (family, n) cell with the same seeds and config and reports
/// the test MAE per head. A failing cell is recorded and the run continues.
std::vector<AblationRow> ablation_run(const VoxelScene& scene, const Dataset& train_set,
                                      const Dataset& val_set, const Dataset& test_set,
                                      const AblationConfig& cfg);

/// Name of head `head` of a task ("pi", "l_ds", "l_er", "tau_er", "tau_lr").
std::string head_name(Task task, int heads, int head);

void write_metrics_csv(std::ostream& out, const std::vector<AblationRow>& rows);
void write_costs_csv(std::ostream& out, const std::vector<std::pair<DecoderFamily, CostReport>>& rows);

}  // namespace rlf
