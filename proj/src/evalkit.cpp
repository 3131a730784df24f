#include "rlf/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include <Eigen/Geometry>

#include "rlf/error.hpp"

namespace rlf {

double mae_field(const FieldVolume& pred, const FieldVolume& truth) {
  if (pred.dims != truth.dims || pred.components() != truth.components())
    throw Error(ErrorKind::config, "field dims do not match");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (!is_valid(pred.values[i]) || !is_valid(truth.values[i])) continue;
    sum += std::abs(pred.values[i] - truth.values[i]);
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::input, "no valid voxels to compare");
  return sum / static_cast<double>(count);
}

double doa_error(const FieldVolume& pred, const FieldVolume& truth) {
  if (pred.kind != FieldKind::doa || truth.kind != FieldKind::doa || pred.dims != truth.dims)
    throw Error(ErrorKind::config, "DOA error needs two direction fields of equal dims");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.voxel_count(); ++i) {
    if (!pred.valid(i) || !truth.valid(i)) continue;
    const Vec3 p = pred.vector_at(i);
    const Vec3 t = truth.vector_at(i);
    if (std::abs(p.norm() - 1.0) > 1e-3 || std::abs(t.norm() - 1.0) > 1e-3)
      throw Error(ErrorKind::input, "direction field holds a non-unit vector");
    sum += std::atan2(p.cross(t).norm(), p.dot(t));
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::input, "no valid voxels to compare");
  return sum / static_cast<double>(count) * 180.0 / std::numbers::pi;
}

CostReport cost_report(const Index3& dims, int n, const DecoderModel& model) {
  if ((dims.array() < 1).any() || n < 0) throw Error(ErrorKind::config, "invalid grid dims");
  CostReport r;
  r.dims = dims;
  r.n = n;
  r.params = model.param_count();
  r.flops = flop_count(model);
  const auto cells = static_cast<std::uint64_t>(dims.x()) * static_cast<std::uint64_t>(dims.y()) *
                     static_cast<std::uint64_t>(dims.z());
  r.rlf_bytes = cells * static_cast<std::uint64_t>(n) * 4;
  r.wavecoding_bytes = cells * cells * 4;
  return r;
}

std::string format_bytes(std::uint64_t bytes) {
  static constexpr const char* units[] = {"B", "kB", "MB", "GB", "TB"};
  double v = static_cast<double>(bytes);
  int u = 0;
  while (v >= 1000.0 && u < 4) {
    v /= 1000.0;
    ++u;
  }
  if (bytes == 0) return "0 B";
  // One decimal below 10, whole units above, as in printed cost tables.
  const int digits = v >= 10.0 ? 0 : 1;
  const double rounded = v >= 10.0 ? std::round(v) : std::round(v * 10.0) / 10.0;
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << rounded << ' ' << units[u];
  return os.str();
}

std::string head_name(Task task, int heads, int head) {
  switch (task) {
    case Task::distance: return "pi";
    case Task::levels: return head == 0 ? "l_ds" : "l_er";
    case Task::decays:
      if (heads == 1) return "tau_lr";
      return head == 0 ? "tau_er" : "tau_lr";
  }
  return "unknown";
}

std::vector<AblationRow> ablation_run(const VoxelScene& scene, const Dataset& train_set,
                                      const Dataset& val_set, const Dataset& test_set,
                                      const AblationConfig& cfg) {
  std::vector<AblationRow> rows;
  for (DecoderFamily family : cfg.families) {
    for (int n : cfg.latent_sizes) {
      DecoderConfig dc;
      dc.family = family;
      dc.task = cfg.task;
      dc.n = n;
      const int heads = dc.heads > 0 ? dc.heads : task_default_heads(cfg.task);
      try {
        ParameterGroup init = make_group(scene, dc, cfg.init_seed);
        fit_output_offsets(init, scene, train_set);
        const TrainResult result = train(init, scene, train_set, &val_set, cfg.train);
        const ParameterGroup& model =
            cfg.select_best && !result.checkpoints.empty()
                ? select_best(result.checkpoints).params
                : result.final;
        const auto mae = evaluate_mae(model, scene, test_set);
        for (int h = 0; h < heads; ++h)
          rows.push_back({family, n, head_name(cfg.task, heads, h), mae[static_cast<std::size_t>(h)], {}});
      } catch (const std::exception& e) {
        for (int h = 0; h < heads; ++h)
          rows.push_back({family, n, head_name(cfg.task, heads, h),
                          std::numeric_limits<double>::quiet_NaN(), e.what()});
      }
    }
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "family,n,param,MAE,error\n";
  out << std::setprecision(9);
  for (const auto& r : rows)
    out << to_string(r.family) << ',' << r.n << ',' << r.param << ',' << r.mae << ','
        << csv_field(r.error) << '\n';
}

void write_costs_csv(std::ostream& out,
                     const std::vector<std::pair<DecoderFamily, CostReport>>& rows) {
  out << "family,n,params,flops,rlf_bytes,wavecoding_bytes\n";
  for (const auto& [family, r] : rows)
    out << to_string(family) << ',' << r.n << ',' << r.params << ',' << r.flops << ','
        << r.rlf_bytes << ',' << r.wavecoding_bytes << '\n';
}

}  // namespace rlf
