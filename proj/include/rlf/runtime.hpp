#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "rlf/irparams.hpp"
#include "rlf/oracle.hpp"
#include "rlf/training.hpp"

namespace rlf {

/// Trained parameter groups used at query time. Missing groups leave the
/// corresponding fields of AcousticParamSet at their defaults.
struct RuntimeModels {
  ParameterGroup distance;
  std::optional<ParameterGroup> levels;
  std::optional<ParameterGroup> decays;
};

struct QueryConfig {
  double stencil_step = 0.0;  // m; 0 uses the scene spacing
  WindowConfig windows;
};

/// Predicted parameters for source a and receiver b. The direction is the
/// negative normalized gradient of the predicted distance around b; for a == b
/// it stays at the default.
AcousticParamSet query_params(const RuntimeModels& models, const VoxelScene& scene,
                              const Position& a, const Position& b, const QueryConfig& cfg = {});

double dry_gain(double l_ds_db);

/// Piecewise-linear blend weights over three reference decay times.
std::array<double, 3> wet_weights(double tau, const std::array<double, 3>& refs);

/// Late level extrapolated from the early level along the early decay.
double derive_l_lr(double l_er_db, double tau_er, const WindowConfig& windows = {});

struct SpeakerLayout {
  std::vector<Vec3> directions;
  std::vector<std::array<int, 3>> triples;
  std::vector<std::array<int, 2>> pairs;  // planar sections

  void validate() const;
  std::size_t size() const { return directions.size(); }

  static SpeakerLayout octahedral();
  /// Four speakers at 0, 90, 180 and 270 degrees in the horizontal plane.
  static SpeakerLayout quad();
  static SpeakerLayout mono();
};

/// Power-normalized panning gains for direction d.
VectorXd vbap_gains(const Vec3& d, const SpeakerLayout& layout);

/// Per-speaker gains distributing wet energy: one third panned along d, the
/// rest spread evenly over all speakers.
VectorXd spatialize_wet(double wet_gain, const Vec3& d, const SpeakerLayout& layout);

struct ReferenceIRSet {
  std::array<ImpulseResponse, 3> er;
  std::array<ImpulseResponse, 3> lr;
  std::array<double, 3> tau_er{0.1, 0.3, 0.9};
  std::array<double, 3> tau_lr{0.4, 1.0, 1.8};

  void validate() const;
  double sample_rate() const { return er[0].sample_rate; }
};

/// Seeded exponentially decaying noise, each IR normalized to unit energy
/// and long enough to decay by 60 dB.
ReferenceIRSet make_reference_irs(double sample_rate = 16000.0, std::uint64_t seed = 7);

struct RenderParams {
  double dry = 1.0;
  double er = 0.0;
  double lr = 0.0;
  std::array<double, 3> w_er{1.0, 0.0, 0.0};
  std::array<double, 3> w_lr{1.0, 0.0, 0.0};
  Vec3 doa = Vec3::UnitX();
  VectorXd dry_speakers;  // VBAP gains
  VectorXd er_speakers;   // spatialize_wet(1, doa)
  VectorXd lr_speakers;
};

RenderParams make_render_params(const AcousticParamSet& p, const ReferenceIRSet& refs,
                                const SpeakerLayout& layout);

struct Signal {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

/// channels x samples output of the dry path plus both wet paths.
struct MultichannelSignal {
  MatrixXd channels;
  double sample_rate = 16000.0;
};

MultichannelSignal render_offline(const Signal& input, const RenderParams& params,
                                  const ReferenceIRSet& refs);

/// Full linear convolution.
std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h);

}  // namespace rlf
