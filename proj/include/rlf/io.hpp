#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlf/irparams.hpp"
#include "rlf/oracle.hpp"
#include "rlf/runtime.hpp"
#include "rlf/scene.hpp"
#include "rlf/training.hpp"

namespace rlf::io {

namespace fs = std::filesystem;

// All binary payloads are little-endian. Field, IR and checkpoint values are
// stored as float32, so a round trip is exact for float-representable data.

/// Text header (key=value lines ending in "---") followed by run-length
/// encoded occupancy and region arrays: u32 run count, then (u32 length,
/// u8 value) per run.
void write_scene(std::ostream& out, const VoxelScene& scene);
VoxelScene read_scene(std::istream& in);

/// "RLFFIELD", u32 version, u32 reserved, u32 dims[3], u32 kind,
/// f32 source[3], f32 values (x-fastest, 3 per voxel for DOA).
void write_field(std::ostream& out, const FieldVolume& field);
FieldVolume read_field(std::istream& in);

/// Text header (rlf-ir 1, sample_rate, t0, samples, channels, "---") and
/// interleaved f32 samples.
void write_signal(std::ostream& out, const MatrixXd& channels, double sample_rate, double t0 = 0.0);
struct SignalFile {
  MatrixXd channels;  // channels x samples
  double sample_rate = 16000.0;
  double t0 = 0.0;
};
SignalFile read_signal(std::istream& in);

void write_ir(std::ostream& out, const ImpulseResponse& ir);
/// Reads a mono file, or channel 0 of a multichannel one.
ImpulseResponse read_ir(std::istream& in);

/// "RLFCKPT" container: u32 version, u32 section count, then per section a
/// 4-byte tag, u64 payload length and the payload.
///   GRID: u32 dims[3], u32 n, f64 spacing, f64 origin[3], f32 values
///   DECO: u32 family, u32 task, u32 n, u32 heads, f64 K, u32 hidden count,
///         u32 hidden sizes, u32 param count, f32 params
///   META: u32 epoch, f64 mean validation MAE
void write_checkpoint(std::ostream& out, const ParameterGroup& group, int epoch = 0,
                      double mean_val_mae = 0.0);
ParameterGroup read_checkpoint(std::istream& in, int* epoch = nullptr, double* mean_val_mae = nullptr);

/// Lines "speaker x y z", "triple i j k" and "pair i j"; '#' starts a comment.
void write_layout(std::ostream& out, const SpeakerLayout& layout);
SpeakerLayout read_layout(std::istream& in);

struct SourceEntry {
  Position position = Position::Zero();
  Split split = Split::train;
};
/// CSV with header x,y,z,split.
void write_sources(std::ostream& out, const std::vector<SourceEntry>& sources);
std::vector<SourceEntry> read_sources(std::istream& in);

struct PgmRange {
  double min = 0.0;
  double max = 0.0;
};
/// 8-bit binary PGM of the horizontal slice j of a scalar field, min-max
/// normalized over valid voxels; invalid voxels are written as 0. Image rows
/// run along z, columns along x.
PgmRange write_slice_pgm(std::ostream& out, const FieldVolume& field, int j);

// File wrappers that raise ErrorKind::io on failure.
void save(const fs::path& path, const std::function<void(std::ostream&)>& writer);

VoxelScene load_scene(const fs::path& path);
FieldVolume load_field(const fs::path& path);
ImpulseResponse load_ir(const fs::path& path);
SignalFile load_signal(const fs::path& path);
ParameterGroup load_checkpoint(const fs::path& path);
SpeakerLayout load_layout(const fs::path& path);
std::vector<SourceEntry> load_sources(const fs::path& path);

}  // namespace rlf::io
