#include "rlf/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "rlf/error.hpp"

namespace rlf::io {

namespace {

// ---- little-endian primitives ----------------------------------------------

template <typename U>
void put_uint(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_uint(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw Error(ErrorKind::io, "unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

void put_u32(std::ostream& out, std::uint32_t v) { put_uint(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_uint(out, v); }
void put_f32(std::ostream& out, double v) { put_uint(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
void put_f64(std::ostream& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t get_u32(std::istream& in) { return get_uint<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get_uint<std::uint64_t>(in); }
double get_f32(std::istream& in) { return std::bit_cast<float>(get_uint<std::uint32_t>(in)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_uint<std::uint64_t>(in)); }

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw Error(ErrorKind::io, std::string(what) + " too large for the file format");
  return static_cast<std::uint32_t>(v);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---- text headers -----------------------------------------------------------

using Header = std::multimap<std::string, std::string>;

Header read_header(std::istream& in, const std::string& magic) {
  std::string line;
  if (!std::getline(in, line) || line != magic)
    throw Error(ErrorKind::io, "missing '" + magic + "' header");
  Header h;
  while (std::getline(in, line)) {
    if (line == "---") return h;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::io, "malformed header line '" + line + "'");
    h.emplace(line.substr(0, eq), line.substr(eq + 1));
  }
  throw Error(ErrorKind::io, "header is not terminated");
}

const std::string& header_value(const Header& h, const std::string& key) {
  const auto it = h.find(key);
  if (it == h.end()) throw Error(ErrorKind::io, "header lacks '" + key + "'");
  return it->second;
}

template <typename T>
T parse_as(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  T v{};
  if (!(is >> v)) throw Error(ErrorKind::io, "bad value for '" + key + "'");
  return v;
}

template <typename T, int N>
Eigen::Matrix<T, N, 1> parse_vec(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  Eigen::Matrix<T, N, 1> v;
  for (int i = 0; i < N; ++i)
    if (!(is >> v[i])) throw Error(ErrorKind::io, "bad value for '" + key + "'");
  return v;
}

// ---- run-length encoding ----------------------------------------------------

void write_rle(std::ostream& out, const std::vector<std::uint8_t>& data) {
  std::vector<std::pair<std::uint32_t, std::uint8_t>> runs;
  for (std::uint8_t v : data) {
    if (!runs.empty() && runs.back().second == v && runs.back().first < 0xffffffffu)
      ++runs.back().first;
    else
      runs.emplace_back(1, v);
  }
  put_u32(out, checked_u32(runs.size(), "run count"));
  for (const auto& [len, v] : runs) {
    put_u32(out, len);
    out.put(static_cast<char>(v));
  }
}

std::vector<std::uint8_t> read_rle(std::istream& in, std::size_t expected) {
  std::vector<std::uint8_t> data;
  data.reserve(expected);
  const auto runs = get_u32(in);
  for (std::uint32_t r = 0; r < runs; ++r) {
    const auto len = get_u32(in);
    const int v = in.get();
    if (v == std::char_traits<char>::eof()) throw Error(ErrorKind::io, "unexpected end of file");
    if (data.size() + len > expected) throw Error(ErrorKind::io, "run-length data exceeds grid size");
    data.insert(data.end(), len, static_cast<std::uint8_t>(v));
  }
  if (data.size() != expected) throw Error(ErrorKind::io, "run-length data does not fill the grid");
  return data;
}

constexpr char kFieldMagic[8] = {'R', 'L', 'F', 'F', 'I', 'E', 'L', 'D'};
constexpr char kCheckpointMagic[8] = {'R', 'L', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
  char buf[8];
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0)
    throw Error(ErrorKind::io, std::string("not a ") + what + " file");
}

}  // namespace

// ---- scene --------------------------------------------------------------------

void write_scene(std::ostream& out, const VoxelScene& scene) {
  const Index3& d = scene.dims();
  const Vec3& o = scene.origin();
  out << "rlf-scene 1\n";
  out << "kind=" << to_string(scene.kind()) << '\n';
  out << "dims=" << d.x() << ' ' << d.y() << ' ' << d.z() << '\n';
  out << "spacing=" << fmt(scene.spacing()) << '\n';
  out << "origin=" << fmt(o.x()) << ' ' << fmt(o.y()) << ' ' << fmt(o.z()) << '\n';
  out << "seed=" << scene.seed() << '\n';
  for (const auto& r : scene.regions())
    out << "region=" << fmt(r.er_level_db) << ' ' << fmt(r.tau_er) << ' ' << fmt(r.tau_lr) << '\n';
  out << "---\n";
  write_rle(out, scene.occupancy());
  write_rle(out, scene.region_ids());
}

VoxelScene read_scene(std::istream& in) {
  const Header h = read_header(in, "rlf-scene 1");
  const Index3 dims = parse_vec<int, 3>(header_value(h, "dims"), "dims");
  if ((dims.array() < 1).any()) throw Error(ErrorKind::io, "bad scene dims");
  const auto spacing = parse_as<double>(header_value(h, "spacing"), "spacing");
  const Vec3 origin = parse_vec<double, 3>(header_value(h, "origin"), "origin");
  const auto seed = parse_as<std::uint64_t>(header_value(h, "seed"), "seed");
  const SceneKind kind = scene_kind_from_string(header_value(h, "kind"));
  std::vector<RegionAcoustics> regions;
  const auto [first, last] = h.equal_range("region");
  for (auto it = first; it != last; ++it) {
    const Vec3 r = parse_vec<double, 3>(it->second, "region");
    regions.push_back({r[0], r[1], r[2]});
  }
  const auto n = static_cast<std::size_t>(dims.prod());
  auto occupancy = read_rle(in, n);
  auto region_ids = read_rle(in, n);
  return VoxelScene(dims, spacing, origin, std::move(occupancy), std::move(region_ids),
                    std::move(regions), kind, seed);
}

// ---- field ----------------------------------------------------------------------

void write_field(std::ostream& out, const FieldVolume& field) {
  out.write(kFieldMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, 0);
  for (int i = 0; i < 3; ++i) put_u32(out, checked_u32(static_cast<std::size_t>(field.dims[i]), "dims"));
  put_u32(out, static_cast<std::uint32_t>(field.kind));
  for (int i = 0; i < 3; ++i) put_f32(out, field.source[i]);
  for (double v : field.values) put_f32(out, v);
}

FieldVolume read_field(std::istream& in) {
  expect_magic(in, kFieldMagic, "field");
  if (get_u32(in) != kVersion) throw Error(ErrorKind::io, "unsupported field file version");
  get_u32(in);
  FieldVolume f;
  for (int i = 0; i < 3; ++i) f.dims[i] = static_cast<int>(get_u32(in));
  const auto kind = get_u32(in);
  if (kind > static_cast<std::uint32_t>(FieldKind::doa)) throw Error(ErrorKind::io, "unknown field kind");
  f.kind = static_cast<FieldKind>(kind);
  for (int i = 0; i < 3; ++i) f.source[i] = get_f32(in);
  f.values.resize(f.voxel_count() * static_cast<std::size_t>(f.components()));
  for (double& v : f.values) v = get_f32(in);
  return f;
}

// ---- signals --------------------------------------------------------------------

void write_signal(std::ostream& out, const MatrixXd& channels, double sample_rate, double t0) {
  out << "rlf-ir 1\n";
  out << "sample_rate=" << fmt(sample_rate) << '\n';
  out << "t0=" << fmt(t0) << '\n';
  out << "samples=" << channels.cols() << '\n';
  out << "channels=" << channels.rows() << '\n';
  out << "---\n";
  for (Eigen::Index s = 0; s < channels.cols(); ++s)
    for (Eigen::Index c = 0; c < channels.rows(); ++c) put_f32(out, channels(c, s));
}

SignalFile read_signal(std::istream& in) {
  const Header h = read_header(in, "rlf-ir 1");
  SignalFile f;
  f.sample_rate = parse_as<double>(header_value(h, "sample_rate"), "sample_rate");
  f.t0 = parse_as<double>(header_value(h, "t0"), "t0");
  const auto samples = parse_as<long long>(header_value(h, "samples"), "samples");
  const auto channels = h.count("channels") ? parse_as<long long>(header_value(h, "channels"), "channels") : 1;
  if (samples < 0 || channels < 1 || !(f.sample_rate > 0.0))
    throw Error(ErrorKind::io, "bad signal header");
  f.channels.resize(channels, samples);
  for (Eigen::Index s = 0; s < samples; ++s)
    for (Eigen::Index c = 0; c < channels; ++c) f.channels(c, s) = get_f32(in);
  return f;
}

void write_ir(std::ostream& out, const ImpulseResponse& ir) {
  const Eigen::Map<const Eigen::RowVectorXd> row(ir.samples.data(),
                                                 static_cast<Eigen::Index>(ir.samples.size()));
  write_signal(out, row, ir.sample_rate, ir.emission_time);
}

ImpulseResponse read_ir(std::istream& in) {
  const SignalFile f = read_signal(in);
  ImpulseResponse ir;
  ir.sample_rate = f.sample_rate;
  ir.emission_time = f.t0;
  ir.samples.assign(f.channels.row(0).begin(), f.channels.row(0).end());
  return ir;
}

// ---- checkpoint -----------------------------------------------------------------

void write_checkpoint(std::ostream& out, const ParameterGroup& group, int epoch, double mean_val_mae) {
  const auto section = [&](const char (&tag)[5], const std::string& payload) {
    out.write(tag, 4);
    put_u64(out, payload.size());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  };
  const LatentGrid& g = group.grid;
  std::ostringstream grid;
  for (int i = 0; i < 3; ++i) put_u32(grid, static_cast<std::uint32_t>(g.dims[i]));
  put_u32(grid, static_cast<std::uint32_t>(g.n));
  put_f64(grid, g.spacing);
  for (int i = 0; i < 3; ++i) put_f64(grid, g.origin[i]);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) put_f32(grid, g.values.data()[i]);

  const DecoderModel& m = group.decoder;
  std::ostringstream deco;
  put_u32(deco, static_cast<std::uint32_t>(m.family));
  put_u32(deco, static_cast<std::uint32_t>(m.task));
  put_u32(deco, static_cast<std::uint32_t>(m.n));
  put_u32(deco, static_cast<std::uint32_t>(m.heads));
  put_f64(deco, m.decay_max);
  put_u32(deco, checked_u32(m.hidden.size(), "hidden layer count"));
  for (int w : m.hidden) put_u32(deco, static_cast<std::uint32_t>(w));
  put_u32(deco, checked_u32(m.param_count(), "parameter count"));
  for (double p : m.params) put_f32(deco, p);

  std::ostringstream meta;
  put_u32(meta, static_cast<std::uint32_t>(epoch));
  put_f64(meta, mean_val_mae);

  out.write(kCheckpointMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, 3);
  section("GRID", grid.str());
  section("DECO", deco.str());
  section("META", meta.str());
}

ParameterGroup read_checkpoint(std::istream& in, int* epoch, double* mean_val_mae) {
  expect_magic(in, kCheckpointMagic, "checkpoint");
  if (get_u32(in) != kVersion) throw Error(ErrorKind::io, "unsupported checkpoint version");
  const auto sections = get_u32(in);
  ParameterGroup group;
  bool have_grid = false, have_deco = false;
  for (std::uint32_t s = 0; s < sections; ++s) {
    char tag[4];
    if (!in.read(tag, 4)) throw Error(ErrorKind::io, "unexpected end of file");
    const auto length = get_u64(in);
    std::string payload(length, '\0');
    if (!in.read(payload.data(), static_cast<std::streamsize>(length)))
      throw Error(ErrorKind::io, "truncated checkpoint section");
    std::istringstream body(payload);
    const std::string name(tag, 4);
    if (name == "GRID") {
      LatentGrid& g = group.grid;
      for (int i = 0; i < 3; ++i) g.dims[i] = static_cast<int>(get_u32(body));
      g.n = static_cast<int>(get_u32(body));
      g.spacing = get_f64(body);
      for (int i = 0; i < 3; ++i) g.origin[i] = get_f64(body);
      g.values.resize(g.n, g.dims.prod());
      for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values.data()[i] = get_f32(body);
      have_grid = true;
    } else if (name == "DECO") {
      DecoderModel& m = group.decoder;
      m.family = static_cast<DecoderFamily>(get_u32(body));
      m.task = static_cast<Task>(get_u32(body));
      m.n = static_cast<int>(get_u32(body));
      m.heads = static_cast<int>(get_u32(body));
      m.decay_max = get_f64(body);
      m.hidden.resize(get_u32(body));
      for (int& w : m.hidden) w = static_cast<int>(get_u32(body));
      compute_layout(m);
      const auto count = get_u32(body);
      if (static_cast<Eigen::Index>(count) != m.layout.total)
        throw Error(ErrorKind::io, "decoder parameter count does not match its layout");
      m.params.resize(count);
      for (double& p : m.params) p = get_f32(body);
      have_deco = true;
    } else if (name == "META") {
      const auto e = static_cast<int>(get_u32(body));
      const double mae = get_f64(body);
      if (epoch) *epoch = e;
      if (mean_val_mae) *mean_val_mae = mae;
    }
  }
  if (!have_grid || !have_deco) throw Error(ErrorKind::io, "checkpoint lacks a grid or decoder section");
  if (group.grid.n != group.decoder.n) throw Error(ErrorKind::io, "checkpoint latent sizes disagree");
  return group;
}

// ---- layout ---------------------------------------------------------------------

void write_layout(std::ostream& out, const SpeakerLayout& layout) {
  for (const Vec3& d : layout.directions)
    out << "speaker " << fmt(d.x()) << ' ' << fmt(d.y()) << ' ' << fmt(d.z()) << '\n';
  for (const auto& t : layout.triples) out << "triple " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& p : layout.pairs) out << "pair " << p[0] << ' ' << p[1] << '\n';
}

SpeakerLayout read_layout(std::istream& in) {
  SpeakerLayout layout;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream is(line);
    std::string word;
    if (!(is >> word)) continue;
    bool ok = true;
    if (word == "speaker") {
      Vec3 d;
      ok = static_cast<bool>(is >> d.x() >> d.y() >> d.z());
      layout.directions.push_back(d.normalized());
    } else if (word == "triple") {
      std::array<int, 3> t{};
      ok = static_cast<bool>(is >> t[0] >> t[1] >> t[2]);
      layout.triples.push_back(t);
    } else if (word == "pair") {
      std::array<int, 2> p{};
      ok = static_cast<bool>(is >> p[0] >> p[1]);
      layout.pairs.push_back(p);
    } else {
      ok = false;
    }
    if (!ok) throw Error(ErrorKind::io, "malformed layout line '" + line + "'");
  }
  layout.validate();
  return layout;
}

// ---- sources ----------------------------------------------------------------------

void write_sources(std::ostream& out, const std::vector<SourceEntry>& sources) {
  out << "x,y,z,split\n";
  for (const auto& s : sources)
    out << fmt(s.position.x()) << ',' << fmt(s.position.y()) << ',' << fmt(s.position.z()) << ','
        << to_string(s.split) << '\n';
}

std::vector<SourceEntry> read_sources(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y,z", 0) != 0)
    throw Error(ErrorKind::io, "sources file lacks the x,y,z,split header");
  std::vector<SourceEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell[4];
    int count = 0;
    while (count < 4 && std::getline(is, cell[count], ',')) ++count;
    if (count < 3) throw Error(ErrorKind::io, "malformed sources line '" + line + "'");
    SourceEntry e;
    for (int i = 0; i < 3; ++i) e.position[i] = parse_as<double>(cell[i], "source coordinate");
    e.split = count == 4 ? split_from_string(cell[3]) : Split::train;
    out.push_back(e);
  }
  return out;
}

// ---- PGM --------------------------------------------------------------------------

PgmRange write_slice_pgm(std::ostream& out, const FieldVolume& field, int j) {
  if (field.components() != 1) throw Error(ErrorKind::config, "slice export needs a scalar field");
  if (j < 0 || j >= field.dims.y()) throw Error(ErrorKind::config, "slice index outside the grid");
  const int nx = field.dims.x(), ny = field.dims.y(), nz = field.dims.z();
  const auto at = [&](int i, int k) {
    return field.values[static_cast<std::size_t>(i + nx * (j + ny * k))];
  };
  PgmRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (int k = 0; k < nz; ++k)
    for (int i = 0; i < nx; ++i)
      if (is_valid(at(i, k))) {
        r.min = std::min(r.min, at(i, k));
        r.max = std::max(r.max, at(i, k));
      }
  if (r.min > r.max) r = {0.0, 0.0};
  out << "P5\n" << nx << ' ' << nz << "\n255\n";
  const double span = r.max - r.min;
  for (int k = 0; k < nz; ++k)
    for (int i = 0; i < nx; ++i) {
      const double v = at(i, k);
      int px = 0;
      if (is_valid(v)) px = span > 0.0 ? static_cast<int>(std::lround(255.0 * (v - r.min) / span)) : 255;
      out.put(static_cast<char>(px));
    }
  return r;
}

// ---- files ------------------------------------------------------------------------

void save(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  writer(out);
  out.flush();
  if (!out) throw Error(ErrorKind::io, "failed writing '" + path.string() + "'");
}

namespace {

template <typename F>
auto load_with(const fs::path& path, F&& reader) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  return reader(in);
}

}  // namespace

VoxelScene load_scene(const fs::path& path) { return load_with(path, [](std::istream& in) { return read_scene(in); }); }
FieldVolume load_field(const fs::path& path) { return load_with(path, [](std::istream& in) { return read_field(in); }); }
ImpulseResponse load_ir(const fs::path& path) { return load_with(path, [](std::istream& in) { return read_ir(in); }); }
SignalFile load_signal(const fs::path& path) { return load_with(path, [](std::istream& in) { return read_signal(in); }); }
ParameterGroup load_checkpoint(const fs::path& path) {
  return load_with(path, [](std::istream& in) { return read_checkpoint(in); });
}
SpeakerLayout load_layout(const fs::path& path) { return load_with(path, [](std::istream& in) { return read_layout(in); }); }
std::vector<SourceEntry> load_sources(const fs::path& path) {
  return load_with(path, [](std::istream& in) { return read_sources(in); });
}

}  // namespace rlf::io
