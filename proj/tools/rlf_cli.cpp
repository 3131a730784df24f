#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "rlf/error.hpp"
#include "rlf/evalkit.hpp"
#include "rlf/io.hpp"
#include "rlf/irparams.hpp"
#include "rlf/oracle.hpp"
#include "rlf/runtime.hpp"
#include "rlf/scene.hpp"
#include "rlf/training.hpp"

namespace fs = std::filesystem;
using namespace rlf;
using cli::RunManifest;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kUsage = 2, kDomain = 3, kConfig = 4, kIo = 5 };

Index3 parse_dims(const std::string& text) {
  Index3 d;
  char x1 = 0, x2 = 0;
  std::istringstream is(text);
  if (!(is >> d.x() >> x1 >> d.y() >> x2 >> d.z()) || x1 != 'x' || x2 != 'x' || !is.eof())
    throw Error(ErrorKind::config, "dims must look like 8x4x8, got '" + text + "'");
  return d;
}

Vec3 parse_vec3(const std::string& text) {
  Vec3 v;
  char c1 = 0, c2 = 0;
  std::istringstream is(text);
  if (!(is >> v.x() >> c1 >> v.y() >> c2 >> v.z()) || c1 != ',' || c2 != ',')
    throw Error(ErrorKind::config, "expected x,y,z, got '" + text + "'");
  return v;
}

std::string field_suffix(int k) {
  static const char* names[] = {"pi", "lds", "ler", "tauer", "taulr"};
  return names[k];
}

fs::path field_path(const fs::path& dir, std::size_t index, int k) {
  return dir / ("src" + std::to_string(index) + "_" + field_suffix(k) + ".rlff");
}

/// Every option of a subcommand with its effective value.
void snapshot_config(const CLI::App& app, RunManifest& m) {
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    std::string name = opt->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    m.config()[name] = value;
  }
}

struct Common {
  std::string manifest;
  int workers = 1;
};

fs::path manifest_path(const Common& c, const fs::path& fallback) {
  return c.manifest.empty() ? fallback : fs::path(c.manifest);
}

fs::path sidecar(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

/// Dataset for one split, either loaded from a bake directory (files named by
/// the source's row in the sources file) or computed with the oracle.
Dataset load_dataset(const VoxelScene& scene, const std::vector<io::SourceEntry>& entries,
                     Split split, const std::string& fields_dir, RunManifest& m) {
  if (fields_dir.empty()) {
    std::vector<Position> pos;
    for (const auto& e : entries)
      if (e.split == split) pos.push_back(e.position);
    return build_dataset(scene, pos, split);
  }
  Dataset d;
  d.split = split;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split != split) continue;
    SourceFields s;
    s.source = entries[i].position;
    FieldVolume* slots[] = {&s.path_distance, &s.l_ds, &s.l_er, &s.tau_er, &s.tau_lr};
    for (int k = 0; k < 5; ++k) {
      const fs::path p = field_path(fields_dir, i, k);
      *slots[k] = io::load_field(p);
      if (slots[k]->dims != scene.dims()) throw Error(ErrorKind::config, "baked field dims do not match the scene");
      m.input(p);
    }
    d.sources.push_back(std::move(s));
  }
  return d;
}

void print_params(std::ostream& out, const AcousticParamSet& p) {
  out << std::setprecision(9);
  out << "{\"path_distance\": " << p.path_distance << ", \"l_ds\": " << p.l_ds
      << ", \"l_er\": " << p.l_er << ", \"l_lr\": " << p.l_lr << ", \"tau_er\": " << p.tau_er
      << ", \"tau_lr\": " << p.tau_lr << ", \"doa\": [" << p.doa.x() << ", " << p.doa.y() << ", "
      << p.doa.z() << "]}\n";
}

SpeakerLayout layout_from(const std::string& spec, RunManifest& m) {
  if (spec == "octahedral") return SpeakerLayout::octahedral();
  if (spec == "quad") return SpeakerLayout::quad();
  if (spec == "mono") return SpeakerLayout::mono();
  m.input(spec);
  return io::load_layout(spec);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reciprocal latent fields: bake, train, evaluate and query acoustic parameter fields"};
  app.name("rlf");
  app.require_subcommand(1);

  Common common;
  const auto add_common = [&](CLI::App* sub, bool workers) {
    sub->add_option("--manifest", common.manifest, "Run manifest path (default: next to the output)");
    if (workers)
      sub->add_option("--workers", common.workers, "Worker threads")
          ->envname("RLF_WORKERS")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
  };
  std::function<void()> action;

  // ---- scene gen ------------------------------------------------------------
  auto* scene_cmd = app.add_subcommand("scene", "Scene utilities")->require_subcommand(1);
  auto* gen = scene_cmd->add_subcommand("gen", "Generate a procedural scene");
  struct {
    std::string kind = "empty-box", dims = "8x4x8", out = "scene.rlfs";
    double spacing = 1.0;
    std::uint64_t seed = 0;
    int aperture = 1;
    double radius = 1.0;
    int pitch = 5;
  } g;
  gen->add_option("--kind", g.kind, "empty-box | wall-with-aperture | maze | coupled-rooms | cylinder-forest")
      ->capture_default_str();
  gen->add_option("--dims", g.dims, "Grid size HxWxD")->capture_default_str();
  gen->add_option("--spacing", g.spacing, "Voxel size in meters")->capture_default_str();
  gen->add_option("--seed", g.seed)->envname("RLF_SEED")->capture_default_str();
  gen->add_option("--aperture", g.aperture, "Aperture width in voxels")->capture_default_str();
  gen->add_option("--cylinder-radius", g.radius)->capture_default_str();
  gen->add_option("--cylinder-pitch", g.pitch)->capture_default_str();
  gen->add_option("-o,--out", g.out)->capture_default_str();
  add_common(gen, false);
  gen->callback([&] {
    action = [&] {
      SceneSpec spec;
      spec.kind = scene_kind_from_string(g.kind);
      spec.dims = parse_dims(g.dims);
      spec.spacing = g.spacing;
      spec.seed = g.seed;
      spec.aperture_width = g.aperture;
      spec.cylinder_radius = g.radius;
      spec.cylinder_pitch = g.pitch;
      const VoxelScene scene = build_scene(spec);
      io::save(g.out, [&](std::ostream& o) { io::write_scene(o, scene); });
      RunManifest m("scene gen");
      snapshot_config(*gen, m);
      m.seed("scene", g.seed);
      m.output(g.out);
      m.note("free_voxels", scene.free_count());
      m.write(manifest_path(common, sidecar(g.out)));
      std::cout << "wrote " << g.out << " (" << scene.free_count() << " free voxels)\n";
    };
  });

  // ---- sources sample -------------------------------------------------------
  auto* sources_cmd = app.add_subcommand("sources", "Source placement")->require_subcommand(1);
  auto* sample = sources_cmd->add_subcommand("sample", "Adaptive visibility-covering source sampling");
  struct {
    std::string scene, out = "sources.csv";
    std::uint64_t seed = 1;
    int initial = 20;
    double val = 0.15, test = 0.15;
  } s;
  sample->add_option("--scene", s.scene)->required()->check(CLI::ExistingFile);
  sample->add_option("--seed", s.seed)->envname("RLF_SEED")->capture_default_str();
  sample->add_option("--initial", s.initial, "Random sources before coverage filling")->capture_default_str();
  sample->add_option("--val", s.val, "Validation fraction")->capture_default_str();
  sample->add_option("--test", s.test, "Test fraction")->capture_default_str();
  sample->add_option("-o,--out", s.out)->capture_default_str();
  add_common(sample, false);
  sample->callback([&] {
    action = [&] {
      const VoxelScene scene = io::load_scene(s.scene);
      const auto positions = sample_sources(scene, s.seed, s.initial);
      const SourceSplit split = split_sources(positions, s.val, s.test, s.seed + 1);
      std::vector<io::SourceEntry> entries;
      for (const auto& p : split.train) entries.push_back({p, Split::train});
      for (const auto& p : split.val) entries.push_back({p, Split::val});
      for (const auto& p : split.test) entries.push_back({p, Split::test});
      io::save(s.out, [&](std::ostream& o) { io::write_sources(o, entries); });
      RunManifest m("sources sample");
      snapshot_config(*sample, m);
      m.seed("sampling", s.seed);
      m.seed("split", s.seed + 1);
      m.input(s.scene);
      m.output(s.out);
      m.write(manifest_path(common, sidecar(s.out)));
      std::cout << "wrote " << entries.size() << " sources (" << split.train.size() << " train, "
                << split.val.size() << " val, " << split.test.size() << " test) to " << s.out << '\n';
    };
  });

  // ---- bake -----------------------------------------------------------------
  auto* bake = app.add_subcommand("bake", "Write oracle parameter fields for a source list");
  struct {
    std::string scene, sources, source, out_dir = "bake", split = "all";
  } b;
  bake->add_option("--scene", b.scene)->required()->check(CLI::ExistingFile);
  auto* bake_sources = bake->add_option("--sources", b.sources, "Sources CSV")->check(CLI::ExistingFile);
  bake->add_option("--source", b.source, "Single source x,y,z")->excludes(bake_sources);
  bake->add_option("--split", b.split, "train | val | test | all")->capture_default_str();
  bake->add_option("-o,--out-dir", b.out_dir)->capture_default_str();
  add_common(bake, false);
  bake->callback([&] {
    action = [&] {
      const VoxelScene scene = io::load_scene(b.scene);
      RunManifest m("bake");
      snapshot_config(*bake, m);
      m.input(b.scene);
      std::vector<io::SourceEntry> entries;
      if (!b.sources.empty()) {
        entries = io::load_sources(b.sources);
        m.input(b.sources);
      } else if (!b.source.empty()) {
        entries.push_back({parse_vec3(b.source), Split::train});
      } else {
        throw Error(ErrorKind::config, "bake needs --sources or --source");
      }
      fs::create_directories(b.out_dir);
      std::size_t baked = 0;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (b.split != "all" && to_string(entries[i].split) != b.split) continue;
        const Position& p = entries[i].position;
        const FieldVolume geo = geodesic_field(scene, p);
        const SyntheticFields syn = synth_acoustic_fields(scene, p, geo);
        const FieldVolume* fields[] = {&geo, &syn.l_ds, &syn.l_er, &syn.tau_er, &syn.tau_lr};
        for (int k = 0; k < 5; ++k) {
          const fs::path out = field_path(b.out_dir, i, k);
          io::save(out, [&](std::ostream& o) { io::write_field(o, *fields[k]); });
          m.output(out);
        }
        ++baked;
      }
      m.write(manifest_path(common, fs::path(b.out_dir) / "manifest.json"));
      std::cout << "baked " << baked << " sources into " << b.out_dir << '\n';
    };
  });

  // ---- train ----------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train one parameter group");
  struct {
    std::string scene, sources, fields, family = "riemann-diag", task = "distance", out = "model.rlfc",
                log;
    int n = 16, heads = 0, epochs = 2000, batch = 4, eval_interval = 50;
    std::vector<int> hidden{32, 32};
    double lr_decoder = 1e-3, lr_grid = 1e-4, decay_max = 2.0;
    std::uint64_t seed = 0;
    bool no_stop_gradient = false;
    std::string checkpoint_dir;
  } t;
  train_cmd->add_option("--scene", t.scene)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--sources", t.sources)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--fields", t.fields, "Bake directory (default: compute with the oracle)");
  train_cmd->add_option("--family", t.family, "euclidean | riemann-psd | riemann-diag | mlp | dot-product")
      ->capture_default_str();
  train_cmd->add_option("--task", t.task, "distance | levels | decays")->capture_default_str();
  train_cmd->add_option("--n", t.n, "Latent size")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--heads", t.heads, "Output heads (0: task default)")->capture_default_str();
  train_cmd->add_option("--hidden", t.hidden, "MLP hidden widths")->delimiter(',')->capture_default_str();
  train_cmd->add_option("--decay-max", t.decay_max, "Dot-product output bound K (s)")->capture_default_str();
  train_cmd->add_option("--epochs", t.epochs)->capture_default_str();
  train_cmd->add_option("--batch", t.batch, "Sources per step")->capture_default_str();
  train_cmd->add_option("--lr-decoder", t.lr_decoder)->capture_default_str();
  train_cmd->add_option("--lr-grid", t.lr_grid)->capture_default_str();
  train_cmd->add_option("--eval-interval", t.eval_interval)->capture_default_str();
  train_cmd->add_option("--seed", t.seed)->envname("RLF_SEED")->capture_default_str();
  train_cmd->add_flag("--no-stop-gradient", t.no_stop_gradient, "Let gradients reach the source latent");
  train_cmd->add_option("-o,--out", t.out, "Checkpoint of the best validation epoch")->capture_default_str();
  train_cmd->add_option("--checkpoint-dir", t.checkpoint_dir, "Also write every periodic checkpoint here");
  train_cmd->add_option("--log", t.log, "Loss log CSV (default: <out>.log.csv)");
  add_common(train_cmd, true);
  train_cmd->callback([&] {
    action = [&] {
      RunManifest m("train");
      snapshot_config(*train_cmd, m);
      const VoxelScene scene = io::load_scene(t.scene);
      const auto entries = io::load_sources(t.sources);
      m.input(t.scene);
      m.input(t.sources);
      const Dataset tr = load_dataset(scene, entries, Split::train, t.fields, m);
      const Dataset va = load_dataset(scene, entries, Split::val, t.fields, m);
      DecoderConfig dc;
      dc.family = decoder_family_from_string(t.family);
      dc.task = task_from_string(t.task);
      dc.n = t.n;
      dc.heads = t.heads;
      dc.hidden = t.hidden;
      dc.decay_max = t.decay_max;
      TrainConfig tc;
      tc.epochs = t.epochs;
      tc.batch_sources = t.batch;
      tc.lr_decoder = t.lr_decoder;
      tc.lr_grid = t.lr_grid;
      tc.eval_interval = t.eval_interval;
      tc.seed = t.seed;
      tc.stop_gradient = !t.no_stop_gradient;
      tc.workers = common.workers;
      m.seed("init", t.seed);
      m.seed("shuffle", t.seed);

      ParameterGroup init = make_group(scene, dc, t.seed);
      fit_output_offsets(init, scene, tr);
      const fs::path log_path = t.log.empty() ? fs::path(t.out + ".log.csv") : fs::path(t.log);
      std::ostringstream log;
      log << "epoch,group,train_loss,val_mae\n" << std::setprecision(9);
      const TrainResult result = train(init, scene, tr, va.size() ? &va : nullptr, tc, [&](const LossRecord& r) {
        double mean = std::numeric_limits<double>::quiet_NaN();
        if (!r.val_mae.empty()) {
          mean = 0.0;
          for (double v : r.val_mae) mean += v / static_cast<double>(r.val_mae.size());
        }
        log << r.epoch << ',' << t.task << ',' << r.train_loss << ',';
        if (!r.val_mae.empty()) log << mean;
        log << '\n';
      });
      int epoch = t.epochs;
      double mae = 0.0;
      const ParameterGroup* best = &result.final;
      if (!result.checkpoints.empty()) {
        const Checkpoint& c = select_best(result.checkpoints);
        best = &c.params;
        epoch = c.epoch;
        mae = c.mean_val_mae;
      }
      io::save(t.out, [&](std::ostream& o) { io::write_checkpoint(o, *best, epoch, mae); });
      if (!t.checkpoint_dir.empty()) {
        for (const Checkpoint& c : result.checkpoints) {
          const fs::path p = fs::path(t.checkpoint_dir) / ("epoch" + std::to_string(c.epoch) + ".rlfc");
          io::save(p, [&](std::ostream& o) { io::write_checkpoint(o, c.params, c.epoch, c.mean_val_mae); });
          m.output(p);
        }
      }
      io::save(log_path, [&](std::ostream& o) { o << log.str(); });
      m.output(t.out);
      m.output(log_path);
      m.note("best_epoch", epoch);
      m.note("best_val_mae", mae);
      m.write(manifest_path(common, sidecar(t.out)));
      std::cout << "best epoch " << epoch << ", validation MAE " << mae << "; wrote " << t.out << '\n';
    };
  });

  // ---- eval -----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Held-out error of a trained checkpoint");
  struct {
    std::string scene, sources, fields, checkpoint, split = "test", out = "metrics.csv";
  } e;
  eval_cmd->add_option("--scene", e.scene)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--sources", e.sources)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--fields", e.fields, "Bake directory (default: compute with the oracle)");
  eval_cmd->add_option("--checkpoint", e.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", e.split, "train | val | test")->capture_default_str();
  eval_cmd->add_option("-o,--out", e.out)->capture_default_str();
  add_common(eval_cmd, false);
  eval_cmd->callback([&] {
    action = [&] {
      RunManifest m("eval");
      snapshot_config(*eval_cmd, m);
      const VoxelScene scene = io::load_scene(e.scene);
      const auto entries = io::load_sources(e.sources);
      const ParameterGroup group = io::load_checkpoint(e.checkpoint);
      m.input(e.scene);
      m.input(e.sources);
      m.input(e.checkpoint);
      const Dataset data = load_dataset(scene, entries, split_from_string(e.split), e.fields, m);
      if (data.sources.empty()) throw Error(ErrorKind::config, "no sources in split '" + e.split + "'");
      const auto mae = evaluate_mae(group, scene, data);
      std::vector<AblationRow> rows;
      for (int h = 0; h < group.decoder.heads; ++h) {
        const std::string name = head_name(group.decoder.task, group.decoder.heads, h);
        rows.push_back({group.decoder.family, group.decoder.n, name, mae[static_cast<std::size_t>(h)], {}});
      }
      if (group.decoder.task == Task::distance) {
        double doa = 0.0;
        for (const auto& s : data.sources)
          doa += doa_error(doa_field(predict_field(group, scene, s.source, 0), scene),
                           doa_field(s.path_distance, scene));
        rows.push_back({group.decoder.family, group.decoder.n, "doa_deg",
                        doa / static_cast<double>(data.sources.size()), {}});
      }
      io::save(e.out, [&](std::ostream& o) { write_metrics_csv(o, rows); });
      m.output(e.out);
      m.write(manifest_path(common, sidecar(e.out)));
      write_metrics_csv(std::cout, rows);
    };
  });

  // ---- ablate ---------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "MAE against latent size for several decoder families");
  struct {
    std::string scene, sources, task = "distance", out = "ablation.csv";
    std::vector<std::string> families{"euclidean", "riemann-diag"};
    std::vector<int> ns{2, 4, 8, 16};
    int epochs = 2000, batch = 4, eval_interval = 50;
    double lr_decoder = 1e-3, lr_grid = 1e-4;
    std::uint64_t seed = 0;
  } a;
  ablate->add_option("--scene", a.scene)->required()->check(CLI::ExistingFile);
  ablate->add_option("--sources", a.sources)->required()->check(CLI::ExistingFile);
  ablate->add_option("--task", a.task)->capture_default_str();
  ablate->add_option("--families", a.families)->delimiter(',')->capture_default_str();
  ablate->add_option("--ns", a.ns, "Latent sizes")->delimiter(',')->capture_default_str();
  ablate->add_option("--epochs", a.epochs)->capture_default_str();
  ablate->add_option("--batch", a.batch)->capture_default_str();
  ablate->add_option("--lr-decoder", a.lr_decoder)->capture_default_str();
  ablate->add_option("--lr-grid", a.lr_grid)->capture_default_str();
  ablate->add_option("--eval-interval", a.eval_interval)->capture_default_str();
  ablate->add_option("--seed", a.seed)->envname("RLF_SEED")->capture_default_str();
  ablate->add_option("-o,--out", a.out)->capture_default_str();
  add_common(ablate, true);
  ablate->callback([&] {
    action = [&] {
      RunManifest m("ablate");
      snapshot_config(*ablate, m);
      const VoxelScene scene = io::load_scene(a.scene);
      const auto entries = io::load_sources(a.sources);
      m.input(a.scene);
      m.input(a.sources);
      const Dataset tr = load_dataset(scene, entries, Split::train, {}, m);
      const Dataset va = load_dataset(scene, entries, Split::val, {}, m);
      const Dataset te = load_dataset(scene, entries, Split::test, {}, m);
      AblationConfig cfg;
      cfg.families.clear();
      for (const auto& f : a.families) cfg.families.push_back(decoder_family_from_string(f));
      cfg.latent_sizes = a.ns;
      cfg.task = task_from_string(a.task);
      cfg.train.epochs = a.epochs;
      cfg.train.batch_sources = a.batch;
      cfg.train.lr_decoder = a.lr_decoder;
      cfg.train.lr_grid = a.lr_grid;
      cfg.train.eval_interval = a.eval_interval;
      cfg.train.seed = a.seed;
      cfg.train.workers = common.workers;
      cfg.init_seed = a.seed;
      m.seed("init", a.seed);
      m.seed("shuffle", a.seed);
      const auto rows = ablation_run(scene, tr, va, te.size() ? te : va, cfg);
      io::save(a.out, [&](std::ostream& o) { write_metrics_csv(o, rows); });
      m.output(a.out);
      m.write(manifest_path(common, sidecar(a.out)));
      write_metrics_csv(std::cout, rows);
    };
  });

  // ---- query ----------------------------------------------------------------
  auto* query = app.add_subcommand("query", "Predict acoustic parameters for a source/receiver pair");
  struct {
    std::string scene, distance, levels, decays, a, b;
    double step = 0.0;
  } q;
  query->add_option("--scene", q.scene)->required()->check(CLI::ExistingFile);
  query->add_option("--distance", q.distance, "Path-distance checkpoint")->required()->check(CLI::ExistingFile);
  query->add_option("--levels", q.levels, "Level checkpoint")->check(CLI::ExistingFile);
  query->add_option("--decays", q.decays, "Decay checkpoint")->check(CLI::ExistingFile);
  query->add_option("--source", q.a, "x,y,z")->required();
  query->add_option("--receiver", q.b, "x,y,z")->required();
  query->add_option("--stencil-step", q.step, "DOA stencil step in m (0: voxel size)")->capture_default_str();
  add_common(query, false);
  query->callback([&] {
    action = [&] {
      RunManifest m("query");
      snapshot_config(*query, m);
      const VoxelScene scene = io::load_scene(q.scene);
      m.input(q.scene);
      RuntimeModels models;
      models.distance = io::load_checkpoint(q.distance);
      m.input(q.distance);
      if (!q.levels.empty()) {
        models.levels = io::load_checkpoint(q.levels);
        m.input(q.levels);
      }
      if (!q.decays.empty()) {
        models.decays = io::load_checkpoint(q.decays);
        m.input(q.decays);
      }
      QueryConfig qc;
      qc.stencil_step = q.step;
      const AcousticParamSet p = query_params(models, scene, parse_vec3(q.a), parse_vec3(q.b), qc);
      print_params(std::cout, p);
      m.note("path_distance", p.path_distance);
      m.write(manifest_path(common, "query.manifest.json"));
    };
  });

  // ---- render ---------------------------------------------------------------
  auto* render = app.add_subcommand("render", "Offline parametric rendering of a dry signal");
  struct {
    std::string input, out = "render.rlfir", layout = "octahedral", doa = "1,0,0";
    double l_ds = 0.0, l_er = -10.0, tau_er = 0.3, tau_lr = 0.8;
    std::optional<double> l_lr;
    std::uint64_t seed = 7;
  } r;
  render->add_option("--input", r.input, "Mono signal file")->required()->check(CLI::ExistingFile);
  render->add_option("--layout", r.layout, "octahedral | quad | mono | layout file")->capture_default_str();
  render->add_option("--l-ds", r.l_ds)->capture_default_str();
  render->add_option("--l-er", r.l_er)->capture_default_str();
  render->add_option("--l-lr", r.l_lr, "Late level (default: derived from L_ER and tau_ER)");
  render->add_option("--tau-er", r.tau_er)->capture_default_str();
  render->add_option("--tau-lr", r.tau_lr)->capture_default_str();
  render->add_option("--doa", r.doa, "Arrival direction x,y,z")->capture_default_str();
  render->add_option("--ref-seed", r.seed, "Reference IR noise seed")->capture_default_str();
  render->add_option("-o,--out", r.out)->capture_default_str();
  add_common(render, false);
  render->callback([&] {
    action = [&] {
      RunManifest m("render");
      snapshot_config(*render, m);
      const io::SignalFile in = io::load_signal(r.input);
      m.input(r.input);
      const SpeakerLayout layout = layout_from(r.layout, m);
      AcousticParamSet p;
      p.l_ds = r.l_ds;
      p.l_er = r.l_er;
      p.tau_er = r.tau_er;
      p.tau_lr = r.tau_lr;
      p.l_lr = r.l_lr ? *r.l_lr : derive_l_lr(r.l_er, r.tau_er);
      p.doa = parse_vec3(r.doa);
      if (!(p.doa.norm() > 0.0)) throw Error(ErrorKind::config, "direction must be non-zero");
      const ReferenceIRSet refs = make_reference_irs(in.sample_rate, r.seed);
      m.seed("reference_irs", r.seed);
      const RenderParams rp = make_render_params(p, refs, layout);
      Signal x;
      x.sample_rate = in.sample_rate;
      x.samples.assign(in.channels.row(0).begin(), in.channels.row(0).end());
      const MultichannelSignal y = render_offline(x, rp, refs);
      io::save(r.out, [&](std::ostream& o) { io::write_signal(o, y.channels, y.sample_rate, in.t0); });
      m.output(r.out);
      m.write(manifest_path(common, sidecar(r.out)));
      std::cout << "wrote " << y.channels.rows() << " channels x " << y.channels.cols() << " samples to "
                << r.out << '\n';
    };
  });

  // ---- export-slice ---------------------------------------------------------
  auto* slice = app.add_subcommand("export-slice", "Grayscale PGM of a horizontal field slice");
  struct {
    std::string field, out = "slice.pgm";
    int y = 1;
  } x;
  slice->add_option("--field", x.field)->required()->check(CLI::ExistingFile);
  slice->add_option("--y", x.y, "Slice index along y")->capture_default_str();
  slice->add_option("-o,--out", x.out)->capture_default_str();
  add_common(slice, false);
  slice->callback([&] {
    action = [&] {
      RunManifest m("export-slice");
      snapshot_config(*slice, m);
      const FieldVolume f = io::load_field(x.field);
      m.input(x.field);
      io::PgmRange range;
      io::save(x.out, [&](std::ostream& o) { range = io::write_slice_pgm(o, f, x.y); });
      m.output(x.out);
      m.note("normalization", {{"min", range.min}, {"max", range.max}});
      m.write(manifest_path(common, sidecar(x.out)));
      std::cout << "wrote " << x.out << " (min " << range.min << ", max " << range.max << ")\n";
    };
  });

  // ---- params extract -------------------------------------------------------
  auto* params_cmd = app.add_subcommand("params", "Impulse response analysis")->require_subcommand(1);
  auto* extract = params_cmd->add_subcommand("extract", "Six acoustic parameters of an impulse response");
  struct {
    std::string ir;
    double c = 343.0, threshold = 0.1;
  } pe;
  extract->add_option("--ir", pe.ir)->required()->check(CLI::ExistingFile);
  extract->add_option("--speed-of-sound", pe.c)->capture_default_str();
  extract->add_option("--threshold", pe.threshold, "Arrival threshold relative to the peak")->capture_default_str();
  add_common(extract, false);
  extract->callback([&] {
    action = [&] {
      RunManifest m("params extract");
      snapshot_config(*extract, m);
      const ImpulseResponse ir = io::load_ir(pe.ir);
      m.input(pe.ir);
      WindowConfig wc;
      wc.arrival_threshold = pe.threshold;
      const ExtractedParams p = extract_params(ir, wc, pe.c);
      std::cout << std::setprecision(9) << p.path_distance << ',' << p.l_ds << ',' << p.l_er << ','
                << p.l_lr << ',' << p.tau_er << ',' << p.tau_lr << '\n';
      m.write(manifest_path(common, sidecar(pe.ir)));
    };
  });

  // ---- ir synth -------------------------------------------------------------
  auto* ir_cmd = app.add_subcommand("ir", "Impulse response utilities")->require_subcommand(1);
  auto* synth = ir_cmd->add_subcommand("synth", "Synthetic impulse response with known parameters");
  struct {
    double pi = 5.0, l_ds = -14.0, l_er = -20.0, tau_er = 0.3, tau_lr = 0.8, fs = 16000.0, duration = 2.0;
    std::uint64_t seed = 1;
    std::string out = "ir.rlfir";
  } sy;
  synth->add_option("--pi", sy.pi, "Path distance (m)")->capture_default_str();
  synth->add_option("--l-ds", sy.l_ds)->capture_default_str();
  synth->add_option("--l-er", sy.l_er)->capture_default_str();
  synth->add_option("--tau-er", sy.tau_er)->capture_default_str();
  synth->add_option("--tau-lr", sy.tau_lr)->capture_default_str();
  synth->add_option("--sample-rate", sy.fs)->capture_default_str();
  synth->add_option("--duration", sy.duration)->capture_default_str();
  synth->add_option("--seed", sy.seed)->envname("RLF_SEED")->capture_default_str();
  synth->add_option("-o,--out", sy.out)->capture_default_str();
  add_common(synth, false);
  synth->callback([&] {
    action = [&] {
      AcousticParamSet p;
      p.path_distance = sy.pi;
      p.l_ds = sy.l_ds;
      p.l_er = sy.l_er;
      p.tau_er = sy.tau_er;
      p.tau_lr = sy.tau_lr;
      SyntheticIRConfig cfg;
      cfg.sample_rate = sy.fs;
      cfg.duration = sy.duration;
      cfg.noise_seed = sy.seed;
      const ImpulseResponse ir = synth_ir(p, cfg);
      io::save(sy.out, [&](std::ostream& o) { io::write_ir(o, ir); });
      RunManifest m("ir synth");
      snapshot_config(*synth, m);
      m.seed("noise", sy.seed);
      m.output(sy.out);
      m.write(manifest_path(common, sidecar(sy.out)));
      std::cout << "wrote " << sy.out << '\n';
    };
  });

  // ---- cost -----------------------------------------------------------------
  auto* cost = app.add_subcommand("cost", "Parameter, FLOP and memory accounting");
  struct {
    std::string dims = "59x8x59", out;
    int n = 16;
  } co;
  cost->add_option("--dims", co.dims, "Grid size HxWxD")->capture_default_str();
  cost->add_option("--n", co.n, "Latent size")->check(CLI::NonNegativeNumber)->capture_default_str();
  cost->add_option("-o,--out", co.out, "Costs CSV");
  add_common(cost, false);
  cost->callback([&] {
    action = [&] {
      const Index3 dims = parse_dims(co.dims);
      std::vector<std::pair<DecoderFamily, CostReport>> rows;
      const auto add = [&](DecoderFamily f, std::vector<int> hidden = {}) {
        DecoderConfig dc;
        dc.family = f;
        dc.task = f == DecoderFamily::dot_product ? Task::decays : Task::distance;
        dc.heads = 1;
        dc.n = std::max(co.n, 1);
        if (!hidden.empty()) dc.hidden = hidden;
        CostReport rep = cost_report(dims, co.n, make_decoder(dc, 0));
        rows.emplace_back(f, rep);
        std::cout << std::left << std::setw(14) << to_string(f);
        if (f == DecoderFamily::mlp) {
          std::string h;
          for (std::size_t i = 0; i < hidden.size(); ++i) h += (i ? "-" : "") + std::to_string(hidden[i]);
          std::cout << std::setw(8) << h;
        } else {
          std::cout << std::setw(8) << "";
        }
        std::cout << " params " << std::setw(6) << rep.params << " flops " << std::setw(6) << rep.flops << '\n';
      };
      add(DecoderFamily::euclidean);
      add(DecoderFamily::riemann_psd);
      add(DecoderFamily::riemann_diag);
      add(DecoderFamily::mlp, {32, 32});
      add(DecoderFamily::mlp, {128, 64, 32});
      add(DecoderFamily::dot_product);
      const CostReport& r = rows.front().second;
      std::cout << std::setprecision(4) << "grid " << co.dims << ", n = " << co.n << '\n'
                << "RLF memory:         " << r.rlf_bytes << " B (" << format_bytes(r.rlf_bytes) << ", "
                << static_cast<double>(r.rlf_bytes) / 1e6 << " MB)\n"
                << "wave-coding memory: " << r.wavecoding_bytes << " B ("
                << format_bytes(r.wavecoding_bytes) << ", " << static_cast<double>(r.wavecoding_bytes) / 1e9
                << " GB)\n";
      RunManifest m("cost");
      snapshot_config(*cost, m);
      if (!co.out.empty()) {
        io::save(co.out, [&](std::ostream& o) { write_costs_csv(o, rows); });
        m.output(co.out);
      }
      m.note("rlf_bytes", r.rlf_bytes);
      m.note("wavecoding_bytes", r.wavecoding_bytes);
      m.write(manifest_path(common, co.out.empty() ? fs::path("cost.manifest.json") : sidecar(co.out)));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (action) action();
    return kOk;
  } catch (const Error& e) {
    std::cerr << "rlf: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::config: return kConfig;
      case ErrorKind::io: return kIo;
      default: return kDomain;
    }
  } catch (const fs::filesystem_error& e) {
    std::cerr << "rlf: io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "rlf: " << e.what() << '\n';
    return kOther;
  }
}
