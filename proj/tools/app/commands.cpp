#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <sstream>

#include "dirsurf/errors.hpp"
#include "dirsurf/eval.hpp"
#include "dirsurf/io.hpp"
#include "figures.hpp"
#include "manifest.hpp"
#include "version.hpp"

namespace dirsurf::app {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_output(const fs::path& requested) {
  if (requested.is_absolute()) return requested;
  const char* root = std::getenv(kOutputRootEnv);
  if (root && *root) return fs::path(root) / requested;
  return requested;
}

std::vector<std::string> ablation_values(const std::string& axis) {
  if (axis == "gamma-b-init") return {"0.0", "0.1", "0.2", "0.3", "0.5"};
  if (axis == "detach") return {"true", "false"};
  if (axis == "fusion-order") return {"pre_encoding", "post_encoding"};
  if (axis == "mode") return {"viewing", "reflection", "hybrid"};
  throw ConfigError("axis", "unknown ablation axis '" + axis + "' (expected gamma-b-init, detach, fusion-order or mode)");
}

void apply_ablation(json& config, const std::string& axis, const std::string& value) {
  json& d = config["direction"];
  if (!d.is_object()) d = json::object();
  if (axis == "mode") {
    d["mode"] = value;
    return;
  }
  // The other axes only exist for the hybrid parameterization.
  d["mode"] = "hybrid";
  if (axis == "gamma-b-init") {
    try {
      std::size_t used = 0;
      d["gamma_b_init"] = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::logic_error&) {
      throw ConfigError("values", "not a number: '" + value + "'");
    }
  } else if (axis == "detach") {
    if (value != "true" && value != "false") throw ConfigError("values", "detach takes true or false");
    d["detach"] = value == "true";
  } else if (axis == "fusion-order") {
    d["fusion"] = value;
  } else {
    ablation_values(axis);  // throws for unknown axes
  }
}

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

json number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

json read_config_doc(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("", "cannot parse " + path + ": " + e.what());
  }
}

/// Options shared by the commands that resolve a run configuration.
struct ConfigArgs {
  std::string config;
  std::string scene;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
  int workers = 1;

  void add_to(CLI::App* cmd, bool with_dataset = true) {
    cmd->add_option("-c,--config", config, "Run configuration (JSON)");
    cmd->add_option("--scene", scene, "Built-in scene id (overrides the config)");
    if (with_dataset) cmd->add_option("--dataset", dataset, "Dataset directory (overrides the config)");
    cmd->add_option("-o,--out", out, "Output directory");
    cmd->add_option("--seed", seed, "Run seed (overrides the config)");
    cmd->add_option("--workers", workers, "Worker threads for generation, extraction and rendering")
        ->check(CLI::PositiveNumber);
  }

  json document() const {
    json j = read_config_doc(config);
    if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
    if (!scene.empty()) {
      j["scene"] = scene;
      j.erase("dataset");
    }
    if (!dataset.empty()) j["dataset"] = dataset;
    if (seed) j["seed"] = *seed;
    if (!out.empty()) j["output"] = out;
    return j;
  }

  bool names_scene(const json& j) const { return j.contains("scene") || j.contains("dataset"); }
};

fs::path output_for(const RunConfig& cfg, const std::string& command) {
  return resolve_output(cfg.output.empty() ? fs::path("runs") / command : cfg.output);
}

void write_resolved(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  io::write_text(dir / kResolvedConfigName, to_json(cfg).dump(2) + "\n");
}

render::SamplingConfig render_sampling(const RunConfig& cfg) {
  render::SamplingConfig s = cfg.sampling;
  s.jitter = false;
  return s;
}

/// Cameras halfway between the training cameras.
std::vector<scenes::Camera> held_out_cameras(const RunConfig& cfg, int count) {
  scenes::RigConfig r = cfg.rig;
  r.angle_offset_deg += 0.5 * 360.0 / r.views;
  r.views = count;
  return scenes::default_rig(cfg.scene.dim, r, cfg.scene.bound_radius);
}

std::string stem(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, i, ext);
  return buf;
}

/// Renders held-out views into `dir` and returns the pixel-weighted normal MAE.
double render_held_out(render::Field& field, const dirparam::DirectionalConfig& dcfg, const RunConfig& cfg, int count,
                       const fs::path& dir, std::vector<std::string>* files) {
  fs::create_directories(dir);
  double sum = 0.0;
  long pixels = 0;
  const auto cams = held_out_cameras(cfg, count);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto gt = scenes::render_ground_truth(cfg.scene, cams[i]);
    const auto v = render::render_view(field, dcfg, cams[i], cfg.scene.bound_radius, render_sampling(cfg),
                                       derive_seed(cfg.seed, "render", i), cfg.scene.background);
    long masked = 0;
    for (double m : gt.mask.data) masked += m > 0.5;
    sum += eval::normal_mae(v.normal, gt.normal, gt.mask) * static_cast<double>(masked);
    pixels += masked;
    const std::string color = stem("view", i, ".ppm"), normal = stem("normal", i, ".ppm"), acc = stem("opacity", i, ".pgm");
    io::write_ppm(dir / color, v.color);
    io::write_ppm(dir / normal, render::encode_normals(v.normal, v.accumulated));
    io::write_pgm(dir / acc, v.accumulated);
    if (files)
      for (const auto& f : {color, normal, acc}) files->push_back((dir.filename() / f).generic_string());
  }
  return pixels ? sum / static_cast<double>(pixels) : 0.0;
}

/// Writes the zero level set as surface.json (2D) or surface.obj (3D); returns the file name.
std::string write_surface(const eval::BatchSdf& f, const RunConfig& cfg, int resolution, const fs::path& dir,
                          int workers, eval::Polylines* polylines = nullptr) {
  const eval::Bounds b = eval::cube_bounds(cfg.scene.dim, cfg.scene.bound_radius);
  if (cfg.scene.dim == 2) {
    auto p = eval::marching_squares(f, b, resolution, workers);
    eval::write_polylines_json(dir / "surface.json", p);
    if (polylines) *polylines = std::move(p);
    return "surface.json";
  }
  eval::write_obj(dir / "surface.obj", eval::marching_cubes(f, b, resolution, workers));
  return "surface.obj";
}

train::Checkpoint load_checkpoint_for(const fs::path& path, const RunConfig& cfg) {
  train::Checkpoint ck = train::read_checkpoint(path);
  if (ck.bundle.dim() != cfg.scene.dim)
    throw ConfigError("checkpoint", "network dimension " + std::to_string(ck.bundle.dim()) +
                                        " does not match scene '" + cfg.scene.id + "'");
  return ck;
}

RunConfig resolve(const ConfigArgs& a, bool require_scene) {
  const json doc = a.document();
  if (require_scene && !a.names_scene(doc)) throw ConfigError("scene", "no scene given (use --scene, --dataset or a config)");
  return run_config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate(const ConfigArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a, true);
  const fs::path dir = output_for(cfg, "generate");
  Manifest m{"generate", to_json(cfg), utc_timestamp(), "", json::object()};
  const auto rig = scenes::default_rig(cfg.scene.dim, cfg.rig, cfg.scene.bound_radius);
  const auto ds = scenes::generate_dataset(cfg.scene, rig, derive_seed(cfg.seed, "dataset"), a.workers);
  scenes::write_dataset(dir, ds);
  write_resolved(dir, cfg);
  long masked = 0;
  for (const auto& v : ds.views)
    for (double x : v.mask.data) masked += x > 0.5;
  m.final_metrics = {{"views", ds.views.size()}, {"masked_pixels", masked}};
  m.finished = utc_timestamp();
  write_manifest(dir, m);
  out << "wrote " << ds.views.size() << " views of '" << cfg.scene.id << "' to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

TrainSummary run_training(const RunConfig& cfg, const fs::path& dir, int workers, int stop_after,
                          const std::optional<fs::path>& resume, std::ostream* progress) {
  Manifest m{"train", to_json(cfg), utc_timestamp(), "", json::object()};
  write_resolved(dir, cfg);
  const scenes::Dataset ds =
      cfg.dataset ? scenes::read_dataset(*cfg.dataset)
                  : scenes::generate_dataset(cfg.scene, scenes::default_rig(cfg.scene.dim, cfg.rig, cfg.scene.bound_radius),
                                             derive_seed(cfg.seed, "dataset"), workers);
  train::FitOptions opts;
  opts.out_dir = dir;
  opts.stop_after = stop_after;
  opts.resume = resume;
  opts.workers = workers;
  if (progress) {
    opts.on_log = [&](const train::StepMetrics& s) {
      *progress << "step " << s.step << "  loss " << io::format_double(s.total) << "  color "
                << io::format_double(s.color) << "  s " << io::format_double(s.s) << "  gamma "
                << io::format_double(s.gamma) << "\n"
                << std::flush;
    };
  }
  const auto res = train::fit(ds, cfg.network, cfg.direction, cfg.train, cfg.sampling, cfg.losses, cfg.seed, opts);

  TrainSummary summary;
  summary.final_step = res.final_step;
  summary.complete = res.final_step >= cfg.train.iterations;
  if (!res.log.empty()) summary.last = res.log.back();
  const auto oracle = eval::network_oracle(res.bundle);
  summary.surface = train::evaluate_surface(oracle, ds.scene, cfg.train.eval_resolution, cfg.train.eval_points,
                                            cfg.seed, workers);
  write_surface(oracle, cfg, cfg.train.eval_resolution, dir, workers);

  m.final_metrics = {{"step", res.final_step},
                     {"complete", summary.complete},
                     {"chamfer", number_or_inf(summary.surface.chamfer)},
                     {"accuracy", number_or_inf(summary.surface.accuracy)},
                     {"hausdorff", number_or_inf(summary.surface.hausdorff)},
                     {"surface_empty", summary.surface.empty},
                     {"loss_total", summary.last.total},
                     {"loss_color", summary.last.color},
                     {"loss_eikonal", summary.last.eikonal},
                     {"loss_mask", summary.last.mask},
                     {"s", res.bundle.s()},
                     {"gamma", res.bundle.has_gamma_b ? json(res.bundle.gamma()) : json(nullptr)},
                     {"degenerate_normals", res.degenerate_normals},
                     {"degenerate_blends", res.degenerate_blends}};
  m.finished = utc_timestamp();
  write_manifest(dir, m);
  return summary;
}

namespace {

struct TrainArgs {
  ConfigArgs base;
  std::string mode;
  std::optional<double> gamma_b_init;
  std::string fusion;
  std::optional<bool> detach;
  std::optional<int> iterations;
  std::string resume;
  int stop_after = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  json doc = a.base.document();
  if (!a.base.names_scene(doc)) throw ConfigError("scene", "no scene given (use --scene, --dataset or a config)");
  if (!a.mode.empty() || a.gamma_b_init || !a.fusion.empty() || a.detach) {
    json& d = doc["direction"];
    if (!d.is_object()) d = json::object();
    if (!a.mode.empty()) d["mode"] = a.mode;
    if (a.gamma_b_init) d["gamma_b_init"] = *a.gamma_b_init;
    if (!a.fusion.empty()) d["fusion"] = a.fusion;
    if (a.detach) d["detach"] = *a.detach;
  }
  if (a.iterations) {
    if (!doc["train"].is_object()) doc["train"] = json::object();
    doc["train"]["iterations"] = *a.iterations;
  }
  const RunConfig cfg = run_config_from_json(doc);
  const fs::path dir = output_for(cfg, "train");
  std::optional<fs::path> resume;
  if (!a.resume.empty()) resume = a.resume;
  const auto s = run_training(cfg, dir, a.base.workers, a.stop_after, resume, a.quiet ? nullptr : &out);
  out << (s.complete ? "finished" : "stopped") << " at step " << s.final_step << "; chamfer "
      << io::format_double(s.surface.chamfer) << "; outputs in " << dir.string() << "\n";
  return kExitOk;
}

struct ViewArgs {
  ConfigArgs base;
  std::string checkpoint;
  bool oracle = false;
  int count = 8;
  int resolution = 0;
  int points = 0;
  double oracle_sharpness = 400.0;
};

int cmd_render(const ViewArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.base, true);
  const fs::path dir = output_for(cfg, "render");
  Manifest m{"render", to_json(cfg), utc_timestamp(), "", json::object()};
  const train::Checkpoint ck = load_checkpoint_for(a.checkpoint, cfg);
  write_resolved(dir, cfg);
  render::NeuralField field(ck.bundle);
  field.bind(nullptr);
  std::vector<std::string> files;
  const double mae = render_held_out(field, ck.direction, cfg, a.count, dir / "views", &files);
  m.final_metrics = {{"views", a.count}, {"normal_mae_deg", mae}, {"checkpoint_step", ck.step}};
  m.finished = utc_timestamp();
  write_manifest(dir, m);
  out << "rendered " << a.count << " held-out views to " << (dir / "views").string() << "\n";
  return kExitOk;
}

int cmd_extract(const ViewArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.base, true);
  const fs::path dir = output_for(cfg, "extract");
  Manifest m{"extract", to_json(cfg), utc_timestamp(), "", json::object()};
  const int resolution = a.resolution > 0 ? a.resolution : cfg.train.eval_resolution;
  std::optional<train::Checkpoint> ck;
  if (!a.oracle) ck = load_checkpoint_for(a.checkpoint, cfg);
  const eval::BatchSdf f = a.oracle ? eval::analytic_oracle(cfg.scene.sdf) : eval::network_oracle(ck->bundle);
  write_resolved(dir, cfg);
  const std::string file = write_surface(f, cfg, resolution, dir, a.base.workers);
  m.final_metrics = {{"resolution", resolution}, {"surface", file}};
  m.finished = utc_timestamp();
  write_manifest(dir, m);
  out << "wrote " << (dir / file).string() << "\n";
  return kExitOk;
}

int cmd_eval(const ViewArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.base, true);
  const fs::path dir = output_for(cfg, "eval");
  Manifest m{"eval", to_json(cfg), utc_timestamp(), "", json::object()};
  const int resolution = a.resolution > 0 ? a.resolution : cfg.train.eval_resolution;
  const int points = a.points > 0 ? a.points : cfg.train.eval_points;

  std::unique_ptr<render::Field> field;
  std::optional<train::Checkpoint> ck;
  dirparam::DirectionalConfig dcfg = cfg.direction;
  eval::BatchSdf oracle;
  if (a.oracle) {
    oracle = eval::analytic_oracle(cfg.scene.sdf);
    field = std::make_unique<render::AnalyticField>(cfg.scene.sdf, cfg.scene.material.albedo, a.oracle_sharpness);
  } else {
    ck = load_checkpoint_for(a.checkpoint, cfg);
    dcfg = ck->direction;
    oracle = eval::network_oracle(ck->bundle);
    field = std::make_unique<render::NeuralField>(ck->bundle);
  }
  field->bind(nullptr);
  write_resolved(dir, cfg);
  const auto sm = train::evaluate_surface(oracle, cfg.scene, resolution, points, cfg.seed, a.base.workers);
  const std::string surface = write_surface(oracle, cfg, resolution, dir, a.base.workers);
  std::vector<std::string> renders;
  const double mae = render_held_out(*field, dcfg, cfg, a.count, dir / "views", &renders);

  const eval::Bounds b = eval::cube_bounds(cfg.scene.dim, cfg.scene.bound_radius);
  const json report = {{"format", "dirsurf-report"},
                       {"version", 1},
                       {"scene", cfg.scene.id},
                       {"source", a.oracle ? "oracle" : "checkpoint"},
                       {"checkpoint", a.oracle ? json(nullptr) : json(a.checkpoint)},
                       {"resolution", resolution},
                       {"points", points},
                       {"cell_diagonal", b.diagonal() / resolution},
                       {"chamfer", number_or_inf(sm.chamfer)},
                       {"accuracy", number_or_inf(sm.accuracy)},
                       {"hausdorff", number_or_inf(sm.hausdorff)},
                       {"surface_empty", sm.empty},
                       {"normal_mae_deg", mae},
                       {"held_out_views", a.count},
                       {"surface", surface},
                       {"renders", renders}};
  io::write_text(dir / "report.json", report.dump(2) + "\n");
  io::write_text(dir / "report.csv", "scene,source,resolution,chamfer,accuracy,hausdorff,normal_mae_deg\n" + cfg.scene.id +
                                         "," + (a.oracle ? "oracle" : "checkpoint") + "," + std::to_string(resolution) +
                                         "," + io::format_double(sm.chamfer) + "," + io::format_double(sm.accuracy) +
                                         "," + io::format_double(sm.hausdorff) + "," + io::format_double(mae) + "\n");
  m.final_metrics = report;
  m.finished = utc_timestamp();
  write_manifest(dir, m);
  out << "chamfer " << io::format_double(sm.chamfer) << "  accuracy " << io::format_double(sm.accuracy)
      << "  normal MAE " << io::format_double(mae) << " deg  (" << dir.string() << ")\n";
  return kExitOk;
}

struct AblateArgs {
  ConfigArgs base;
  std::string axis;
  std::vector<std::string> values;
  int views = 4;
};

std::string csv_field(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const json base = a.base.document();
  if (!a.base.names_scene(base)) throw ConfigError("scene", "no scene given (use --scene, --dataset or a config)");
  const std::vector<std::string> values = a.values.empty() ? ablation_values(a.axis) : a.values;
  ablation_values(a.axis);  // validates the axis
  const RunConfig base_cfg = run_config_from_json(base);
  const fs::path dir = output_for(base_cfg, "ablate");
  fs::create_directories(dir);
  Manifest m{"ablate", to_json(base_cfg), utc_timestamp(), "", json::object()};
  m.config["ablation"] = {{"axis", a.axis}, {"values", values}};

  std::string table = "axis,value,status,chamfer,accuracy,normal_mae_deg,loss_total,loss_color,loss_eikonal,loss_mask,error\n";
  std::vector<io::Image> panels;
  json rows = json::array();
  int failures = 0;
  for (const auto& value : values) {
    const fs::path run_dir = dir / (a.axis + "_" + value);
    std::string status = "ok", error;
    TrainSummary s;
    double mae = std::numeric_limits<double>::quiet_NaN();
    eval::Polylines contour;
    try {
      json doc = base;
      apply_ablation(doc, a.axis, value);
      doc["output"] = run_dir.string();
      const RunConfig cfg = run_config_from_json(doc);
      s = run_training(cfg, run_dir, a.base.workers, 0, std::nullopt, nullptr);
      const train::Checkpoint ck = train::read_checkpoint(run_dir / "checkpoint.ckpt");
      render::NeuralField field(ck.bundle);
      field.bind(nullptr);
      mae = render_held_out(field, ck.direction, cfg, a.views, run_dir / "views", nullptr);
      if (cfg.scene.dim == 2)
        contour = eval::marching_squares(eval::network_oracle(ck.bundle), eval::cube_bounds(2, cfg.scene.bound_radius),
                                         cfg.train.eval_resolution, a.base.workers);
    } catch (const std::exception& e) {
      status = "failed";
      error = e.what();
      ++failures;
    }
    const bool ok = status == "ok";
    auto num = [&](double v) { return ok ? io::format_double(v) : std::string(); };
    table += a.axis + "," + value + "," + status + "," + num(s.surface.chamfer) + "," + num(s.surface.accuracy) + "," +
             num(mae) + "," + num(s.last.total) + "," + num(s.last.color) + "," + num(s.last.eikonal) + "," +
             num(s.last.mask) + "," + csv_field(error) + "\n";
    rows.push_back({{"value", value}, {"status", status}, {"chamfer", ok ? number_or_inf(s.surface.chamfer) : json(nullptr)}});
    out << a.axis << "=" << value << ": " << status
        << (ok ? "  chamfer " + io::format_double(s.surface.chamfer) : "  (" + error + ")") << "\n"
        << std::flush;
    if (base_cfg.scene.dim == 2) {
      Canvas c(256, base_cfg.scene.bound_radius);
      c.polylines(eval::marching_squares(eval::analytic_oracle(base_cfg.scene.sdf),
                                         eval::cube_bounds(2, base_cfg.scene.bound_radius), 256),
                  Rgb::Constant(0.7));
      c.polylines(contour, Rgb::Zero());
      panels.push_back(c.image());
    }
  }
  io::write_text(dir / "ablation.csv", table);
  if (!panels.empty()) io::write_ppm(dir / "surfaces.ppm", side_by_side(panels));
  m.final_metrics = {{"rows", rows}, {"failures", failures}};
  m.finished = utc_timestamp();
  write_manifest(dir, m);
  out << "wrote " << (dir / "ablation.csv").string() << " (" << values.size() << " rows, " << failures << " failed)\n";
  return kExitOk;
}

struct DiagnoseArgs {
  ConfigArgs base;
  std::vector<double> origin{1.5, 1.5};
  std::vector<double> target{-0.1, -0.1};
  double half_angle = 12.0;
  int rays = 32;
  int samples = 256;
  double bound = 2.0;
  int image_size = 512;
};

Vec3 to_point(const std::vector<double>& v, int dim, const char* name) {
  if (static_cast<int>(v.size()) != dim && !(dim == 3 && v.size() == 2))
    throw ConfigError(name, "expected " + std::to_string(dim) + " coordinates");
  Vec3 p = Vec3::Zero();
  for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<Eigen::Index>(i)] = v[i];
  return p;
}

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  json doc = a.base.document();
  if (!a.base.names_scene(doc)) doc["scene"] = "flat2d-lshape";
  const RunConfig cfg = run_config_from_json(doc);
  const fs::path dir = output_for(cfg, "diagnose");
  Manifest m{"diagnose", to_json(cfg), utc_timestamp(), "", json::object()};
  const int dim = cfg.scene.dim;
  const Vec3 origin = to_point(a.origin, dim, "origin"), target = to_point(a.target, dim, "target");
  if ((target - origin).norm() < 1e-12) throw ConfigError("target", "must differ from the origin");
  if (a.rays < 1) throw ConfigError("rays", "must be >= 1");
  if (a.samples < 2) throw ConfigError("samples", "must be >= 2");
  if (!(a.bound > 0.0)) throw ConfigError("bound", "must be positive");
  m.config["fan"] = {{"origin", a.origin}, {"target", a.target}, {"half_angle_deg", a.half_angle},
                     {"rays", a.rays},     {"samples", a.samples}, {"bound", a.bound}};

  const auto rays = eval::ray_fan(dim, origin, target, a.half_angle, a.rays, a.bound);
  const auto fan = eval::fan_dispersion(cfg.scene.sdf, rays, a.samples);
  static constexpr const char* kBand[3] = {"near", "mid", "far"};

  std::string csv = "ray_id,band,spread_rad,n_samples\n";
  int misses = 0;
  for (std::size_t i = 0; i < fan.rays.size(); ++i) {
    const auto& p = fan.rays[i];
    if (!p.hit) {
      ++misses;
      csv += std::to_string(i) + ",miss,," + std::to_string(p.t.size()) + "\n";
    }
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& band = p.bands[b];
      csv += std::to_string(i) + "," + kBand[b] + "," + (band.samples ? io::format_double(band.spread_rad) : "") + "," +
             std::to_string(band.samples) + "\n";
    }
  }
  fs::create_directories(dir);
  write_resolved(dir, cfg);
  io::write_text(dir / "dispersion.csv", csv);

  const double near = fan.mean_spread[0], far = fan.mean_spread[2];
  const double ratio = far == 0.0 ? (near == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                                 : 0.0)
                                  : (near == 0.0 ? std::numeric_limits<double>::infinity() : far / near);
  json bands = json::array();
  for (std::size_t b = 0; b < 3; ++b)
    bands.push_back({{"band", kBand[b]},
                     {"lo", eval::kDispersionBandEdges[b]},
                     {"hi", number_or_inf(b == 2 ? std::numeric_limits<double>::infinity() : eval::kDispersionBandEdges[b + 1])},
                     {"mean_spread_rad", fan.mean_spread[b]},
                     {"rays", fan.rays_in_band[b]}});
  const json summary = {{"scene", cfg.scene.id}, {"rays", a.rays}, {"samples_per_ray", a.samples}, {"misses", misses},
                        {"bands", bands},        {"far_over_near", number_or_inf(ratio)}};
  io::write_text(dir / "summary.json", summary.dump(2) + "\n");

  // Top-down picture: scene, rays, and every sample colored by its reflection direction.
  Canvas c(a.image_size, a.bound);
  c.fill_sdf(cfg.scene.sdf);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto& r = rays[i];
    c.line(r.origin + r.near * r.direction, r.origin + r.far * r.direction, Rgb::Constant(0.6));
  }
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto& p = fan.rays[i];
    for (std::size_t k = 0; k < p.t.size(); ++k)
      c.dot(rays[i].origin + p.t[k] * rays[i].direction, direction_color(p.reflection[k]), 1);
  }
  io::write_ppm(dir / "dispersion.ppm", c.image());

  m.final_metrics = summary;
  m.finished = utc_timestamp();
  write_manifest(dir, m);
  out << "mean spread near " << io::format_double(near) << " rad, far " << io::format_double(far)
      << " rad, far/near " << io::format_double(ratio) << (misses ? "; " + std::to_string(misses) + " rays missed" : "")
      << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural implicit surface reconstruction with directional parameterizations"};
  app.name("dirsurf");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("dirsurf ") + kVersion);

  ConfigArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Render a synthetic dataset of an analytic scene");
  gen.add_to(c_gen, false);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Fit a field to a dataset");
  tr.base.add_to(c_train);
  c_train->add_option("--mode", tr.mode, "Directional parameterization")
      ->check(CLI::IsMember({"viewing", "reflection", "hybrid"}));
  c_train->add_option("--gamma-b-init", tr.gamma_b_init, "Initial blend-sharpness parameter (hybrid)");
  c_train->add_option("--fusion", tr.fusion, "Hybrid fusion order")
      ->check(CLI::IsMember({"pre", "post", "pre_encoding", "post_encoding"}));
  c_train->add_option("--detach", tr.detach, "Detach |f| in the blend weight (true/false)");
  c_train->add_option("--iterations", tr.iterations, "Training iterations")->check(CLI::PositiveNumber);
  c_train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  c_train->add_option("--stop-after", tr.stop_after, "Stop once this step is reached")->check(CLI::NonNegativeNumber);
  c_train->add_flag("-q,--quiet", tr.quiet, "No per-step progress");

  ViewArgs rd;
  auto* c_render = app.add_subcommand("render", "Render held-out views of a trained field");
  rd.base.add_to(c_render);
  c_render->add_option("--checkpoint", rd.checkpoint, "Checkpoint file")->required();
  c_render->add_option("--count", rd.count, "Number of held-out views")->check(CLI::PositiveNumber);

  ViewArgs ex;
  auto* c_extract = app.add_subcommand("extract", "Extract the zero level set of a field");
  ex.base.add_to(c_extract);
  auto* ex_ck = c_extract->add_option("--checkpoint", ex.checkpoint, "Checkpoint file");
  auto* ex_or = c_extract->add_flag("--oracle", ex.oracle, "Use the analytic scene SDF as the field");
  ex_ck->excludes(ex_or);
  c_extract->add_option("--resolution", ex.resolution, "Grid cells per axis")->check(CLI::Range(2, 4096));

  ViewArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Surface and normal metrics against the analytic scene");
  ev.base.add_to(c_eval);
  auto* ev_ck = c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  auto* ev_or = c_eval->add_flag("--oracle", ev.oracle, "Use the analytic scene SDF as the field");
  ev_ck->excludes(ev_or);
  c_eval->add_option("--resolution", ev.resolution, "Grid cells per axis")->check(CLI::Range(2, 4096));
  c_eval->add_option("--points", ev.points, "Surface samples per point set")->check(CLI::PositiveNumber);
  c_eval->add_option("--views", ev.count, "Held-out views for the normal metric")->check(CLI::PositiveNumber);

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "Train a sweep over one configuration axis");
  ab.base.add_to(c_ablate);
  c_ablate->add_option("--axis", ab.axis, "Sweep axis")
      ->required()
      ->check(CLI::IsMember({"gamma-b-init", "detach", "fusion-order", "mode"}));
  c_ablate->add_option("--values", ab.values, "Sweep values (default: the axis' standard grid)")->delimiter(',');
  c_ablate->add_option("--views", ab.views, "Held-out views per run for the normal metric")->check(CLI::PositiveNumber);

  DiagnoseArgs dg;
  auto* c_diag = app.add_subcommand("diagnose", "Reflection-direction dispersion along a ray fan");
  dg.base.add_to(c_diag, false);
  c_diag->add_option("--origin", dg.origin, "Fan origin x,y[,z]")->delimiter(',')->expected(2, 3);
  c_diag->add_option("--target", dg.target, "Point the fan is centered on")->delimiter(',')->expected(2, 3);
  c_diag->add_option("--half-angle", dg.half_angle, "Fan half angle in degrees")->check(CLI::Range(0.0, 89.0));
  c_diag->add_option("--rays", dg.rays, "Rays in the fan")->check(CLI::PositiveNumber);
  c_diag->add_option("--samples", dg.samples, "Samples per ray")->check(CLI::Range(2, 1 << 20));
  c_diag->add_option("--bound", dg.bound, "Radius of the sphere that clips the rays");
  c_diag->add_option("--image-size", dg.image_size, "Width of the PPM figure")->check(CLI::Range(16, 8192));

  auto* c_version = app.add_subcommand("version", "Print the version");

  std::vector<const char*> argv{"dirsurf"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (c_gen->parsed()) return cmd_generate(gen, out);
    if (c_train->parsed()) return cmd_train(tr, out);
    if (c_render->parsed()) return cmd_render(rd, out);
    if (c_extract->parsed()) {
      if (!ex.oracle && ex.checkpoint.empty()) throw ConfigError("checkpoint", "give --checkpoint or --oracle");
      return cmd_extract(ex, out);
    }
    if (c_eval->parsed()) {
      if (!ev.oracle && ev.checkpoint.empty()) throw ConfigError("checkpoint", "give --checkpoint or --oracle");
      return cmd_eval(ev, out);
    }
    if (c_ablate->parsed()) return cmd_ablate(ab, out);
    if (c_diag->parsed()) return cmd_diagnose(dg, out);
    if (c_version->parsed()) {
      out << "dirsurf " << kVersion << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DomainError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitConfig;
}

}  // namespace dirsurf::app
