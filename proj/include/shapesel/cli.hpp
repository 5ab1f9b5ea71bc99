#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "shapesel/shapesel.hpp"

namespace shapesel::cli {

namespace fs = std::filesystem;

/// Raised for malformed command lines or configuration (exit code 1).
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage: " + what) {}
};

/// Every tunable of the pipeline. A JSON config file sets these; command-line
/// flags override the file.
struct Config {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  DatabaseOptions database;
  int scene_count = 10;
  int scene_objects = 3;
  SceneGenOptions scenes;
  OptimConfig optim;
  double anchor_weight = 0.01;
  double perturb_rot_deg = 10.0;
  double perturb_trans = 0.1;
  double perturb_scale_frac = 0.1;
  double tau = 1e-2;
  SigmaRule sigma;
  int iou_resolution = 128;
  int miv_resolution = 64;
  int box_resolution = 128;
  double iou_threshold = 0.5;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw UsageError("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
}

template <typename T>
void read_if(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError("config: field '" + where + key + "' has the wrong type");
  }
}

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read_if;
  Config c;
  check_keys(j, "", {"seed", "threads", "database", "scenes", "optim", "weights", "perturb", "detect", "eval"});
  read_if(j, "seed", c.seed, "");
  read_if(j, "threads", c.threads, "");
  if (j.contains("database")) {
    const auto& d = j.at("database");
    check_keys(d, "database", {"k_per_class", "sdf_resolution", "points_per_shape", "normalization"});
    read_if(d, "k_per_class", c.database.k_per_class, "database.");
    read_if(d, "sdf_resolution", c.database.sdf_resolution, "database.");
    read_if(d, "points_per_shape", c.database.points_per_shape, "database.");
    read_if(d, "normalization", c.database.normalization, "database.");
  }
  if (j.contains("scenes")) {
    const auto& s = j.at("scenes");
    check_keys(s, "scenes", {"count", "objects", "scale_min", "scale_max", "xy_extent", "max_attempts"});
    read_if(s, "count", c.scene_count, "scenes.");
    read_if(s, "objects", c.scene_objects, "scenes.");
    read_if(s, "scale_min", c.scenes.scale_min, "scenes.");
    read_if(s, "scale_max", c.scenes.scale_max, "scenes.");
    read_if(s, "max_attempts", c.scenes.max_attempts, "scenes.");
    if (s.contains("xy_extent")) {
      double e = 1.5;
      read_if(s, "xy_extent", e, "scenes.");
      c.scenes.xy_min.setConstant(-e);
      c.scenes.xy_max.setConstant(e);
    }
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    check_keys(o, "optim", {"iterations", "lr", "warmup", "anchor_weight", "tolerance"});
    read_if(o, "iterations", c.optim.iterations, "optim.");
    read_if(o, "lr", c.optim.lr, "optim.");
    read_if(o, "warmup", c.optim.warmup, "optim.");
    read_if(o, "anchor_weight", c.anchor_weight, "optim.");
    read_if(o, "tolerance", c.optim.tolerance, "optim.");
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    check_keys(w, "weights", {"rt", "s", "z", "coll"});
    read_if(w, "rt", c.optim.weights.rt, "weights.");
    read_if(w, "s", c.optim.weights.s, "weights.");
    read_if(w, "z", c.optim.weights.z, "weights.");
    read_if(w, "coll", c.optim.weights.coll, "weights.");
  }
  if (j.contains("perturb")) {
    const auto& p = j.at("perturb");
    check_keys(p, "perturb", {"rot_deg", "trans", "scale_frac"});
    read_if(p, "rot_deg", c.perturb_rot_deg, "perturb.");
    read_if(p, "trans", c.perturb_trans, "perturb.");
    read_if(p, "scale_frac", c.perturb_scale_frac, "perturb.");
  }
  if (j.contains("detect")) {
    const auto& d = j.at("detect");
    check_keys(d, "detect", {"tau", "stride", "box_fraction", "min_sigma"});
    read_if(d, "tau", c.tau, "detect.");
    read_if(d, "stride", c.sigma.stride, "detect.");
    read_if(d, "box_fraction", c.sigma.box_fraction, "detect.");
    read_if(d, "min_sigma", c.sigma.min_sigma, "detect.");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval", {"iou_resolution", "miv_resolution", "box_resolution", "iou_threshold"});
    read_if(e, "iou_resolution", c.iou_resolution, "eval.");
    read_if(e, "miv_resolution", c.miv_resolution, "eval.");
    read_if(e, "box_resolution", c.box_resolution, "eval.");
    read_if(e, "iou_threshold", c.iou_threshold, "eval.");
  }
  return c;
}

inline void validate(const Config& c) {
  const LossWeights& w = c.optim.weights;
  if (w.rt < 0 || w.s < 0 || w.z < 0 || w.coll < 0) throw UsageError("loss weights must be non-negative");
  if (!(c.optim.lr > 0.0) || c.optim.iterations < 0) throw UsageError("lr must be positive and iterations >= 0");
  if (c.database.k_per_class < 1) throw UsageError("k_per_class must be >= 1");
  if (c.database.sdf_resolution < 6) throw UsageError("sdf_resolution must be >= 6");
  if (c.database.points_per_shape < 1) throw UsageError("points_per_shape must be >= 1");
  if (c.tau < 0.0 || c.tau > 1.0) throw UsageError("tau must lie in [0, 1]");
  if (c.anchor_weight < 0.0) throw UsageError("anchor_weight must be non-negative");
  if (c.iou_resolution < 1 || c.miv_resolution < 1 || c.box_resolution < 1) throw UsageError("resolutions must be >= 1");
}

namespace detail {

inline std::vector<fs::path> scene_files(const fs::path& p) {
  if (fs::is_regular_file(p)) return {p};
  if (!fs::is_directory(p)) throw FormatError(p.string() + ": no such file or directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_trace(const fs::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_trace_csv(out, trace);
}

inline void check_scene_against_db(const Scene& s, const ShapeDatabase& db, const std::string& name) {
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    if (o.exemplar < 0 || o.exemplar >= db.size())
      throw FormatError(name + ": objects[" + std::to_string(i) + "].exemplar out of range");
    if (db.class_names[db.entry(o.exemplar).class_id] != o.class_name)
      throw FormatError(name + ": objects[" + std::to_string(i) + "].class does not match the exemplar's class");
  }
}

inline Scene load_scene(const fs::path& path, const ShapeDatabase& db) {
  Scene s = read_scene_file(path.string());
  check_scene_against_db(s, db, path.string());
  return s;
}

inline nlohmann::json iou_report_json(const IoUReport& r) {
  nlohmann::json j;
  j["mean"] = r.mean;
  j["global"] = r.global;
  if (r.relative_mean) j["relative_mean"] = *r.relative_mean;
  if (r.relative_global) j["relative_global"] = *r.relative_global;
  j["classes"] = nlohmann::json::object();
  for (const auto& c : r.classes) {
    nlohmann::json jc;
    jc["iou"] = c.iou ? nlohmann::json(*c.iou) : nlohmann::json(nullptr);
    jc["relative"] = c.relative ? nlohmann::json(*c.relative) : nlohmann::json(nullptr);
    j["classes"][c.name] = jc;
  }
  return j;
}

inline std::string fmt(std::optional<double> v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v;
  return s.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_toy_meshes(const fs::path& out, int families, int variants) {
  const ToyShapeSet set = toy_shape_set(families, variants);
  std::map<int, int> counter;
  for (const auto& s : set.shapes) {
    const fs::path dir = out / set.class_names[s.class_id];
    fs::create_directories(dir);
    std::ostringstream name;
    name << std::setw(2) << std::setfill('0') << counter[s.class_id]++ << ".obj";
    write_obj_file((dir / name.str()).string(), s.mesh);
  }
}

inline void cmd_build_db(const Config& cfg, const fs::path& meshes, const fs::path& out,
                         const std::optional<fs::path>& pre_rotation, std::ostream& log) {
  if (!fs::is_directory(meshes)) throw FormatError(meshes.string() + ": not a directory");
  std::map<std::string, Mat3> rotations;
  if (pre_rotation) {
    std::ifstream in(*pre_rotation);
    if (!in) throw FormatError("cannot open " + pre_rotation->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      for (const auto& [key, value] : j.items()) {
        const auto v = value.get<std::vector<double>>();
        if (v.size() != 9) throw FormatError(pre_rotation->string() + ": field '" + key + "' needs 9 numbers");
        Mat3 m;
        for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = v[k];
        if (!Rotation::is_rotation(m, 1e-6)) throw FormatError(pre_rotation->string() + ": field '" + key + "' is not a rotation");
        rotations[key] = m;
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(pre_rotation->string() + ": " + e.what());
    }
  }

  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(meshes))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw FormatError(meshes.string() + ": expected one subdirectory of OBJ files per class");

  std::vector<LabeledMesh> shapes;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(meshes / classes[c]))
      if (e.is_regular_file() && e.path().extension() == ".obj") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      TriMesh m = read_obj_file(f.string());
      const std::string rel = fs::relative(f, meshes).generic_string();
      if (auto it = rotations.find(rel); it != rotations.end())
        for (auto& v : m.vertices) v = it->second * v;
      try {
        shapes.push_back({static_cast<int>(c), canonicalize_mesh(m)});
      } catch (const Error& e) {
        throw FormatError(f.string() + ": " + e.what());
      }
    }
  }
  DatabaseOptions opt = cfg.database;
  opt.seed = cfg.seed;
  const ShapeDatabase db = build_database(shapes, classes, opt);
  save_database(db, out);
  log << "built database with " << db.size() << " exemplars (" << db.class_count() << " classes x " << db.k_per_class
      << ") from " << shapes.size() << " meshes\n";
}

inline void cmd_gen_scenes(const Config& cfg, const fs::path& db_dir, const fs::path& out, std::ostream& log) {
  const ShapeDatabase db = load_database(db_dir);
  fs::create_directories(out);
  for (int i = 0; i < cfg.scene_count; ++i) {
    const Scene s = generate_scene(db, cfg.scene_objects, mix_seed(cfg.seed, static_cast<std::uint64_t>(i)), cfg.scenes);
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i << ".json";
    write_scene_file((out / name.str()).string(), s);
  }
  log << "wrote " << cfg.scene_count << " scenes to " << out.string() << '\n';
}

inline void cmd_labels(const fs::path& db_dir, const std::optional<fs::path>& scene_path, const std::optional<fs::path>& mesh_path,
                       const std::string& class_name, const fs::path& out) {
  const ShapeDatabase db = load_database(db_dir);
  nlohmann::json j;
  j["objects"] = nlohmann::json::array();
  auto emit = [&](const std::string& cls, const SdfGrid& phi) {
    const int cid = db.class_id(cls);
    const Eigen::VectorXd soft = soft_label(db, phi);
    j["objects"].push_back({{"class", cls},
                            {"hard", assign_exemplar(db, phi, cid)},
                            {"soft", std::vector<double>(soft.data(), soft.data() + soft.size())}});
  };
  if (scene_path) {
    const Scene s = detail::load_scene(*scene_path, db);
    for (const auto& o : s.objects) emit(o.class_name, db.entry(o.exemplar).sdf);
  } else if (mesh_path) {
    if (class_name.empty()) throw UsageError("labels --mesh requires --class");
    SdfGrid phi = mesh_to_sdf(canonicalize_mesh(read_obj_file(mesh_path->string())), db.sdf_resolution);
    quantize_to_float(phi);
    emit(class_name, phi);
  } else {
    throw UsageError("labels needs --scene or --mesh");
  }
  detail::write_json(out, j);
}

inline void cmd_fit_pose(const Config& cfg, const fs::path& db_dir, const fs::path& target_path,
                         const std::optional<fs::path>& init_path, const fs::path& out, const std::optional<fs::path>& trace,
                         std::ostream& log) {
  const ShapeDatabase db = load_database(db_dir);
  const Scene target = detail::load_scene(target_path, db);
  Scene init = target;
  if (init_path) {
    init = detail::load_scene(*init_path, db);
    if (init.objects.size() != target.objects.size()) throw FormatError(init_path->string() + ": object count differs from target");
  } else {
    for (std::size_t i = 0; i < init.objects.size(); ++i)
      init.objects[i].pose = perturb_pose(target.objects[i].pose, cfg.perturb_rot_deg, cfg.perturb_trans,
                                          cfg.perturb_scale_frac, mix_seed(cfg.seed, i));
  }
  OptimConfig oc = cfg.optim;
  oc.seed = cfg.seed;
  const OptimResult r = fit_poses(init, db, world_targets(target, db), oc);
  write_scene_file(out.string(), r.scene);
  if (trace) detail::write_trace(*trace, r.trace);
  log << "fit-pose: objective " << r.trace.front().total << " -> " << r.trace.back().total << " in "
      << r.trace.size() - 1 << " iterations\n";
}

inline void cmd_resolve(const Config& cfg, const fs::path& db_dir, const fs::path& scene_path, const fs::path& out,
                        const std::optional<fs::path>& trace, std::ostream& log) {
  const ShapeDatabase db = load_database(db_dir);
  const Scene s = detail::load_scene(scene_path, db);
  OptimConfig oc = cfg.optim;
  oc.seed = cfg.seed;
  const OptimResult r = resolve_collisions(s, db, oc, cfg.anchor_weight);
  write_scene_file(out.string(), r.scene);
  if (trace) detail::write_trace(*trace, r.trace);
  log << "resolve: collision loss " << r.trace.front().coll << " -> " << r.trace.back().coll << '\n';
}

inline void cmd_evaluate(const Config& cfg, const fs::path& db_dir, const std::string& metric, const fs::path& pred,
                         const std::optional<fs::path>& gt, const std::optional<fs::path>& oracle,
                         const std::optional<fs::path>& out, std::ostream& text) {
  const ShapeDatabase db = load_database(db_dir);
  const auto pred_files = detail::scene_files(pred);
  auto paired = [&](const std::optional<fs::path>& other, const char* flag) {
    if (!other) throw UsageError(std::string("metric '") + metric + "' requires " + flag);
    std::vector<fs::path> files = detail::scene_files(*other);
    if (fs::is_regular_file(*other) && pred_files.size() == 1) return files;
    std::vector<fs::path> matched;
    for (const auto& p : pred_files) {
      const fs::path q = *other / p.filename();
      if (!fs::exists(q)) throw FormatError(q.string() + ": missing counterpart of " + p.string());
      matched.push_back(q);
    }
    return matched;
  };
  nlohmann::json report;
  report["metric"] = metric;
  std::ostringstream table;

  if (metric == "iou") {
    const auto gt_files = paired(gt, "--gt");
    const auto oracle_files = oracle ? paired(oracle, "--oracle") : std::vector<fs::path>{};
    report["scenes"] = nlohmann::json::array();
    std::set<std::string> names;
    std::vector<IoUReport> reports;
    for (std::size_t i = 0; i < pred_files.size(); ++i) {
      const Scene p = detail::load_scene(pred_files[i], db);
      const Scene g = detail::load_scene(gt_files[i], db);
      IoUReport r = oracle ? relative_iou(p, g, detail::load_scene(oracle_files[i], db), db, cfg.iou_resolution)
                           : voxel_scene_iou(p, g, db, cfg.iou_resolution);
      nlohmann::json js = detail::iou_report_json(r);
      js["file"] = pred_files[i].filename().string();
      report["scenes"].push_back(js);
      for (const auto& c : r.classes) names.insert(c.name);
      reports.push_back(std::move(r));
    }
    // Dataset summary: per-class averages over scenes where the class is defined.
    auto average = [&](auto getter) -> std::optional<double> {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : reports)
        if (auto v = getter(r)) {
          sum += *v;
          ++n;
        }
      return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
    };
    nlohmann::json summary;
    table << std::left << std::setw(10) << "";
    for (const auto& n : names) table << std::setw(10) << n;
    table << std::setw(10) << "mean" << std::setw(10) << "global" << '\n';
    auto row = [&](const std::string& label, bool relative) {
      table << std::left << std::setw(10) << label;
      for (const auto& n : names) {
        const auto v = average([&](const IoUReport& r) -> std::optional<double> {
          for (const auto& c : r.classes)
            if (c.name == n) return relative ? c.relative : c.iou;
          return std::nullopt;
        });
        summary[relative ? "relative" : "absolute"][n] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        table << std::setw(10) << detail::fmt(v);
      }
      const auto mean = average([&](const IoUReport& r) { return relative ? r.relative_mean : std::optional<double>(r.mean); });
      const auto global =
          average([&](const IoUReport& r) { return relative ? r.relative_global : std::optional<double>(r.global); });
      summary[relative ? "relative" : "absolute"]["mean"] = mean ? nlohmann::json(*mean) : nlohmann::json(nullptr);
      summary[relative ? "relative" : "absolute"]["global"] = global ? nlohmann::json(*global) : nlohmann::json(nullptr);
      table << std::setw(10) << detail::fmt(mean) << std::setw(10) << detail::fmt(global) << '\n';
    };
    row("Abs. IoU", false);
    if (oracle) row("Rel. IoU", true);
    report["summary"] = summary;
  } else if (metric == "map") {
    const auto gt_files = paired(gt, "--gt");
    std::vector<ScoredBox> preds;
    std::vector<GroundTruthBox> gts;
    for (std::size_t i = 0; i < pred_files.size(); ++i) {
      const Scene p = detail::load_scene(pred_files[i], db);
      const Scene g = detail::load_scene(gt_files[i], db);
      for (const auto& o : p.objects) preds.push_back({static_cast<int>(i), o.class_name, o.score.value_or(1.0), o.pose});
      for (const auto& o : g.objects) gts.push_back({static_cast<int>(i), o.class_name, o.pose});
    }
    const MapReport m = map3d(preds, gts, cfg.iou_threshold, cfg.box_resolution);
    report["threshold"] = cfg.iou_threshold;
    report["ap"] = m.ap;
    report["map"] = m.mean;
    table << "mAP@" << cfg.iou_threshold << " = " << detail::fmt(m.mean) << '\n';
    for (const auto& [k, v] : m.ap) table << "  " << std::left << std::setw(12) << k << detail::fmt(v) << '\n';
  } else if (metric == "miv") {
    report["scenes"] = nlohmann::json::array();
    double miv_sum = 0.0;
    int collisions = 0;
    for (const auto& f : pred_files) {
      const CollisionReport c = miv_and_collisions(detail::load_scene(f, db), db, cfg.miv_resolution);
      report["scenes"].push_back(
          {{"file", f.filename().string()}, {"miv", c.miv}, {"collisions", c.count}, {"total_volume", c.total_volume}});
      miv_sum += c.miv;
      collisions += c.count;
    }
    report["mean_miv"] = pred_files.empty() ? 0.0 : miv_sum / pred_files.size();
    report["collisions"] = collisions;
    table << "mIV " << report["mean_miv"].get<double>() << "  collisions " << collisions << '\n';
  } else {
    throw UsageError("unknown metric '" + metric + "' (expected iou, map or miv)");
  }
  if (out) detail::write_json(*out, report);
  text << table.str();
}

inline void cmd_export(const Config& cfg, const fs::path& db_dir, const fs::path& scene_path, const std::string& format,
                       const fs::path& out, int resolution) {
  const ShapeDatabase db = load_database(db_dir);
  const Scene s = detail::load_scene(scene_path, db);
  auto merged = [&] {
    TriMesh all;
    for (const auto& o : s.objects) {
      const TriMesh m = transformed(db.entry(o.exemplar).mesh, o.pose);
      const int base = static_cast<int>(all.vertices.size());
      all.vertices.insert(all.vertices.end(), m.vertices.begin(), m.vertices.end());
      for (const auto& t : m.triangles) all.triangles.push_back(t + Eigen::Vector3i::Constant(base));
    }
    return all;
  };
  if (format == "obj") {
    if (s.objects.empty()) throw FormatError(scene_path.string() + ": scene has no objects");
    write_obj_file(out.string(), merged());
  } else if (format == "ply") {
    if (s.objects.empty()) throw FormatError(scene_path.string() + ": scene has no objects");
    std::ofstream f(out, std::ios::binary);
    if (!f) throw FormatError("cannot write " + out.string());
    write_ply(f, merged());
  } else if (format == "points") {
    PointCloud c;
    for (const auto& t : world_targets(s, db)) c.points.insert(c.points.end(), t.points.begin(), t.points.end());
    write_point_cloud_file(out.string(), c);
  } else if (format == "occupancy") {
    const Eigen::AlignedBox3d box = scene_bounds(s, db);
    if (box.isEmpty()) throw FormatError(scene_path.string() + ": scene has no objects");
    const GridSpec g = GridSpec::covering(box, resolution > 0 ? resolution : cfg.iou_resolution);
    OccupancyGrid all{g, std::vector<std::uint8_t>(g.size(), 0)};
    for (const auto& o : s.objects) {
      const OccupancyGrid occ = voxelize_occupancy(db.entry(o.exemplar).mesh, o.pose, g);
      for (std::size_t i = 0; i < occ.cells.size(); ++i) all.cells[i] |= occ.cells[i];
    }
    write_sdfg_file(out.string(), occupancy_as_grid(all));
  } else {
    throw UsageError("unknown export format '" + format + "' (expected obj, ply, points or occupancy)");
  }
}

// ---------------------------------------------------------------------------

/// Entry point. Exit codes: 0 success, 1 usage error, 2 data error.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  // The config file supplies defaults, so it is read before flags are bound.
  Config cfg;
  try {
    for (int i = 1; i + 1 < argc; ++i) {
      if (std::string(argv[i]) == "--config") {
        std::ifstream in(argv[i + 1]);
        if (!in) throw UsageError(std::string("cannot open config ") + argv[i + 1]);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw UsageError(std::string(argv[i + 1]) + ": " + e.what());
        }
        cfg = config_from_json(j);
      }
    }
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return 1;
  }

  CLI::App app{"shapesel: exemplar-based multi-object scene reconstruction toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override it");
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--threads", cfg.threads, "worker threads for voxel loops (0 = all cores)");

  std::string meshes, out_path, db_dir, scene, target, init, trace, mesh, class_name, metric = "iou", pred, gt, oracle,
      format = "obj", pre_rotation;
  std::vector<std::string> freeze;
  int families = 3, variants = 2, export_res = 0;

  auto* toy = app.add_subcommand("toy-meshes", "write the parametric toy mesh set");
  toy->add_option("--out", out_path, "output directory")->required();
  toy->add_option("--families", families, "shape families per class");
  toy->add_option("--variants", variants, "jittered variants per family");

  auto* build = app.add_subcommand("build-db", "cluster canonical meshes into an exemplar database");
  build->add_option("--meshes", meshes, "directory with one subdirectory of OBJ files per class")->required();
  build->add_option("--out", out_path, "database directory")->required();
  build->add_option("--k", cfg.database.k_per_class, "exemplars per class");
  build->add_option("--res", cfg.database.sdf_resolution, "SDF resolution");
  build->add_option("--points", cfg.database.points_per_shape, "surface samples per exemplar");
  build->add_option("--normalization", cfg.database.normalization, "soft-label SDF normalization (0 = sqrt(voxels))");
  build->add_option("--pre-rotation", pre_rotation, "JSON map: mesh path relative to --meshes -> 9 row-major numbers");

  auto* gen = app.add_subcommand("gen-scenes", "generate collision-free synthetic scenes");
  gen->add_option("--db", db_dir, "database directory")->required();
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--count", cfg.scene_count, "number of scenes");
  gen->add_option("--objects", cfg.scene_objects, "objects per scene");

  auto* labels = app.add_subcommand("labels", "hard and soft selection labels");
  labels->add_option("--db", db_dir, "database directory")->required();
  labels->add_option("--scene", scene, "scene whose objects are labeled");
  labels->add_option("--mesh", mesh, "single OBJ mesh to label");
  labels->add_option("--class", class_name, "class of --mesh");
  labels->add_option("--out", out_path, "output JSON")->required();

  auto add_optim_flags = [&](CLI::App* c) {
    c->add_option("--iters", cfg.optim.iterations, "iteration budget");
    c->add_option("--lr", cfg.optim.lr, "Adam step size");
    c->add_option("--warmup", cfg.optim.warmup, "iterations with the collision weight forced to 0");
    c->add_option("--freeze", freeze, "parameter groups to hold fixed")->check(CLI::IsMember({"rot", "scale", "trans"}));
    c->add_option("--trace", trace, "per-iteration CSV trace");
  };
  auto* fit = app.add_subcommand("fit-pose", "recover 9-DoF poses from point targets");
  fit->add_option("--db", db_dir, "database directory")->required();
  fit->add_option("--target", target, "ground-truth scene providing the point targets")->required();
  fit->add_option("--init", init, "initial scene (default: perturbed target)");
  fit->add_option("--out", out_path, "recovered scene")->required();
  fit->add_option("--rot-deg", cfg.perturb_rot_deg, "perturbation rotation (degrees)");
  fit->add_option("--trans", cfg.perturb_trans, "perturbation translation norm bound");
  fit->add_option("--scale-frac", cfg.perturb_scale_frac, "perturbation relative scale bound");
  add_optim_flags(fit);

  auto* resolve = app.add_subcommand("resolve", "push interpenetrating objects apart");
  resolve->add_option("--db", db_dir, "database directory")->required();
  resolve->add_option("--scene", scene, "input scene")->required();
  resolve->add_option("--out", out_path, "resolved scene")->required();
  resolve->add_option("--anchor", cfg.anchor_weight, "weight of the pull toward initial translations");
  add_optim_flags(resolve);

  auto* eval = app.add_subcommand("evaluate", "scene metrics");
  eval->add_option("--db", db_dir, "database directory")->required();
  eval->add_option("--pred", pred, "predicted scene file or directory")->required();
  eval->add_option("--gt", gt, "ground-truth scene file or directory");
  eval->add_option("--oracle", oracle, "oracle scenes for relative IoU");
  eval->add_option("--metric", metric, "iou, map or miv")->check(CLI::IsMember({"iou", "map", "miv"}));
  eval->add_option("--res", export_res, "voxel resolution");
  eval->add_option("--thresh", cfg.iou_threshold, "3D IoU threshold for mAP");
  eval->add_option("--out", out_path, "JSON report");

  auto* exp = app.add_subcommand("export", "write a scene as mesh, point cloud or occupancy grid");
  exp->add_option("--db", db_dir, "database directory")->required();
  exp->add_option("--scene", scene, "scene file")->required();
  exp->add_option("--format", format, "obj, ply, points or occupancy")->check(CLI::IsMember({"obj", "ply", "points", "occupancy"}));
  exp->add_option("--out", out_path, "output file")->required();
  exp->add_option("--res", export_res, "occupancy resolution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return 1;
  }

  auto opt_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : std::optional<fs::path>(s); };
  try {
    for (const auto& f : freeze) {
      if (f == "rot") cfg.optim.freeze_rotation = true;
      if (f == "scale") cfg.optim.freeze_scale = true;
      if (f == "trans") cfg.optim.freeze_translation = true;
    }
    if (*resolve && freeze.empty()) cfg.optim.freeze_rotation = cfg.optim.freeze_scale = true;
    if (*eval && export_res > 0) {
      cfg.iou_resolution = export_res;
      cfg.miv_resolution = export_res;
    }
    validate(cfg);
    set_thread_count(cfg.threads);

    if (*toy) cmd_toy_meshes(out_path, families, variants);
    if (*build) cmd_build_db(cfg, meshes, out_path, opt_path(pre_rotation), out);
    if (*gen) cmd_gen_scenes(cfg, db_dir, out_path, out);
    if (*labels) cmd_labels(db_dir, opt_path(scene), opt_path(mesh), class_name, out_path);
    if (*fit) cmd_fit_pose(cfg, db_dir, target, opt_path(init), out_path, opt_path(trace), out);
    if (*resolve) cmd_resolve(cfg, db_dir, scene, out_path, opt_path(trace), out);
    if (*eval) cmd_evaluate(cfg, db_dir, metric, pred, opt_path(gt), opt_path(oracle), opt_path(out_path), out);
    if (*exp) cmd_export(cfg, db_dir, scene, format, out_path, export_res);
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const InvalidArgument& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace shapesel::cli
