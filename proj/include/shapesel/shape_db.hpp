#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "shapesel/errors.hpp"
#include "shapesel/mesh.hpp"
#include "shapesel/random.hpp"
#include "shapesel/sampling.hpp"
#include "shapesel/sdf.hpp"

namespace shapesel {

// ---------------------------------------------------------------------------
// k-means++

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Eigen::VectorXd> centroids;
  std::vector<double> distortion;  // after every Lloyd iteration
  int iterations = 0;
};

inline int nearest_centroid(const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = (x - centroids[c]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

/// D² seeding followed by Lloyd iterations until the assignment is a fixpoint
/// or `max_iters` is reached. Empty clusters are re-seeded with the point
/// farthest from its current centroid.
inline KMeansResult kmeans_pp(const std::vector<Eigen::VectorXd>& data, int k, std::uint64_t seed, int max_iters = 100) {
  const int n = static_cast<int>(data.size());
  if (k < 1 || k > n) throw InvalidArgument("k-means needs 1 <= k <= number of points");
  Rng rng(seed);
  KMeansResult res;

  res.centroids.push_back(data[std::uniform_int_distribution<int>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) d2[i] = (data[i] - res.centroids[0]).squaredNorm();
  while (static_cast<int>(res.centroids.size()) < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    int pick = 0;
    if (total > 0.0) {
      const double r = uniform(rng, 0.0, total);
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<int>(0, n - 1)(rng);
    }
    res.centroids.push_back(data[pick]);
    for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], (data[i] - data[pick]).squaredNorm());
  }

  res.assignment.assign(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest_centroid(data[i], res.centroids);
      if (c != res.assignment[i]) {
        res.assignment[i] = c;
        changed = true;
      }
    }
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) ++counts[res.assignment[i]];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[res.assignment[i]] <= 1) continue;
        const double d = (data[i] - res.centroids[res.assignment[i]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[res.assignment[far]];
      res.assignment[far] = c;
      counts[c] = 1;
      changed = true;
    }
    if (!changed) break;
    for (int c = 0; c < k; ++c) res.centroids[c].setZero(data[0].size());
    for (int i = 0; i < n; ++i) res.centroids[res.assignment[i]] += data[i];
    for (int c = 0; c < k; ++c) res.centroids[c] /= counts[c];
    double distortion = 0.0;
    for (int i = 0; i < n; ++i) distortion += (data[i] - res.centroids[res.assignment[i]]).squaredNorm();
    res.distortion.push_back(distortion);
    res.iterations = iter + 1;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Database

struct ShapeEntry {
  int class_id = 0;
  int exemplar_index = 0;
  SdfGrid sdf;
  PointCloud points;
  TriMesh mesh;
};

struct ShapeDatabase {
  std::vector<ShapeEntry> entries;
  std::vector<std::string> class_names;
  int k_per_class = 0;
  int sdf_resolution = 32;
  /// Flattened SDFs are divided by this before computing soft-label distances.
  double normalization = 1.0;

  int class_count() const { return static_cast<int>(class_names.size()); }
  int size() const { return static_cast<int>(entries.size()); }
  const ShapeEntry& entry(int exemplar) const {
    if (exemplar < 0 || exemplar >= size()) throw InvalidArgument("exemplar index " + std::to_string(exemplar) + " out of range");
    return entries[exemplar];
  }
  int class_id(const std::string& name) const {
    const auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw UnknownClass("class '" + name + "' not in database");
    return static_cast<int>(it - class_names.begin());
  }
};

struct DatabaseOptions {
  int k_per_class = 50;
  int sdf_resolution = 32;
  int points_per_shape = 1024;
  std::uint64_t seed = 0;
  /// 0 selects sqrt(voxel count), i.e. RMS normalization.
  double normalization = 0.0;
};

struct LabeledMesh {
  int class_id = 0;
  TriMesh mesh;
};

inline Eigen::Map<const Eigen::VectorXd> flatten(const SdfGrid& g) {
  return Eigen::Map<const Eigen::VectorXd>(g.values.data(), static_cast<Eigen::Index>(g.values.size()));
}

/// Clusters each class's SDFs with k-means++ and keeps, per cluster, the
/// member closest to the cluster centroid. `sdfs[i]` is the SDF of `shapes[i]`.
inline ShapeDatabase build_database_from_sdfs(const std::vector<LabeledMesh>& shapes, const std::vector<SdfGrid>& sdfs,
                                              std::vector<std::string> class_names, const DatabaseOptions& opt) {
  if (shapes.size() != sdfs.size()) throw MismatchedLengths("one SDF per shape required");
  ShapeDatabase db;
  db.class_names = std::move(class_names);
  db.k_per_class = opt.k_per_class;
  db.sdf_resolution = opt.sdf_resolution;
  const int classes = db.class_count();
  for (int c = 0; c < classes; ++c) {
    std::vector<int> members;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (shapes[i].class_id == c) members.push_back(static_cast<int>(i));
    if (static_cast<int>(members.size()) < opt.k_per_class)
      throw InsufficientShapes("class '" + db.class_names[c] + "' has " + std::to_string(members.size()) +
                               " shapes, need " + std::to_string(opt.k_per_class));
    std::vector<Eigen::VectorXd> data;
    for (int i : members) data.emplace_back(flatten(sdfs[i]));
    const KMeansResult km = kmeans_pp(data, opt.k_per_class, mix_seed(opt.seed, static_cast<std::uint64_t>(c)));
    for (int cluster = 0; cluster < opt.k_per_class; ++cluster) {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < members.size(); ++m) {
        if (km.assignment[m] != cluster) continue;
        const double d = (data[m] - km.centroids[cluster]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = members[m];
        }
      }
      ShapeEntry e;
      e.class_id = c;
      e.exemplar_index = static_cast<int>(db.entries.size());
      e.sdf = sdfs[best];
      e.mesh = shapes[best].mesh;
      e.points = sample_surface_points(e.mesh, opt.points_per_shape, mix_seed(opt.seed, 1000003ull + e.exemplar_index));
      quantize_to_float(e.points);
      db.entries.push_back(std::move(e));
    }
  }
  const double voxels = db.entries.empty() ? 1.0 : static_cast<double>(db.entries.front().sdf.values.size());
  db.normalization = opt.normalization > 0.0 ? opt.normalization : std::sqrt(voxels);
  return db;
}

/// Canonical SDFs at `resolution`, rounded to float precision.
inline std::vector<SdfGrid> compute_shape_sdfs(const std::vector<LabeledMesh>& shapes, int resolution) {
  std::vector<SdfGrid> out;
  out.reserve(shapes.size());
  for (const auto& s : shapes) {
    out.push_back(mesh_to_sdf(s.mesh, resolution));
    quantize_to_float(out.back());
  }
  return out;
}

inline ShapeDatabase build_database(const std::vector<LabeledMesh>& shapes, std::vector<std::string> class_names,
                                    const DatabaseOptions& opt) {
  return build_database_from_sdfs(shapes, compute_shape_sdfs(shapes, opt.sdf_resolution), std::move(class_names), opt);
}

// ---------------------------------------------------------------------------
// Labels

inline void check_resolution(const ShapeDatabase& db, const SdfGrid& phi) {
  if (db.entries.empty() || phi.values.size() != db.entries.front().sdf.values.size())
    throw InvalidArgument("SDF resolution differs from the database resolution");
}

/// Nearest exemplar of the class in L2 over the flattened SDF; ties go to the
/// lowest index.
inline int assign_exemplar(const ShapeDatabase& db, const SdfGrid& phi, int class_id) {
  if (class_id < 0 || class_id >= db.class_count()) throw UnknownClass("class id " + std::to_string(class_id));
  check_resolution(db, phi);
  const auto x = flatten(phi);
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& e : db.entries) {
    if (e.class_id != class_id) continue;
    const double d = (x - flatten(e.sdf)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = e.exemplar_index;
    }
  }
  if (best < 0) throw UnknownClass("class id " + std::to_string(class_id) + " has no exemplars");
  return best;
}

inline Eigen::VectorXd hard_label(const ShapeDatabase& db, const SdfGrid& phi, int class_id) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(db.size());
  z(assign_exemplar(db, phi, class_id)) = 1.0;
  return z;
}

/// d(k) = max(1 - |φ - φ_k|₂ / normalization, 0) for every exemplar k.
inline Eigen::VectorXd soft_label(const ShapeDatabase& db, const SdfGrid& phi) {
  check_resolution(db, phi);
  const auto x = flatten(phi);
  Eigen::VectorXd d(db.size());
  for (int k = 0; k < db.size(); ++k)
    d(k) = std::max(1.0 - (x - flatten(db.entries[k].sdf)).norm() / db.normalization, 0.0);
  return d;
}

// ---------------------------------------------------------------------------
// On-disk layout:
//   manifest.json, sdf/NNNNN.sdfg, points/NNNNN.pts, meshes/NNNNN.obj

inline void save_database(const ShapeDatabase& db, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "sdf");
  fs::create_directories(dir / "points");
  fs::create_directories(dir / "meshes");
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["k_per_class"] = db.k_per_class;
  manifest["classes"] = db.class_names;
  manifest["normalization"] = db.normalization;
  manifest["normalization_rule"] = "soft label distance = |phi - phi_k|_2 / normalization";
  manifest["sdf_resolution"] = db.sdf_resolution;
  manifest["entries"] = nlohmann::json::array();
  for (const auto& e : db.entries) {
    std::ostringstream stem;
    stem << std::setw(5) << std::setfill('0') << e.exemplar_index;
    const std::string s = stem.str();
    write_sdfg_file((dir / "sdf" / (s + ".sdfg")).string(), e.sdf);
    write_point_cloud_file((dir / "points" / (s + ".pts")).string(), e.points);
    write_obj_file((dir / "meshes" / (s + ".obj")).string(), e.mesh);
    manifest["entries"].push_back({{"exemplar", e.exemplar_index},
                                   {"class", db.class_names[e.class_id]},
                                   {"sdf", "sdf/" + s + ".sdfg"},
                                   {"points", "points/" + s + ".pts"},
                                   {"mesh", "meshes/" + s + ".obj"}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

inline ShapeDatabase load_database(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  auto field = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
    if (!obj.contains(key)) throw FormatError(manifest_path.string() + ": missing field '" + key + "'");
    return obj.at(key);
  };
  ShapeDatabase db;
  try {
    if (field(m, "version").get<int>() != 1) throw FormatError(manifest_path.string() + ": unsupported version");
    db.k_per_class = field(m, "k_per_class").get<int>();
    db.class_names = field(m, "classes").get<std::vector<std::string>>();
    db.normalization = field(m, "normalization").get<double>();
    db.sdf_resolution = field(m, "sdf_resolution").get<int>();
    for (const auto& je : field(m, "entries")) {
      ShapeEntry e;
      e.exemplar_index = field(je, "exemplar").get<int>();
      e.class_id = db.class_id(field(je, "class").get<std::string>());
      e.sdf = read_sdfg_file((dir / field(je, "sdf").get<std::string>()).string());
      e.points = read_point_cloud_file((dir / field(je, "points").get<std::string>()).string());
      e.mesh = read_obj_file((dir / field(je, "mesh").get<std::string>()).string());
      if (e.exemplar_index != static_cast<int>(db.entries.size()))
        throw FormatError(manifest_path.string() + ": exemplar indices must be 0..K-1 in order");
      db.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  } catch (const UnknownClass& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (db.size() != db.k_per_class * db.class_count())
    throw FormatError(manifest_path.string() + ": expected k_per_class entries for every class");
  if (!(db.normalization > 0.0)) throw FormatError(manifest_path.string() + ": normalization must be positive");
  return db;
}

}  // namespace shapesel
