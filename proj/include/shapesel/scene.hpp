#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapesel/collision.hpp"
#include "shapesel/errors.hpp"
#include "shapesel/geom.hpp"
#include "shapesel/occupancy.hpp"
#include "shapesel/random.hpp"
#include "shapesel/shape_db.hpp"

namespace shapesel {

struct SceneItem {
  std::string class_name;
  int exemplar = 0;
  Pose9DoF pose;
  std::optional<double> score;  // detection confidence, predictions only
};

struct Scene {
  std::uint64_t seed = 0;
  std::vector<SceneItem> objects;
};

/// World-space bounding box of every posed exemplar mesh.
inline Eigen::AlignedBox3d scene_bounds(const Scene& s, const ShapeDatabase& db) {
  Eigen::AlignedBox3d box;
  for (const auto& o : s.objects) box.extend(transformed(db.entry(o.exemplar).mesh, o.pose).bounds());
  return box;
}

/// Scene objects with their collision caches attached.
inline std::vector<SceneObject> collision_objects(const Scene& s, const ShapeDatabase& db) {
  std::vector<std::shared_ptr<const CollisionShape>> cache(db.size());
  std::vector<SceneObject> out;
  for (const auto& o : s.objects) {
    const ShapeEntry& e = db.entry(o.exemplar);
    if (!cache[o.exemplar]) cache[o.exemplar] = CollisionShape::from_sdf(e.sdf, e.points);
    out.push_back({e.class_id, o.exemplar, o.pose, cache[o.exemplar]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON: { "seed": u64, "objects": [ { "class", "exemplar", "R": [9, row-major], "t": [3], "s": [3] } ] }

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["objects"] = nlohmann::json::array();
  for (const auto& o : s.objects) {
    const Mat3& r = o.pose.r.matrix();
    nlohmann::json jo;
    jo["class"] = o.class_name;
    jo["exemplar"] = static_cast<std::uint32_t>(o.exemplar);
    jo["R"] = {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)};
    jo["t"] = {o.pose.t(0), o.pose.t(1), o.pose.t(2)};
    jo["s"] = {o.pose.s(0), o.pose.s(1), o.pose.s(2)};
    if (o.score) jo["score"] = *o.score;
    j["objects"].push_back(std::move(jo));
  }
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j, const std::string& name = "<scene>") {
  auto fail = [&](const std::string& field, const std::string& why) -> FormatError {
    return FormatError(name + ": field '" + field + "': " + why);
  };
  auto numbers = [&](const nlohmann::json& obj, const char* key, std::size_t count) {
    if (!obj.contains(key)) throw fail(key, "missing");
    const auto& a = obj.at(key);
    if (!a.is_array() || a.size() != count) throw fail(key, "expected " + std::to_string(count) + " numbers");
    std::vector<double> v;
    for (const auto& x : a) {
      if (!x.is_number()) throw fail(key, "non-numeric entry");
      v.push_back(x.get<double>());
    }
    return v;
  };
  Scene s;
  try {
    if (!j.contains("seed") || !j.at("seed").is_number_unsigned()) throw fail("seed", "expected unsigned integer");
    s.seed = j.at("seed").get<std::uint64_t>();
    if (!j.contains("objects") || !j.at("objects").is_array()) throw fail("objects", "expected array");
    for (const auto& jo : j.at("objects")) {
      for (const auto& [key, _] : jo.items())
        if (key != "class" && key != "exemplar" && key != "R" && key != "t" && key != "s" && key != "score")
          throw fail(key, "unknown key");
      SceneItem o;
      if (!jo.contains("class") || !jo.at("class").is_string()) throw fail("class", "expected string");
      o.class_name = jo.at("class").get<std::string>();
      if (!jo.contains("exemplar") || !jo.at("exemplar").is_number_unsigned()) throw fail("exemplar", "expected u32");
      o.exemplar = jo.at("exemplar").get<int>();
      const auto r = numbers(jo, "R", 9);
      const auto t = numbers(jo, "t", 3);
      const auto sc = numbers(jo, "s", 3);
      Mat3 m;
      for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = r[k];
      if (Rotation::is_rotation(m, 1e-9)) {
        o.pose.r = Rotation::from_matrix(m);
      } else if (Rotation::is_rotation(m, 1e-6)) {
        o.pose.r = project_to_so3(RawMatrix{m});
      } else {
        throw fail("R", "not a rotation matrix");
      }
      o.pose.t = Vec3(t[0], t[1], t[2]);
      o.pose.s = Vec3(sc[0], sc[1], sc[2]);
      if ((o.pose.s.array() <= 0.0).any()) throw fail("s", "scales must be positive");
      if (jo.contains("score")) {
        if (!jo.at("score").is_number()) throw fail("score", "expected number");
        o.score = jo.at("score").get<double>();
      }
      s.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": " + e.what());
  }
  return s;
}

inline void write_scene_file(const std::string& path, const Scene& s) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << scene_to_json(s).dump(2) << '\n';
}

inline Scene read_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return scene_from_json(j, path);
}

// ---------------------------------------------------------------------------
// Generation

struct SceneGenOptions {
  Eigen::Vector2d xy_min = Eigen::Vector2d::Constant(-1.5);
  Eigen::Vector2d xy_max = Eigen::Vector2d::Constant(1.5);
  double scale_min = 0.5;
  double scale_max = 1.5;
  int check_resolution = 64;
  int max_attempts = 1000;
  /// Minimum signed distance between surface samples of one object and the
  /// other object's surface.
  double clearance = 0.01;
};

namespace detail {

/// True when the two posed meshes overlap: shared occupied voxels on a grid
/// over their union box, or a surface sample of one lying within `clearance`
/// of (or inside) the other.
inline bool posed_meshes_overlap(const TriMesh& a, const PointCloud& a_pts, const Pose9DoF& pa, const TriMesh& b,
                                 const PointCloud& b_pts, const Pose9DoF& pb, int resolution, double clearance) {
  const TriMesh wa = transformed(a, pa), wb = transformed(b, pb);
  Eigen::AlignedBox3d ba = wa.bounds(), bb = wb.bounds();
  const Vec3 pad = Vec3::Constant(clearance);
  Eigen::AlignedBox3d grown(ba.min() - pad, ba.max() + pad);
  if (!grown.intersects(bb)) return false;
  const GridSpec g = GridSpec::covering(ba.merged(bb), resolution);
  const auto oa = parity_inside(wa, g), ob = parity_inside(wb, g);
  for (std::size_t i = 0; i < oa.inside.size(); ++i)
    if (oa.inside[i] && ob.inside[i]) return true;
  for (const auto& x : a_pts.points)
    if (signed_distance(wb, apply_pose(pa, x)) < clearance) return true;
  for (const auto& x : b_pts.points)
    if (signed_distance(wa, apply_pose(pb, x)) < clearance) return true;
  return false;
}

}  // namespace detail

/// Random collision-free scene of upright exemplars resting on z = 0.
inline Scene generate_scene(const ShapeDatabase& db, int n_objects, std::uint64_t seed, const SceneGenOptions& opt = {}) {
  if (n_objects < 1) throw InvalidArgument("n_objects must be >= 1");
  if (db.entries.empty()) throw InvalidArgument("database is empty");
  Rng rng(seed);
  Scene scene;
  scene.seed = seed;
  std::vector<int> placed_exemplars;
  for (int n = 0; n < n_objects; ++n) {
    const int cls = std::uniform_int_distribution<int>(0, db.class_count() - 1)(rng);
    std::vector<int> candidates;
    for (const auto& e : db.entries)
      if (e.class_id == cls) candidates.push_back(e.exemplar_index);
    const int exemplar = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    const ShapeEntry& entry = db.entry(exemplar);

    bool placed = false;
    for (int attempt = 0; attempt < opt.max_attempts && !placed; ++attempt) {
      Pose9DoF pose;
      pose.r = Rotation::about_axis(Vec3::UnitZ(), uniform(rng, 0.0, 2.0 * std::numbers::pi));
      for (int k = 0; k < 3; ++k) pose.s(k) = std::exp(uniform(rng, std::log(opt.scale_min), std::log(opt.scale_max)));
      pose.t = Vec3(uniform(rng, opt.xy_min.x(), opt.xy_max.x()), uniform(rng, opt.xy_min.y(), opt.xy_max.y()), 0.0);
      double min_z = std::numeric_limits<double>::infinity();
      for (const auto& v : entry.mesh.vertices) min_z = std::min(min_z, apply_pose(pose, v)(2));
      pose.t(2) = -min_z;

      bool clear = true;
      for (std::size_t k = 0; k < scene.objects.size() && clear; ++k) {
        const ShapeEntry& other = db.entry(placed_exemplars[k]);
        clear = !detail::posed_meshes_overlap(entry.mesh, entry.points, pose, other.mesh, other.points,
                                              scene.objects[k].pose, opt.check_resolution, opt.clearance);
      }
      if (clear) {
        scene.objects.push_back({db.class_names[cls], exemplar, pose, std::nullopt});
        placed_exemplars.push_back(exemplar);
        placed = true;
      }
    }
    if (!placed)
      throw PlacementFailure("object " + std::to_string(n) + " could not be placed after " +
                             std::to_string(opt.max_attempts) + " attempts");
  }
  return scene;
}

/// Rotates by exactly `rot_deg` degrees about a random axis (world frame),
/// shifts by a random vector of norm <= trans and multiplies each scale by
/// (1 + u), |u| <= scale_frac.
inline Pose9DoF perturb_pose(const Pose9DoF& p, double rot_deg, double trans, double scale_frac, std::uint64_t seed) {
  if (rot_deg < 0 || trans < 0 || scale_frac < 0) throw InvalidArgument("perturbation magnitudes must be non-negative");
  if (scale_frac >= 1.0) throw InvalidArgument("scale_frac must be < 1 to keep scales positive");
  Rng rng(seed);
  Pose9DoF out = p;
  const Vec3 axis = random_unit_vector(rng);
  out.r = Rotation::about_axis(axis, rot_deg * std::numbers::pi / 180.0) * p.r;
  const Vec3 dir = random_unit_vector(rng);
  out.t = p.t + dir * trans * std::cbrt(uniform(rng));
  for (int k = 0; k < 3; ++k) out.s(k) = p.s(k) * (1.0 + uniform(rng, -scale_frac, scale_frac));
  return out;
}

}  // namespace shapesel
