#pragma once

#include "shapesel/shapesel.hpp"

namespace fixtures {

/// Small database over the toy shape set, built once per process.
inline const shapesel::ShapeDatabase& toy_database() {
  static const shapesel::ShapeDatabase db = [] {
    const auto set = shapesel::toy_shape_set(3, 2);
    shapesel::DatabaseOptions opt;
    opt.k_per_class = 3;
    opt.seed = 1;
    return shapesel::build_database(set.shapes, set.class_names, opt);
  }();
  return db;
}

inline shapesel::Pose9DoF pose(const shapesel::Vec3& axis, double angle, const shapesel::Vec3& t, const shapesel::Vec3& s) {
  return {shapesel::Rotation::about_axis(axis, angle), t, s};
}

}  // namespace fixtures

namespace fixtures {

/// True when every sample of every object lands at least `margin` voxel units
/// away from the cell faces and the boundary of every other object's grid, so
/// the collision loss is smooth in a neighborhood of `params`.
inline bool collision_smooth_at(const std::vector<shapesel::PoseParams>& params,
                                const std::vector<std::shared_ptr<const shapesel::CollisionShape>>& shapes, double margin) {
  using namespace shapesel;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Pose9DoF pi = params[i].to_pose();
    for (std::size_t j = 0; j < params.size(); ++j) {
      if (i == j) continue;
      const AffineMap map = relative_transform(pi, params[j].to_pose());
      const GridSpec& g = shapes[j]->interior.spec;
      for (const Vec3& x : shapes[i]->points.points) {
        const Vec3 u = (map(x) - g.origin) / g.spacing;
        bool inside = true;
        for (int k = 0; k < 3; ++k) {
          if (std::abs(u(k)) < margin || std::abs(u(k) - (g.dims(k) - 1)) < margin) return false;
          inside = inside && u(k) > 0 && u(k) < g.dims(k) - 1;
        }
        if (!inside) continue;
        for (int k = 0; k < 3; ++k)
          if (std::abs(u(k) - std::round(u(k))) < margin) return false;
      }
    }
  }
  return true;
}

}  // namespace fixtures
