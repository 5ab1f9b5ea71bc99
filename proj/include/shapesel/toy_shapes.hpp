#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "shapesel/mesh.hpp"
#include "shapesel/shape_db.hpp"

namespace shapesel {

/// Closed prism: the simple polygon `outline` (xy, counter-clockwise) extruded
/// over z ∈ [-half_height, half_height]. Caps are fanned from `kernel`, a
/// point that sees every outline vertex.
inline TriMesh make_prism(const std::vector<Eigen::Vector2d>& outline, const Eigen::Vector2d& kernel, double half_height) {
  TriMesh m;
  const int n = static_cast<int>(outline.size());
  for (const auto& p : outline) {
    m.vertices.emplace_back(p.x(), p.y(), -half_height);
    m.vertices.emplace_back(p.x(), p.y(), half_height);
  }
  const int bottom = 2 * n, top = 2 * n + 1;
  m.vertices.emplace_back(kernel.x(), kernel.y(), -half_height);
  m.vertices.emplace_back(kernel.x(), kernel.y(), half_height);
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.triangles.emplace_back(2 * i, 2 * j, 2 * j + 1);
    m.triangles.emplace_back(2 * i, 2 * j + 1, 2 * i + 1);
    m.triangles.emplace_back(bottom, 2 * j, 2 * i);
    m.triangles.emplace_back(top, 2 * i + 1, 2 * j + 1);
  }
  return m;
}

/// L-shaped block: unit square with the corner [notch_x, 1] x [notch_y, 1] removed.
inline TriMesh make_l_block(double notch_x, double notch_y, double half_height = 0.5) {
  const std::vector<Eigen::Vector2d> outline = {{0, 0}, {1, 0}, {1, notch_y}, {notch_x, notch_y}, {notch_x, 1}, {0, 1}};
  return make_prism(outline, {notch_x / 2, notch_y / 2}, half_height);
}

/// Closed truncated cone along z.
inline TriMesh make_frustum(double r_bottom, double r_top, double half_height, int segments = 24) {
  TriMesh m;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    m.vertices.emplace_back(r_bottom * std::cos(a), r_bottom * std::sin(a), -half_height);
    m.vertices.emplace_back(r_top * std::cos(a), r_top * std::sin(a), half_height);
  }
  const int bottom = 2 * segments, top = bottom + 1;
  m.vertices.emplace_back(0.0, 0.0, -half_height);
  m.vertices.emplace_back(0.0, 0.0, half_height);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    m.triangles.emplace_back(2 * i, 2 * j, 2 * j + 1);
    m.triangles.emplace_back(2 * i, 2 * j + 1, 2 * i + 1);
    m.triangles.emplace_back(bottom, 2 * j, 2 * i);
    m.triangles.emplace_back(top, 2 * i + 1, 2 * j + 1);
  }
  return m;
}

struct ToyShapeSet {
  std::vector<std::string> class_names;
  std::vector<LabeledMesh> shapes;
};

/// Two parametric classes, canonicalized: "block" (L-shaped prisms with
/// varying notch) and "frustum" (truncated cones with varying taper). Each
/// class has `families` distinct parameter settings and `variants` slightly
/// jittered copies of each.
inline ToyShapeSet toy_shape_set(int families, int variants, double jitter = 0.01) {
  ToyShapeSet set;
  set.class_names = {"block", "frustum"};
  for (int f = 0; f < families; ++f)
    for (int v = 0; v < variants; ++v) {
      const double t = families > 1 ? static_cast<double>(f) / (families - 1) : 0.5;
      const double e = jitter * v;
      set.shapes.push_back({0, canonicalize_mesh(make_l_block(0.3 + 0.5 * t + e, 0.8 - 0.5 * t + e))});
    }
  for (int f = 0; f < families; ++f)
    for (int v = 0; v < variants; ++v) {
      const double t = families > 1 ? static_cast<double>(f) / (families - 1) : 0.5;
      const double e = jitter * v;
      set.shapes.push_back({1, canonicalize_mesh(make_frustum(0.5, 0.5 - 0.4 * t + e, 0.5))});
    }
  return set;
}

}  // namespace shapesel
