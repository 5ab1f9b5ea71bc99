#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapesel/binary_io.hpp"
#include "shapesel/errors.hpp"
#include "shapesel/geom.hpp"

namespace shapesel {

/// Indexed triangle soup.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;

  void validate() const {
    if (triangles.empty()) throw DegenerateMesh("mesh has no triangles");
    for (const auto& v : vertices)
      if (!v.allFinite()) throw DegenerateMesh("non-finite vertex");
    const int n = static_cast<int>(vertices.size());
    for (const auto& t : triangles)
      for (int k = 0; k < 3; ++k)
        if (t(k) < 0 || t(k) >= n) throw DegenerateMesh("triangle index out of range");
  }

  Vec3 corner(std::size_t tri, int k) const { return vertices[triangles[tri](k)]; }

  Eigen::AlignedBox3d bounds() const {
    Eigen::AlignedBox3d box;
    for (const auto& v : vertices) box.extend(v);
    return box;
  }

  double area() const {
    double a = 0.0;
    for (std::size_t i = 0; i < triangles.size(); ++i)
      a += 0.5 * (corner(i, 1) - corner(i, 0)).cross(corner(i, 2) - corner(i, 0)).norm();
    return a;
  }
};

inline TriMesh transformed(const TriMesh& m, const Pose9DoF& pose) {
  TriMesh out = m;
  for (auto& v : out.vertices) v = apply_pose(pose, v);
  return out;
}

/// Moves the centroid (vertex mean) to the origin, then scales each axis
/// independently so the mesh fits the unit cube [-0.5, 0.5]^3 with the
/// farthest vertex on each axis touching the cube face. Shapes symmetric about
/// their centroid therefore span exactly [-0.5, 0.5]. Orientation is kept.
inline TriMesh canonicalize_mesh(const TriMesh& m) {
  m.validate();
  Vec3 centroid = Vec3::Zero();
  for (const auto& v : m.vertices) centroid += v;
  centroid /= static_cast<double>(m.vertices.size());

  const Vec3 extent = m.bounds().sizes();
  Vec3 reach = Vec3::Zero();
  for (const auto& v : m.vertices) reach = reach.cwiseMax((v - centroid).cwiseAbs());
  for (int k = 0; k < 3; ++k)
    if (extent(k) < 1e-12) throw DegenerateMesh("zero extent along axis " + std::to_string(k));

  TriMesh out = m;
  const Vec3 scale = (2.0 * reach).cwiseInverse();
  for (auto& v : out.vertices) v = (v - centroid).cwiseProduct(scale);
  return out;
}

inline TriMesh make_box(const Vec3& half_extents = Vec3::Constant(0.5), const Vec3& center = Vec3::Zero()) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    const Vec3 sign((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
    m.vertices.push_back(center + sign.cwiseProduct(half_extents));
  }
  // Outward-facing (counter-clockwise seen from outside).
  const int faces[12][3] = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                            {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  for (const auto& f : faces) m.triangles.emplace_back(f[0], f[1], f[2]);
  return m;
}

/// Closed cylinder along z, centered at the origin.
inline TriMesh make_cylinder(double radius, double half_height, int segments = 24) {
  TriMesh m;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), -half_height);
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), half_height);
  }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -half_height);
  const int top = bottom + 1;
  m.vertices.emplace_back(0.0, 0.0, half_height);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.triangles.emplace_back(b0, b1, t1);
    m.triangles.emplace_back(b0, t1, t0);
    m.triangles.emplace_back(bottom, b1, b0);
    m.triangles.emplace_back(top, t0, t1);
  }
  return m;
}

// ---------------------------------------------------------------------------
// OBJ / PLY

/// Reads v/f records of an ASCII OBJ. Polygons are fan-triangulated; negative
/// (relative) indices and v/vt/vn index forms are accepted.
inline TriMesh read_obj(std::istream& in, const std::string& name = "<stream>") {
  TriMesh m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v(0) >> v(1) >> v(2)))
        throw FormatError(name + ":" + std::to_string(line_no) + ": malformed vertex");
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int raw = std::stoi(tok.substr(0, tok.find('/')));
        const int n = static_cast<int>(m.vertices.size());
        const int i = raw > 0 ? raw - 1 : n + raw;
        if (raw == 0 || i < 0 || i >= n)
          throw FormatError(name + ":" + std::to_string(line_no) + ": face index out of range");
        idx.push_back(i);
      }
      if (idx.size() < 3) throw FormatError(name + ":" + std::to_string(line_no) + ": face with < 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.triangles.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
  }
  m.validate();
  return m;
}

inline TriMesh read_obj_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_obj(in, path);
}

inline void write_obj(std::ostream& out, const TriMesh& m) {
  out.precision(17);
  for (const auto& v : m.vertices) out << "v " << v(0) << ' ' << v(1) << ' ' << v(2) << '\n';
  for (const auto& t : m.triangles) out << "f " << t(0) + 1 << ' ' << t(1) + 1 << ' ' << t(2) + 1 << '\n';
}

inline void write_obj_file(const std::string& path, const TriMesh& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  write_obj(out, m);
}

/// Binary little-endian PLY with float x/y/z vertex properties and a face list.
inline void write_ply(std::ostream& out, const TriMesh& m) {
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << m.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << m.triangles.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : m.vertices)
    for (int k = 0; k < 3; ++k) detail::put_le(out, static_cast<float>(v(k)));
  for (const auto& t : m.triangles) {
    detail::put_le<std::uint8_t>(out, 3);
    for (int k = 0; k < 3; ++k) detail::put_le<std::int32_t>(out, t(k));
  }
}

}  // namespace shapesel
