#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "shapesel/binary_io.hpp"
#include "shapesel/errors.hpp"
#include "shapesel/mesh.hpp"
#include "shapesel/random.hpp"

namespace shapesel {

struct PointCloud {
  std::vector<Vec3> points;
};

/// Area-uniform surface samples: a triangle is drawn with probability
/// proportional to its area, then a uniform point inside it.
inline PointCloud sample_surface_points(const TriMesh& m, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("point count must be >= 1");
  m.validate();
  std::vector<double> cumulative(m.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    total += 0.5 * (m.corner(t, 1) - m.corner(t, 0)).cross(m.corner(t, 2) - m.corner(t, 0)).norm();
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw DegenerateMesh("total surface area is zero");

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pick = uniform(rng, 0.0, total);
    std::size_t t = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    t = std::min(t, m.triangles.size() - 1);
    double a = uniform(rng), b = uniform(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    cloud.points.push_back(m.corner(t, 0) + a * (m.corner(t, 1) - m.corner(t, 0)) + b * (m.corner(t, 2) - m.corner(t, 0)));
  }
  return cloud;
}

// Point-cloud file: u32 count, then count little-endian f32 triples.

inline void write_point_cloud(std::ostream& out, const PointCloud& c) {
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.points.size()));
  for (const auto& p : c.points)
    for (int k = 0; k < 3; ++k) detail::put_le<float>(out, static_cast<float>(p(k)));
}

inline PointCloud read_point_cloud(std::istream& in) {
  PointCloud c;
  const auto n = detail::get_le<std::uint32_t>(in);
  c.points.resize(n);
  for (auto& p : c.points)
    for (int k = 0; k < 3; ++k) p(k) = detail::get_le<float>(in);
  return c;
}

inline void write_point_cloud_file(const std::string& path, const PointCloud& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_point_cloud(out, c);
}

inline PointCloud read_point_cloud_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_point_cloud(in);
}

inline void quantize_to_float(PointCloud& c) {
  for (auto& p : c.points) p = p.cast<float>().cast<double>();
}

}  // namespace shapesel
