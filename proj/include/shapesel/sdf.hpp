#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shapesel/binary_io.hpp"
#include "shapesel/errors.hpp"
#include "shapesel/geom.hpp"
#include "shapesel/mesh.hpp"
#include "shapesel/parallel.hpp"

namespace shapesel {

/// Regular voxel lattice. `origin` is the center of voxel (0, 0, 0); voxel
/// (i, j, k) has its center at origin + spacing * (i, j, k).
struct GridSpec {
  Eigen::Vector3i dims = Eigen::Vector3i::Constant(1);
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;

  std::size_t size() const {
    return static_cast<std::size_t>(dims(0)) * static_cast<std::size_t>(dims(1)) * static_cast<std::size_t>(dims(2));
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims(0)) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims(1)) * k);
  }
  Vec3 center(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  double voxel_volume() const { return spacing * spacing * spacing; }

  /// Grid of `resolution` voxels along the longest side of `box`, cubic voxels,
  /// voxel centers spanning the box from cell-center to cell-center.
  static GridSpec covering(const Eigen::AlignedBox3d& box, int resolution) {
    if (resolution < 1) throw InvalidArgument("grid resolution must be >= 1");
    GridSpec g;
    const Vec3 size = box.sizes();
    g.spacing = std::max(size.maxCoeff(), 1e-12) / resolution;
    for (int k = 0; k < 3; ++k) g.dims(k) = std::max(1, static_cast<int>(std::ceil(size(k) / g.spacing - 1e-9)));
    g.origin = box.min() + Vec3::Constant(0.5 * g.spacing);
    return g;
  }

  bool operator==(const GridSpec&) const = default;
};

/// Sampled signed distance field: negative inside, positive outside.
struct SdfGrid {
  GridSpec spec;
  std::vector<double> values;

  double at(int i, int j, int k) const { return values[spec.index(i, j, k)]; }
};

struct SdfSample {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();
};

// ---------------------------------------------------------------------------
// Geometry kernels

/// Closest point on triangle (a, b, c) to p, by Voronoi-region classification.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double unsigned_distance(const TriMesh& m, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const Vec3 q = closest_point_on_triangle(p, m.corner(t, 0), m.corner(t, 1), m.corner(t, 2));
    best = std::min(best, (p - q).squaredNorm());
  }
  return std::sqrt(best);
}

namespace detail {

/// Parity ray casting along one axis. Triangles are projected onto the plane
/// spanned by the two other axes; a point on a shared edge or vertex is
/// attributed to exactly one of the adjacent triangles via a half-open
/// direction rule, so watertight meshes give consistent parities.
class AxisRayCaster {
 public:
  AxisRayCaster(const TriMesh& m, int axis) : mesh_(m), axis_(axis), u_((axis + 1) % 3), v_((axis + 2) % 3) {}

  /// Crossing coordinates (along the axis) of the ray through (pu, pv).
  std::vector<double> crossings(double pu, double pv) const {
    std::vector<double> out;
    for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) {
      std::array<Eigen::Vector2d, 3> p;
      std::array<double, 3> depth;
      for (int k = 0; k < 3; ++k) {
        const Vec3& c = mesh_.vertices[mesh_.triangles[t](k)];
        p[k] = Eigen::Vector2d(c(u_), c(v_));
        depth[k] = c(axis_);
      }
      double area = orient(p[0], p[1], p[2]);
      if (area == 0.0) continue;
      if (area < 0.0) {
        std::swap(p[1], p[2]);
        std::swap(depth[1], depth[2]);
        area = -area;
      }
      const Eigen::Vector2d q(pu, pv);
      std::array<double, 3> w;
      bool inside = true;
      for (int k = 0; k < 3 && inside; ++k) {
        const Eigen::Vector2d& a = p[(k + 1) % 3];
        const Eigen::Vector2d& b = p[(k + 2) % 3];
        w[k] = orient(a, b, q);  // weight of vertex k
        if (w[k] < 0.0 || (w[k] == 0.0 && !owns_edge(a, b))) inside = false;
      }
      if (!inside) continue;
      out.push_back((w[0] * depth[0] + w[1] * depth[1] + w[2] * depth[2]) / area);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static double orient(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& q) {
    return (b.x() - a.x()) * (q.y() - a.y()) - (b.y() - a.y()) * (q.x() - a.x());
  }
  static bool owns_edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d d = b - a;
    return d.y() > 0.0 || (d.y() == 0.0 && d.x() < 0.0);
  }

  const TriMesh& mesh_;
  int axis_, u_, v_;
};

struct ParityResult {
  std::vector<std::uint8_t> inside;
  std::size_t disagreements = 0;
};

/// Inside/outside labels of every voxel center, by majority vote of parity
/// rays cast along +x, +y and +z. Only voxels inside the mesh bounding box are
/// tested; the rest are outside.
inline ParityResult parity_inside(const TriMesh& m, const GridSpec& g) {
  ParityResult res;
  res.inside.assign(g.size(), 0);
  const Eigen::AlignedBox3d box = m.bounds();
  Eigen::Vector3i lo, hi;
  for (int k = 0; k < 3; ++k) {
    lo(k) = std::max(0, static_cast<int>(std::floor((box.min()(k) - g.origin(k)) / g.spacing)));
    hi(k) = std::min(g.dims(k) - 1, static_cast<int>(std::ceil((box.max()(k) - g.origin(k)) / g.spacing)));
    if (lo(k) > hi(k)) return res;
  }
  const Eigen::Vector3i ext = hi - lo + Eigen::Vector3i::Ones();
  const std::size_t sub = static_cast<std::size_t>(ext(0)) * ext(1) * ext(2);
  std::vector<std::uint8_t> votes(sub, 0);
  auto sub_index = [&](const Eigen::Vector3i& c) {
    return static_cast<std::size_t>(c(0) - lo(0)) +
           static_cast<std::size_t>(ext(0)) * (static_cast<std::size_t>(c(1) - lo(1)) + static_cast<std::size_t>(ext(1)) * (c(2) - lo(2)));
  };

  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    const AxisRayCaster caster(m, axis);
    const std::size_t columns = static_cast<std::size_t>(ext(u)) * ext(v);
    // Each column writes a disjoint set of voxels; one bit per axis.
    parallel_for(columns, [&](std::size_t col) {
      Eigen::Vector3i c;
      c(u) = lo(u) + static_cast<int>(col % ext(u));
      c(v) = lo(v) + static_cast<int>(col / ext(u));
      const Vec3 base = g.center(c(0), c(1), c(2));
      const std::vector<double> xs = caster.crossings(base(u), base(v));
      std::size_t pos = 0;
      for (c(axis) = lo(axis); c(axis) <= hi(axis); ++c(axis)) {
        const double coord = g.origin(axis) + g.spacing * c(axis);
        while (pos < xs.size() && xs[pos] <= coord) ++pos;
        if ((xs.size() - pos) % 2 == 1) votes[sub_index(c)] |= static_cast<std::uint8_t>(1u << axis);
      }
    });
  }

  Eigen::Vector3i c;
  for (c(2) = lo(2); c(2) <= hi(2); ++c(2))
    for (c(1) = lo(1); c(1) <= hi(1); ++c(1))
      for (c(0) = lo(0); c(0) <= hi(0); ++c(0)) {
        const std::uint8_t bits = votes[sub_index(c)];
        const int count = (bits & 1) + ((bits >> 1) & 1) + ((bits >> 2) & 1);
        if (count != 0 && count != 3) ++res.disagreements;
        res.inside[g.index(c(0), c(1), c(2))] = count >= 2 ? 1 : 0;
      }
  return res;
}

inline void check_parity(const ParityResult& r, const GridSpec& g) {
  if (static_cast<double>(r.disagreements) > 0.01 * static_cast<double>(g.size()))
    throw NonWatertight("parity votes disagree on " + std::to_string(r.disagreements) + " of " +
                        std::to_string(g.size()) + " voxels");
}

}  // namespace detail

/// Signed distance from p to the mesh surface, sign by 3-axis parity vote.
inline double signed_distance(const TriMesh& m, const Vec3& p) {
  int votes = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const std::vector<double> xs = detail::AxisRayCaster(m, axis).crossings(p((axis + 1) % 3), p((axis + 2) % 3));
    const auto above = std::count_if(xs.begin(), xs.end(), [&](double x) { return x > p(axis); });
    votes += static_cast<int>(above % 2);
  }
  const double d = unsigned_distance(m, p);
  return votes >= 2 ? -d : d;
}

/// Canonical SDF lattice: the unit cube [-0.5, 0.5]^3 padded by two voxels on
/// every side, `resolution` voxels per axis.
inline GridSpec canonical_grid(int resolution) {
  if (resolution < 6) throw InvalidArgument("canonical SDF resolution must be >= 6 (two padding voxels per side)");
  GridSpec g;
  g.dims = Eigen::Vector3i::Constant(resolution);
  g.spacing = 1.0 / (resolution - 4);
  g.origin = Vec3::Constant(-0.5 - 1.5 * g.spacing);
  return g;
}

/// Samples the signed distance of `m` at every voxel center of `g`.
inline SdfGrid mesh_to_sdf(const TriMesh& m, const GridSpec& g) {
  m.validate();
  const detail::ParityResult parity = detail::parity_inside(m, g);
  detail::check_parity(parity, g);
  SdfGrid out{g, std::vector<double>(g.size(), 0.0)};
  const std::size_t slices = static_cast<std::size_t>(g.dims(2)) * g.dims(1);
  parallel_for(slices, [&](std::size_t row) {
    const int j = static_cast<int>(row % g.dims(1));
    const int k = static_cast<int>(row / g.dims(1));
    for (int i = 0; i < g.dims(0); ++i) {
      const std::size_t idx = g.index(i, j, k);
      const double d = unsigned_distance(m, g.center(i, j, k));
      out.values[idx] = parity.inside[idx] ? -d : d;
    }
  });
  return out;
}

inline SdfGrid mesh_to_sdf(const TriMesh& m, int resolution) { return mesh_to_sdf(m, canonical_grid(resolution)); }

/// max(-φ, 0): positive inside, zero outside.
inline SdfGrid clamp_interior(const SdfGrid& g) {
  SdfGrid out = g;
  for (auto& v : out.values) v = std::max(-v, 0.0);
  return out;
}

/// Trilinear interpolation and its exact gradient, or nullopt when x lacks
/// the eight surrounding voxel centers.
inline std::optional<SdfSample> try_trilinear_sample(const SdfGrid& g, const Vec3& x) {
  const GridSpec& s = g.spec;
  std::array<int, 3> cell;
  Vec3 frac;
  for (int k = 0; k < 3; ++k) {
    double u = (x(k) - s.origin(k)) / s.spacing;
    // Snap round-off so that voxel centers reproduce stored values exactly.
    if (const double r = std::round(u); std::abs(u - r) < 1e-10) u = r;
    if (!(u >= 0.0 && u <= s.dims(k) - 1) || s.dims(k) < 2) return std::nullopt;
    cell[k] = std::min(static_cast<int>(std::floor(u)), s.dims(k) - 2);
    frac(k) = u - cell[k];
  }
  double c[2][2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) c[dx][dy][dz] = g.at(cell[0] + dx, cell[1] + dy, cell[2] + dz);

  const double fx = frac(0), fy = frac(1), fz = frac(2);
  const double c00 = c[0][0][0] * (1 - fx) + c[1][0][0] * fx;
  const double c10 = c[0][1][0] * (1 - fx) + c[1][1][0] * fx;
  const double c01 = c[0][0][1] * (1 - fx) + c[1][0][1] * fx;
  const double c11 = c[0][1][1] * (1 - fx) + c[1][1][1] * fx;
  const double c0 = c00 * (1 - fy) + c10 * fy;
  const double c1 = c01 * (1 - fy) + c11 * fy;

  SdfSample out;
  out.value = c0 * (1 - fz) + c1 * fz;
  const double dx0 = (c[1][0][0] - c[0][0][0]) * (1 - fy) + (c[1][1][0] - c[0][1][0]) * fy;
  const double dx1 = (c[1][0][1] - c[0][0][1]) * (1 - fy) + (c[1][1][1] - c[0][1][1]) * fy;
  out.gradient(0) = (dx0 * (1 - fz) + dx1 * fz) / s.spacing;
  out.gradient(1) = ((c10 - c00) * (1 - fz) + (c11 - c01) * fz) / s.spacing;
  out.gradient(2) = (c1 - c0) / s.spacing;
  return out;
}

inline SdfSample trilinear_sample(const SdfGrid& g, const Vec3& x) {
  auto s = try_trilinear_sample(g, x);
  if (!s) throw OutOfBounds("sample point lacks eight surrounding voxels");
  return *s;
}

// ---------------------------------------------------------------------------
// SDFG container, version 1:
//   "SDFG" | u32 version | u32 nx, ny, nz | f64 origin[3] | f64 spacing | f32 values (x fastest)

inline void write_sdfg(std::ostream& out, const SdfGrid& g) {
  out.write("SDFG", 4);
  detail::put_le<std::uint32_t>(out, 1);
  for (int k = 0; k < 3; ++k) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.spec.dims(k)));
  for (int k = 0; k < 3; ++k) detail::put_le<double>(out, g.spec.origin(k));
  detail::put_le<double>(out, g.spec.spacing);
  for (double v : g.values) detail::put_le<float>(out, static_cast<float>(v));
}

inline SdfGrid read_sdfg(std::istream& in, const std::string& name = "<stream>") {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "SDFG") throw FormatError(name + ": bad magic");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != 1) throw FormatError(name + ": unsupported SDFG version " + std::to_string(version));
  SdfGrid g;
  for (int k = 0; k < 3; ++k) {
    const auto d = detail::get_le<std::uint32_t>(in);
    if (d == 0 || d > (1u << 16)) throw FormatError(name + ": invalid dims");
    g.spec.dims(k) = static_cast<int>(d);
  }
  for (int k = 0; k < 3; ++k) g.spec.origin(k) = detail::get_le<double>(in);
  g.spec.spacing = detail::get_le<double>(in);
  if (!(g.spec.spacing > 0.0)) throw FormatError(name + ": spacing must be positive");
  g.values.resize(g.spec.size());
  for (auto& v : g.values) v = detail::get_le<float>(in);
  return g;
}

inline void write_sdfg_file(const std::string& path, const SdfGrid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_sdfg(out, g);
}

inline SdfGrid read_sdfg_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_sdfg(in, path);
}

/// Rounds every value to float precision, i.e. the precision of the file format.
inline void quantize_to_float(SdfGrid& g) {
  for (auto& v : g.values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace shapesel
