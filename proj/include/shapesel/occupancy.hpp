#pragma once

#include <cstdint>
#include <vector>

#include "shapesel/geom.hpp"
#include "shapesel/mesh.hpp"
#include "shapesel/sdf.hpp"

namespace shapesel {

/// Boolean voxel grid; one byte per voxel, x fastest.
struct OccupancyGrid {
  GridSpec spec;
  std::vector<std::uint8_t> cells;

  std::size_t count() const {
    std::size_t n = 0;
    for (auto c : cells) n += c;
    return n;
  }
};

/// Marks voxels whose centers lie inside the posed mesh.
inline OccupancyGrid voxelize_occupancy(const TriMesh& m, const Pose9DoF& pose, const GridSpec& spec) {
  m.validate();
  const TriMesh world = transformed(m, pose);
  detail::ParityResult parity = detail::parity_inside(world, spec);
  detail::check_parity(parity, spec);
  return OccupancyGrid{spec, std::move(parity.inside)};
}

inline std::size_t intersection_count(const OccupancyGrid& a, const OccupancyGrid& b) {
  if (!(a.spec == b.spec)) throw InvalidArgument("occupancy grids differ in layout");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) n += (a.cells[i] & b.cells[i]);
  return n;
}

/// Occupancy as an SDFG grid holding 1.0 inside and 0.0 outside.
inline SdfGrid occupancy_as_grid(const OccupancyGrid& o) {
  SdfGrid g{o.spec, std::vector<double>(o.cells.size())};
  for (std::size_t i = 0; i < o.cells.size(); ++i) g.values[i] = o.cells[i] ? 1.0 : 0.0;
  return g;
}

inline OccupancyGrid grid_as_occupancy(const SdfGrid& g) {
  OccupancyGrid o{g.spec, std::vector<std::uint8_t>(g.values.size())};
  for (std::size_t i = 0; i < g.values.size(); ++i) o.cells[i] = g.values[i] > 0.5 ? 1 : 0;
  return o;
}

}  // namespace shapesel
