#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "meshtrace/geometry.hpp"
#include "meshtrace/mesh.hpp"

namespace meshtrace {

// Sampled surface points, normals unit length and paired 1:1 with points.
struct PointSet {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;

  std::size_t size() const { return points.size(); }
};

// Throws ArgumentError when |points| != |normals| or a normal is off unit
// length by more than 1e-6.
void validate_point_set(const PointSet& ps);

// A PointSet plus the face choices and barycentric coordinates that
// produced it, so losses can push gradients back to mesh vertices.
struct SurfaceSample {
  PointSet point_set;
  std::vector<int> face;                      // face index per point
  std::vector<std::array<double, 3>> bary;    // barycentric weights per point
};

// Area-weighted uniform surface sampling; normals are face normals.
// Deterministic for a fixed seed. Throws DegenerateError when every face
// has zero area and ArgumentError for n < 1 or an empty mesh.
SurfaceSample sample_surface(const Mesh& mesh, int n, std::uint64_t seed);

inline PointSet sample_points(const Mesh& mesh, int n, std::uint64_t seed) {
  return sample_surface(mesh, n, seed).point_set;
}

}  // namespace meshtrace
