#include "meshtrace/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "meshtrace/error.hpp"
#include "meshtrace/rng.hpp"

namespace meshtrace {

void validate_point_set(const PointSet& ps) {
  if (ps.points.size() != ps.normals.size())
    throw ArgumentError("point set has " + std::to_string(ps.points.size()) +
                        " points but " + std::to_string(ps.normals.size()) +
                        " normals");
  for (const Vec3& n : ps.normals) {
    if (std::abs(norm(n) - 1.0) > 1e-6)
      throw ArgumentError("point set normal is not unit length");
  }
}

SurfaceSample sample_surface(const Mesh& mesh, int n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("sample count must be >= 1");
  if (mesh.faces.empty()) throw ArgumentError("mesh has no faces");

  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += face_area(mesh, static_cast<int>(f));
    cumulative[f] = total;
  }
  if (total <= 0.0) throw DegenerateError("all faces have zero area");

  SurfaceSample out;
  out.point_set.points.resize(n);
  out.point_set.normals.resize(n);
  out.face.resize(n);
  out.bary.resize(n);

  Rng rng(seed);
  for (int k = 0; k < n; ++k) {
    const double r = rng.uniform() * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), r);
    int f = static_cast<int>(it - cumulative.begin());
    if (f >= static_cast<int>(mesh.faces.size()))
      f = static_cast<int>(mesh.faces.size()) - 1;

    // Uniform barycentric point via the sqrt trick.
    const double r1 = rng.uniform();
    const double r2 = rng.uniform();
    const double s = std::sqrt(r1);
    const double a = 1.0 - s;
    const double b = s * (1.0 - r2);
    const double c = s * r2;

    const auto& face = mesh.faces[f];
    const Vec3& va = mesh.vertices[face[0]];
    const Vec3& vb = mesh.vertices[face[1]];
    const Vec3& vc = mesh.vertices[face[2]];
    out.point_set.points[k] = va * a + vb * b + vc * c;
    out.point_set.normals[k] = normalized(cross(vb - va, vc - va));
    out.face[k] = f;
    out.bary[k] = {a, b, c};
  }
  return out;
}

}  // namespace meshtrace
