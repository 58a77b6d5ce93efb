#include "meshtrace/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "meshtrace/error.hpp"

namespace meshtrace {

void validate_mesh(const Mesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) {
    if (!is_finite(v)) throw StructuralError("non-finite vertex coordinate");
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    for (int idx : face) {
      if (idx < 0 || idx >= n)
        throw StructuralError("face " + std::to_string(f) +
                              " references vertex " + std::to_string(idx) +
                              " outside [0, " + std::to_string(n) + ")");
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
      throw StructuralError("face " + std::to_string(f) +
                            " has repeated vertex indices");
  }
  if (!mesh.normals.empty() && mesh.normals.size() != mesh.vertices.size())
    throw StructuralError("normal count does not match vertex count");
}

std::vector<std::pair<int, int>> unique_edges(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      edges.emplace(std::min(a, b), std::max(a, b));
    }
  }
  return {edges.begin(), edges.end()};
}

Aabb bounding_box(const Mesh& mesh) {
  Aabb box;
  for (const Vec3& v : mesh.vertices) box.expand(v);
  return box;
}

bool has_boundary_edges(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  for (const auto& [edge, c] : count)
    if (c % 2 != 0) return true;
  return false;
}

double face_area(const Mesh& mesh, int face) {
  const auto& f = mesh.faces[face];
  const Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
  const Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
  return 0.5 * norm(cross(e1, e2));
}

double surface_area(const Mesh& mesh) {
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    total += face_area(mesh, static_cast<int>(f));
  return total;
}

Mesh translated(const Mesh& mesh, const Vec3& offset) {
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v += offset;
  return out;
}

Mesh rotated(const Mesh& mesh, const Mat3& rot) {
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v = rot * v;
  for (Vec3& n : out.normals) n = rot * n;
  return out;
}

Mesh scaled(const Mesh& mesh, double factor) {
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v *= factor;
  return out;
}

std::pair<Mesh, Mesh> rescale_to_gt(const Mesh& pred, const Mesh& gt,
                                    double target) {
  const Aabb box = bounding_box(gt);
  if (box.empty() || box.longest_edge() <= 0.0)
    throw DegenerateError("ground-truth bounding box has zero extent");
  const double factor = target / box.longest_edge();
  return {scaled(pred, factor), scaled(gt, factor)};
}

}  // namespace meshtrace
