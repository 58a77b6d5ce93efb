#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "meshtrace/geometry.hpp"

namespace meshtrace {

// Triangle mesh: the unit of prediction and ground truth. Faces are
// 0-based vertex index triples. Per-vertex normals are optional and, when
// present, must match the vertex count.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> normals;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
};

// Throws StructuralError when a face index is out of range or repeated, or
// a coordinate is non-finite.
void validate_mesh(const Mesh& mesh);

// Unique undirected edges as (min_index, max_index) pairs, sorted.
std::vector<std::pair<int, int>> unique_edges(const Mesh& mesh);

Aabb bounding_box(const Mesh& mesh);

// True if some undirected edge is used by an odd number of faces.
bool has_boundary_edges(const Mesh& mesh);

double face_area(const Mesh& mesh, int face);
double surface_area(const Mesh& mesh);

Mesh translated(const Mesh& mesh, const Vec3& offset);
Mesh rotated(const Mesh& mesh, const Mat3& rot);
Mesh scaled(const Mesh& mesh, double factor);

// Scales both meshes by target / (longest axis-aligned bounding-box edge of
// gt). Throws DegenerateError when the gt box has zero extent.
std::pair<Mesh, Mesh> rescale_to_gt(const Mesh& pred, const Mesh& gt,
                                    double target);

// --- OBJ I/O (ASCII subset: v, vn, f; polygon faces fan-triangulated) ---

// Throws ParseError (with line number) on malformed records and
// StructuralError on out-of-range face indices.
Mesh load_obj(const std::string& text);
std::string save_obj(const Mesh& mesh);

Mesh load_obj_file(const std::string& path);
void save_obj_file(const Mesh& mesh, const std::string& path);

// --- Primitive constructors used by fixtures and tests ---

// Axis-aligned box centered at `center`, 12 triangles, outward-facing.
Mesh make_box(const Vec3& center, const Vec3& size);
inline Mesh make_cube(double edge = 1.0) {
  return make_box({0, 0, 0}, {edge, edge, edge});
}
// UV sphere; rings >= 2, segments >= 3.
Mesh make_sphere(double radius, int rings = 12, int segments = 24);
Mesh make_cylinder(double radius, double height, int segments = 24);

}  // namespace meshtrace
