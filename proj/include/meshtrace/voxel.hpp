#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshtrace/geometry.hpp"
#include "meshtrace/mesh.hpp"

namespace meshtrace {

// Scalar occupancy field on a regular lattice. Cell (i,j,k) spans
// origin + (i,j,k)*cell .. origin + (i+1,j+1,k+1)*cell, values in [0,1].
// Linear index is x-major: (i*ny + j)*nz + k.
struct OccupancyGrid {
  int nx = 0, ny = 0, nz = 0;
  Vec3 origin;
  Vec3 cell;
  std::vector<double> values;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  Vec3 cell_center(int i, int j, int k) const {
    return {origin.x + (i + 0.5) * cell.x, origin.y + (j + 0.5) * cell.y,
            origin.z + (k + 0.5) * cell.z};
  }
};

void validate_grid(const OccupancyGrid& grid);

// Point-in-mesh by ray-crossing parity. The ray direction is fixed at
// (1, 1e-3, 1e-4) to dodge edge-grazing on axis-aligned geometry.
class InsideTester {
 public:
  explicit InsideTester(const Mesh& mesh);
  bool inside(const Vec3& point) const;

 private:
  struct Tri {
    Vec3 a, e1, e2;
    double ylo, yhi, zlo, zhi;  // bounds along the two bucketed axes
  };
  std::vector<Tri> tris_;
  // 2D buckets over (y,z) since the ray runs along +x.
  int bn_ = 0;
  double by0_ = 0, bz0_ = 0, bsy_ = 1, bsz_ = 1;
  std::vector<std::vector<int>> buckets_;
};

// Binary occupancy of `mesh` sampled at cell centers of a res^3 grid over
// the given box. Warns (but proceeds) when the mesh has boundary edges.
OccupancyGrid voxelize_in_box(const Mesh& mesh, const Aabb& box,
                              int resolution);

// Grid bounds follow the mesh's own bounding box. resolution >= 2.
OccupancyGrid voxelize(const Mesh& mesh, int resolution);

// Fraction of grid cells occupied (mean value).
double occupied_fraction(const OccupancyGrid& grid);

// Volumetric IoU of two meshes on a shared res^3 lattice over their
// combined bounding box.
double volumetric_iou(const Mesh& a, const Mesh& b, int resolution);

// Small binary format: magic, per-axis resolution, origin, cell size,
// then row-major float32 values.
std::string save_grid(const OccupancyGrid& grid);
OccupancyGrid load_grid(const std::string& bytes);
void save_grid_file(const OccupancyGrid& grid, const std::string& path);
OccupancyGrid load_grid_file(const std::string& path);

}  // namespace meshtrace
