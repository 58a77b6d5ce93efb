#pragma once

#include <vector>

#include "meshtrace/mesh.hpp"
#include "meshtrace/voxel.hpp"

namespace meshtrace {

// Keeps the largest 6-connected component of cells with value > 0.5,
// zeroing everything else. Size ties break on the lowest linear cell index
// of the component seed. Throws DegenerateError when no cell is set.
OccupancyGrid largest_component(const OccupancyGrid& grid);

// Surface at `iso` of the grid's cell-centered scalar field. The field is
// padded with one empty layer so closed level sets stay watertight.
Mesh marching_cubes(const OccupancyGrid& grid, double iso);

// Quadric-error edge collapse down to at most target_faces, with a penalty
// quadric on boundary edges. Collapses that flip face normals are skipped.
Mesh simplify_qem(const Mesh& mesh, int target_faces);

// Per-class canonical shape: average per-instance occupancy on a shared
// lattice, binarize at `iso`, keep the largest component, extract the
// boundary with marching cubes and simplify.
Mesh mean_shape(const std::vector<Mesh>& meshes, int resolution, double iso,
                int target_faces);

}  // namespace meshtrace
