#include <doctest.h>

#include <vector>

#include "meshtrace/error.hpp"
#include "meshtrace/mean_shape.hpp"
#include "meshtrace/rng.hpp"
#include "meshtrace/voxel.hpp"

using namespace meshtrace;

namespace {

long occupied(const OccupancyGrid& g) {
  long n = 0;
  for (double v : g.values) n += v > 0.5;
  return n;
}

}  // namespace

TEST_CASE("largest_component keeps the bigger blob and drops the rest") {
  OccupancyGrid g;
  g.nx = g.ny = g.nz = 8;
  g.origin = {0, 0, 0};
  g.cell = {1, 1, 1};
  g.values.assign(g.cell_count(), 0.0);
  // Blob A: 3x3x3 corner block. Blob B: 2x2x2 block, well separated.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) g.at(i, j, k) = 1.0;
  for (int i = 5; i < 7; ++i)
    for (int j = 5; j < 7; ++j)
      for (int k = 5; k < 7; ++k) g.at(i, j, k) = 1.0;
  const OccupancyGrid kept = largest_component(g);
  CHECK(occupied(kept) == 27);
  CHECK(kept.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(kept.at(6, 6, 6) == doctest::Approx(0.0));
}

TEST_CASE("largest_component uses 6-connectivity, not diagonal") {
  OccupancyGrid g;
  g.nx = g.ny = g.nz = 4;
  g.origin = {0, 0, 0};
  g.cell = {1, 1, 1};
  g.values.assign(g.cell_count(), 0.0);
  // Two cells touching only at a corner are separate components.
  g.at(0, 0, 0) = 1.0;
  g.at(1, 1, 1) = 1.0;
  g.at(1, 1, 2) = 1.0;  // face-adjacent to (1,1,1): together they win
  const OccupancyGrid kept = largest_component(g);
  CHECK(occupied(kept) == 2);
  CHECK(kept.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(kept.at(1, 1, 1) == doctest::Approx(1.0));
  CHECK(kept.at(1, 1, 2) == doctest::Approx(1.0));
}

TEST_CASE("largest_component breaks size ties on the lower seed index") {
  OccupancyGrid g;
  g.nx = g.ny = g.nz = 4;
  g.origin = {0, 0, 0};
  g.cell = {1, 1, 1};
  g.values.assign(g.cell_count(), 0.0);
  g.at(0, 0, 0) = 1.0;                     // linear index 0
  g.at(3, 3, 3) = 1.0;                     // linear index 63
  const OccupancyGrid kept = largest_component(g);
  CHECK(occupied(kept) == 1);
  CHECK(kept.at(0, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("largest_component requires at least one set cell") {
  OccupancyGrid g;
  g.nx = g.ny = g.nz = 2;
  g.origin = {0, 0, 0};
  g.cell = {1, 1, 1};
  g.values.assign(g.cell_count(), 0.0);
  CHECK_THROWS_AS(largest_component(g), DegenerateError);
}

TEST_CASE("marching_cubes recovers a closed surface from a solid grid") {
  const OccupancyGrid g = voxelize(make_cube(), 16);
  const Mesh surf = marching_cubes(g, 0.5);
  CHECK(surf.vertices.size() > 0);
  CHECK_FALSE(has_boundary_edges(surf));
  // The reconstructed box tracks the unit cube's bounds to within a cell.
  const Aabb box = bounding_box(surf);
  CHECK(box.lo.x == doctest::Approx(-0.5).epsilon(0.2));
  CHECK(box.hi.x == doctest::Approx(0.5).epsilon(0.2));
  CHECK(volumetric_iou(surf, make_cube(), 24) > 0.85);
}

TEST_CASE("simplify_qem respects the face budget and keeps the shape") {
  const Mesh sphere = make_sphere(1.0, 16, 32);
  REQUIRE(static_cast<int>(sphere.faces.size()) > 400);
  const Mesh coarse = simplify_qem(sphere, 400);
  CHECK(static_cast<int>(coarse.faces.size()) <= 400);
  CHECK_FALSE(has_boundary_edges(coarse));
  CHECK(volumetric_iou(coarse, sphere, 24) > 0.85);
  // A budget above the current face count is a no-op.
  const Mesh same = simplify_qem(coarse, 10000);
  CHECK(same.faces.size() == coarse.faces.size());
}

TEST_CASE("mean_shape of identical cubes reproduces the cube") {
  const std::vector<Mesh> inputs(5, make_cube());
  const Mesh shape = mean_shape(inputs, 32, 0.4, 4000);
  CHECK(static_cast<int>(shape.faces.size()) <= 4000);
  CHECK_FALSE(has_boundary_edges(shape));
  CHECK(volumetric_iou(shape, make_cube(), 32) >= 0.9);
}

TEST_CASE("mean_shape of a single mesh reproduces that mesh") {
  const Mesh box = make_box({0.2, -0.1, 0.0}, {1.0, 0.8, 0.6});
  const Mesh shape = mean_shape({box}, 32, 0.4, 4000);
  CHECK(volumetric_iou(shape, box, 32) >= 0.85);
}

TEST_CASE("mean_shape keeps only cells covered by a majority of inputs") {
  // Two unit cubes offset by 0.6: only the 0.4-wide overlap has average
  // occupancy 1.0; the flanks sit at 0.5. iso 0.5 keeps overlap only.
  const Mesh a = make_cube();
  const Mesh b = translated(make_cube(), {0.6, 0.0, 0.0});
  const Mesh shape = mean_shape({a, b}, 32, 0.5, 4000);
  const Aabb box = bounding_box(shape);
  // Overlap spans x in [0.1, 0.5].
  CHECK(box.lo.x == doctest::Approx(0.1).epsilon(0.5));
  CHECK(box.hi.x == doctest::Approx(0.5).epsilon(0.15));
  CHECK((box.hi.x - box.lo.x) < 0.55);
  const Mesh overlap = make_box({0.3, 0.0, 0.0}, {0.4, 1.0, 1.0});
  CHECK(volumetric_iou(shape, overlap, 32) > 0.7);
}

TEST_CASE("mean_shape tolerates jittered copies of one base shape") {
  Rng rng(7);
  std::vector<Mesh> inputs;
  for (int i = 0; i < 8; ++i) {
    Mesh m = make_cube();
    const Vec3 jitter{rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03),
                      rng.uniform(-0.03, 0.03)};
    inputs.push_back(translated(m, jitter));
  }
  const Mesh shape = mean_shape(inputs, 32, 0.4, 4000);
  CHECK(volumetric_iou(shape, make_cube(), 32) >= 0.85);
}

TEST_CASE("mean_shape argument validation") {
  CHECK_THROWS_AS(mean_shape({}, 32, 0.4, 4000), ArgumentError);
  CHECK_THROWS_AS(mean_shape({make_cube()}, 1, 0.4, 4000), ArgumentError);
  CHECK_THROWS_AS(mean_shape({make_cube()}, 32, 0.4, 0), ArgumentError);
}
