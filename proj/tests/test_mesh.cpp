#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "meshtrace/error.hpp"
#include "meshtrace/mesh.hpp"

using namespace meshtrace;

namespace {

// Sorted multiset of squared edge lengths, for isometry checks.
std::multiset<long long> edge_length_keys(const Mesh& m) {
  std::multiset<long long> keys;
  for (const auto& [a, b] : unique_edges(m))
    keys.insert(llround(norm2(m.vertices[a] - m.vertices[b]) * 1e9));
  return keys;
}

}  // namespace

TEST_CASE("make_cube is a closed 12-face box with area 6") {
  const Mesh cube = make_cube();
  validate_mesh(cube);
  CHECK(cube.vertex_count() == 8);
  CHECK(cube.face_count() == 12);
  CHECK(unique_edges(cube).size() == 18);
  CHECK_FALSE(has_boundary_edges(cube));
  CHECK(surface_area(cube) == doctest::Approx(6.0));
  const Aabb box = bounding_box(cube);
  CHECK(box.lo.x == doctest::Approx(-0.5));
  CHECK(box.hi.z == doctest::Approx(0.5));
  CHECK(box.longest_edge() == doctest::Approx(1.0));
}

TEST_CASE("primitive constructors are valid closed meshes") {
  for (const Mesh& m : {make_sphere(0.5, 8, 12), make_cylinder(0.4, 1.2, 16),
                        make_box({1, 2, 3}, {2, 1, 0.5})}) {
    validate_mesh(m);
    CHECK_FALSE(has_boundary_edges(m));
    CHECK(surface_area(m) > 0.0);
  }
  // Sphere surface area approaches 4*pi*r^2 as the tessellation refines.
  const Mesh fine = make_sphere(1.0, 32, 64);
  CHECK(surface_area(fine) ==
        doctest::Approx(4.0 * 3.14159265358979323846).epsilon(0.01));
}

TEST_CASE("validate_mesh rejects structural defects") {
  Mesh m = make_cube();
  m.faces.push_back({0, 1, 99});
  CHECK_THROWS_AS(validate_mesh(m), StructuralError);

  Mesh dup = make_cube();
  dup.faces.push_back({2, 2, 3});
  CHECK_THROWS_AS(validate_mesh(dup), StructuralError);

  Mesh nan_mesh = make_cube();
  nan_mesh.vertices[0].x = std::nan("");
  CHECK_THROWS_AS(validate_mesh(nan_mesh), StructuralError);
}

TEST_CASE("obj loads a minimal triangle") {
  const Mesh m = load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK(m.vertex_count() == 3);
  REQUIRE(m.face_count() == 1);
  CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("obj quad faces fan-triangulate as (0,1,2),(0,2,3)") {
  const Mesh m =
      load_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  REQUIRE(m.face_count() == 2);
  CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
  CHECK(m.faces[1] == std::array<int, 3>{0, 2, 3});
}

TEST_CASE("obj supports slashed and negative indices, comments, blank lines") {
  const Mesh m = load_obj(
      "# header comment\n"
      "\n"
      "v 0 0 0\n"
      "v 1 0 0\n"
      "v 0 1 0\n"
      "vn 0 0 1\nvn 0 0 1\nvn 0 0 1\n"
      "f 1//1 2//2 -1//3\n");
  REQUIRE(m.face_count() == 1);
  CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
  CHECK(m.normals.size() == 3);
}

TEST_CASE("obj errors carry line numbers and structural context") {
  try {
    load_obj("v 0 0 0\nv 1 0 zzz\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_obj("v 0 0\n"), ParseError);
  CHECK_THROWS_AS(load_obj("v 0 0 0\nf 1 2\n"), ParseError);
  // Face index out of range with only 3 vertices.
  CHECK_THROWS_AS(load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"),
                  StructuralError);
}

TEST_CASE("obj round trip preserves coordinates and connectivity") {
  Mesh m = make_sphere(0.73, 5, 9);
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    m.vertices[i] += Vec3{0.1234567, -3.1e-5, 2.0} * (double(i % 3) + 1.0);
  const Mesh back = load_obj(save_obj(m));
  REQUIRE(back.vertex_count() == m.vertex_count());
  REQUIRE(back.face_count() == m.face_count());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK(std::abs(back.vertices[i].x - m.vertices[i].x) < 1e-6);
    CHECK(std::abs(back.vertices[i].y - m.vertices[i].y) < 1e-6);
    CHECK(std::abs(back.vertices[i].z - m.vertices[i].z) < 1e-6);
  }
  for (std::size_t f = 0; f < m.faces.size(); ++f) CHECK(back.faces[f] == m.faces[f]);
}

TEST_CASE("rigid motions preserve edge lengths, scaling does not") {
  const Mesh cube = make_cube();
  const Mesh turned = rotated(cube, rotation_zyx(0.7, -0.3, 1.9));
  CHECK(edge_length_keys(turned) == edge_length_keys(cube));
  const Mesh moved = translated(cube, {3, -1, 0.5});
  CHECK(edge_length_keys(moved) == edge_length_keys(cube));
  const Mesh grown = scaled(cube, 2.0);
  CHECK(surface_area(grown) == doctest::Approx(24.0));
}

TEST_CASE("rescale_to_gt uses the gt longest bbox edge") {
  const Mesh gt = make_cube();  // bbox edge 1
  const Mesh pred = make_box({0.2, 0, 0}, {0.5, 0.5, 0.5});

  SUBCASE("target 5 scales both meshes by 5") {
    const auto [p, g] = rescale_to_gt(pred, gt, 5.0);
    CHECK(bounding_box(g).longest_edge() == doctest::Approx(5.0));
    CHECK(bounding_box(p).longest_edge() == doctest::Approx(2.5));
    CHECK(p.vertices[0].x == doctest::Approx(pred.vertices[0].x * 5.0));
  }
  SUBCASE("target 10 scales by 10") {
    const auto [p, g] = rescale_to_gt(pred, gt, 10.0);
    (void)p;
    CHECK(bounding_box(g).longest_edge() == doctest::Approx(10.0));
  }
  SUBCASE("pred == gt stays identical after rescaling") {
    const auto [p, g] = rescale_to_gt(gt, gt, 5.0);
    REQUIRE(p.vertex_count() == g.vertex_count());
    for (std::size_t i = 0; i < p.vertices.size(); ++i)
      CHECK(p.vertices[i] == g.vertices[i]);
  }
  SUBCASE("degenerate gt throws") {
    Mesh flat;
    flat.vertices = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    flat.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(rescale_to_gt(pred, flat, 5.0), DegenerateError);
  }
}

TEST_CASE("face_area and surface_area agree on the cube") {
  const Mesh cube = make_cube();
  double total = 0.0;
  for (int f = 0; f < int(cube.face_count()); ++f) {
    CHECK(face_area(cube, f) == doctest::Approx(0.5));
    total += face_area(cube, f);
  }
  CHECK(total == doctest::Approx(surface_area(cube)));
}
