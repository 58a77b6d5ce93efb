#include <doctest.h>

#include <array>
#include <cmath>

#include "meshtrace/geometry.hpp"

using namespace meshtrace;

namespace {

bool approx_eq(const Vec3& a, const Vec3& b, double tol = 1e-12) {
  return std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol &&
         std::abs(a.z - b.z) <= tol;
}

}  // namespace

TEST_CASE("vec3 algebra basics") {
  const Vec3 a{1, 2, 3};
  const Vec3 b{-2, 0.5, 4};
  CHECK(dot(a, b) == doctest::Approx(-2 + 1 + 12));
  CHECK(approx_eq(cross(Vec3{1, 0, 0}, Vec3{0, 1, 0}), Vec3{0, 0, 1}));
  CHECK(norm(Vec3{3, 4, 0}) == doctest::Approx(5.0));
  CHECK(norm(normalized(b)) == doctest::Approx(1.0));
  CHECK(approx_eq(normalized(Vec3{0, 0, 0}), Vec3{0, 0, 0}));
  CHECK(approx_eq(a + b, Vec3{-1, 2.5, 7}));
  CHECK(approx_eq(a * 2.0, Vec3{2, 4, 6}));
  CHECK(a[0] == 1.0);
  CHECK(a[2] == 3.0);
}

TEST_CASE("rotation_zyx is orthonormal with determinant +1") {
  for (const auto& [az, ay, ax] :
       {std::array<double, 3>{0, 0, 0}, {0.3, -1.2, 2.5}, {3.1, 0.01, -0.7},
        {-2.0, 1.4, 0.0}}) {
    const Mat3 r = rotation_zyx(az, ay, ax);
    const Mat3 rtr = r.transposed() * r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(rtr(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    const Vec3 c0{r(0, 0), r(1, 0), r(2, 0)};
    const Vec3 c1{r(0, 1), r(1, 1), r(2, 1)};
    const Vec3 c2{r(0, 2), r(1, 2), r(2, 2)};
    CHECK(dot(cross(c0, c1), c2) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rotation_zyx quarter turn about z maps x-hat to y-hat") {
  const double pi = 3.14159265358979323846;
  const Mat3 r = rotation_zyx(pi / 2.0, 0.0, 0.0);
  CHECK(approx_eq(r * Vec3{1, 0, 0}, Vec3{0, 1, 0}, 1e-12));
  CHECK(approx_eq(r * Vec3{0, 1, 0}, Vec3{-1, 0, 0}, 1e-12));
  CHECK(approx_eq(r * Vec3{0, 0, 1}, Vec3{0, 0, 1}, 1e-12));
}

TEST_CASE("rotation_zyx composes intrinsic Z then Y then X") {
  const Mat3 composed = rotation_zyx(0.4, -0.9, 1.7);
  const Mat3 manual = rotation_zyx(0.4, 0, 0) * rotation_zyx(0, -0.9, 0) *
                      rotation_zyx(0, 0, 1.7);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(composed(i, j) == doctest::Approx(manual(i, j)).epsilon(1e-12));
}

TEST_CASE("mat4 translation and rotation embedding") {
  const Mat4 t = Mat4::translation({1, -2, 3});
  const Vec4 p = t.mul_point({10, 10, 10});
  CHECK(p.x == doctest::Approx(11));
  CHECK(p.y == doctest::Approx(8));
  CHECK(p.z == doctest::Approx(13));
  CHECK(p.w == doctest::Approx(1));

  const Mat3 r3 = rotation_zyx(0.5, 0.2, -0.3);
  const Mat4 r4 = Mat4::from_rotation(r3);
  const Vec3 v{0.3, -1.0, 2.0};
  const Vec4 q = r4.mul_point(v);
  const Vec3 expect = r3 * v;
  CHECK(q.x == doctest::Approx(expect.x).epsilon(1e-12));
  CHECK(q.y == doctest::Approx(expect.y).epsilon(1e-12));
  CHECK(q.z == doctest::Approx(expect.z).epsilon(1e-12));

  // Composition order is column-vector: (T * R) p == T (R p).
  const Mat4 tr = t * r4;
  const Vec4 a = tr.mul_point(v);
  const Vec4 b = t.mul_point({q.x, q.y, q.z});
  CHECK(a.x == doctest::Approx(b.x).epsilon(1e-12));
  CHECK(a.y == doctest::Approx(b.y).epsilon(1e-12));
  CHECK(a.z == doctest::Approx(b.z).epsilon(1e-12));
}

TEST_CASE("aabb expand, extent, and containment") {
  Aabb box;
  CHECK(box.empty());
  box.expand({1, 2, 3});
  CHECK_FALSE(box.empty());
  CHECK(box.longest_edge() == doctest::Approx(0.0));
  box.expand({-1, 5, 3.5});
  CHECK(approx_eq(box.lo, Vec3{-1, 2, 3}));
  CHECK(approx_eq(box.hi, Vec3{1, 5, 3.5}));
  CHECK(box.longest_edge() == doctest::Approx(3.0));
  CHECK(box.contains({0, 3, 3.2}));
  CHECK_FALSE(box.contains({0, 3, 5}));

  Aabb other;
  other.expand({10, 0, 0});
  box.expand(other);
  CHECK(box.hi.x == doctest::Approx(10));
}
