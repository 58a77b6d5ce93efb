#include <doctest.h>

#include <cmath>
#include <vector>

#include "meshtrace/camera.hpp"
#include "meshtrace/error.hpp"
#include "meshtrace/rng.hpp"

using namespace meshtrace;

namespace {

CameraRig simple_rig() {
  CameraRig cam;
  cam.projection = perspective_projection(64.0, 128.0, 128.0, 0.1, 100.0);
  cam.viewport = {0.0, 0.0, 128.0, 128.0};
  return cam;
}

const Box kFullRoi{0.0, 0.0, 128.0, 128.0};

}  // namespace

TEST_CASE("perspective_projection entries and validation") {
  const Mat4 p = perspective_projection(64.0, 128.0, 128.0, 0.1, 100.0);
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(p(1, 1) == doctest::Approx(1.0));
  CHECK(p(2, 2) == doctest::Approx(100.0 / 99.9));
  CHECK(p(2, 3) == doctest::Approx(-10.0 / 99.9));
  CHECK(p(3, 2) == doctest::Approx(1.0));
  CHECK(p(3, 3) == doctest::Approx(0.0));
  CHECK_THROWS_AS(perspective_projection(0.0, 128, 128, 0.1, 100),
                  ArgumentError);
  CHECK_THROWS_AS(perspective_projection(64, 128, 128, -1.0, 100),
                  ArgumentError);
  CHECK_THROWS_AS(perspective_projection(64, 128, 128, 5.0, 5.0),
                  ArgumentError);
}

TEST_CASE("a point on the optical axis lands at the ROI center") {
  const auto pv = project_vertices({{0, 0, 2}}, simple_rig(), kFullRoi);
  REQUIRE(pv.size() == 1);
  CHECK_FALSE(pv[0].behind);
  CHECK_FALSE(pv[0].clamped_u);
  CHECK_FALSE(pv[0].clamped_v);
  CHECK(pv[0].u == doctest::Approx(0.5));
  CHECK(pv[0].v == doctest::Approx(0.5));
}

TEST_CASE("projection follows the pixel conventions") {
  // ndc_x = x/z with this rig; x = z/2 puts the point 3/4 across the image.
  const auto right = project_vertices({{1, 0, 2}}, simple_rig(), kFullRoi);
  CHECK(right[0].u == doctest::Approx(0.75));
  CHECK(right[0].v == doctest::Approx(0.5));
  // +y in camera space is up, which is a smaller pixel row (v flips).
  const auto up = project_vertices({{0, 1, 2}}, simple_rig(), kFullRoi);
  CHECK(up[0].u == doctest::Approx(0.5));
  CHECK(up[0].v == doctest::Approx(0.25));
}

TEST_CASE("vertices behind the camera are flagged and zeroed") {
  const auto pv =
      project_vertices({{0, 0, -1}, {0, 0, 0}, {0, 0, 1}}, simple_rig(),
                       kFullRoi);
  CHECK(pv[0].behind);
  CHECK(pv[1].behind);  // w == 0 counts as behind
  CHECK_FALSE(pv[2].behind);
  CHECK(pv[0].u == 0.0);
  CHECK(pv[0].v == 0.0);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) CHECK(pv[0].jac[r][c] == 0.0);
}

TEST_CASE("out-of-ROI projections clamp and zero the clamped derivative") {
  // x = 2z projects to ndc_x = 2, off the right edge.
  const auto pv = project_vertices({{4, 0, 2}}, simple_rig(), kFullRoi);
  CHECK(pv[0].u == 1.0);
  CHECK(pv[0].clamped_u);
  CHECK_FALSE(pv[0].clamped_v);
  CHECK(pv[0].jac[0][0] == 0.0);
  CHECK(pv[0].jac[0][2] == 0.0);
  // The unclamped v row still carries a derivative.
  CHECK(pv[0].jac[1][1] != 0.0);
}

TEST_CASE("ROI edges map to u = 0 and u = 1") {
  const Box roi{64.0, 64.0, 96.0, 128.0};
  // The optical axis lands at pixel (64, 64) = the ROI's top-left corner.
  const auto pv = project_vertices({{0, 0, 2}}, simple_rig(), roi);
  CHECK(pv[0].u == doctest::Approx(0.0));
  CHECK(pv[0].v == doctest::Approx(0.0));
  // x = z/2 lands at pixel 96 = the ROI's right edge.
  const auto edge = project_vertices({{1, 0, 2}}, simple_rig(), roi);
  CHECK(edge[0].u == doctest::Approx(1.0));
  CHECK_FALSE(edge[0].clamped_u);
}

TEST_CASE("world and view transforms feed the projection") {
  CameraRig cam = simple_rig();
  // Push the model 3 units down the camera axis.
  cam.world = Mat4::translation({0, 0, 3});
  const auto pv = project_vertices({{1, 0, -1}}, cam, kFullRoi);
  // Camera-space point is (1, 0, 2): same as the known 0.75 case.
  CHECK(pv[0].u == doctest::Approx(0.75));
  // And a view translation can undo it.
  cam.view = Mat4::translation({0, 0, -3});
  const auto undone = project_vertices({{1, 0, 2}}, cam, kFullRoi);
  CHECK(undone[0].u == doctest::Approx(0.75));
}

TEST_CASE("projection jacobian matches central differences") {
  CameraRig cam;
  cam.projection = perspective_projection(96.0, 128.0, 96.0, 0.2, 50.0);
  cam.viewport = {0.0, 0.0, 128.0, 96.0};
  cam.world = Mat4::from_rotation(rotation_zyx(0.3, -0.2, 0.1)) *
              Mat4::translation({0.1, -0.2, 0.05});
  cam.view = Mat4::translation({0.0, 0.1, 4.0});
  const Box roi{20.0, 10.0, 100.0, 90.0};

  Rng rng(314);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                 rng.uniform(-1.0, 1.0)};
    const auto base = project_vertices({p}, cam, roi);
    if (base[0].behind || base[0].clamped_u || base[0].clamped_v) continue;
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 lo = p, hi = p;
      (axis == 0 ? lo.x : axis == 1 ? lo.y : lo.z) -= h;
      (axis == 0 ? hi.x : axis == 1 ? hi.y : hi.z) += h;
      const auto a = project_vertices({lo}, cam, roi);
      const auto b = project_vertices({hi}, cam, roi);
      if (a[0].behind || b[0].behind || a[0].clamped_u || b[0].clamped_u ||
          a[0].clamped_v || b[0].clamped_v)
        continue;
      const double du = (b[0].u - a[0].u) / (2.0 * h);
      const double dv = (b[0].v - a[0].v) / (2.0 * h);
      CHECK(du == doctest::Approx(base[0].jac[0][axis]).epsilon(1e-4));
      CHECK(dv == doctest::Approx(base[0].jac[1][axis]).epsilon(1e-4));
      ++checked;
    }
  }
  CHECK(checked >= 30);
}

TEST_CASE("validate_camera and validate_feature reject bad input") {
  CameraRig cam = simple_rig();
  cam.viewport.width = 0.0;
  CHECK_THROWS_AS(validate_camera(cam), ArgumentError);
  cam = simple_rig();
  cam.view(1, 2) = std::nan("");
  CHECK_THROWS_AS(validate_camera(cam), ArgumentError);

  RoiFeature feat;
  feat.channels = 3;
  feat.height = 28;
  feat.width = 28;
  feat.data.assign(3 * 28 * 28, 0.0);
  CHECK_NOTHROW(validate_feature(feat));
  feat.data.pop_back();
  CHECK_THROWS_AS(validate_feature(feat), ArgumentError);
  feat.data.push_back(std::nan(""));
  CHECK_THROWS_AS(validate_feature(feat), ArgumentError);
  feat.data.back() = 0.0;
  feat.channels = 0;
  CHECK_THROWS_AS(validate_feature(feat), ArgumentError);

  CHECK_THROWS_AS(project_vertices({{0, 0, 1}}, simple_rig(), Box{5, 5, 5, 9}),
                  ArgumentError);
}

TEST_CASE("RoiFeature indexing is channels-first row-major") {
  RoiFeature feat;
  feat.channels = 2;
  feat.height = 3;
  feat.width = 4;
  feat.data.assign(2 * 3 * 4, 0.0);
  feat.at(1, 2, 3) = 7.5;
  CHECK(feat.data[(1 * 3 + 2) * 4 + 3] == 7.5);
  CHECK(feat.at(1, 2, 3) == 7.5);
  CHECK(feat.at(0, 0, 0) == 0.0);
}
