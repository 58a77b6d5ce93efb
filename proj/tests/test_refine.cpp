#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "meshtrace/camera.hpp"
#include "meshtrace/error.hpp"
#include "meshtrace/refine.hpp"
#include "meshtrace/rng.hpp"

using namespace meshtrace;

namespace {

Mesh make_tetra() {
  Mesh m;
  m.vertices = {{0, 0, 0}, {0.4, 0, 0}, {0, 0.4, 0}, {0, 0, 0.4}};
  m.faces = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}};
  return m;
}

CameraRig simple_rig() {
  CameraRig cam;
  cam.projection = perspective_projection(64.0, 128.0, 128.0, 0.1, 100.0);
  cam.viewport = {0.0, 0.0, 128.0, 128.0};
  return cam;
}

RoiFeature random_feature(int channels, int h, int w, Box box,
                          std::uint64_t seed) {
  RoiFeature f;
  f.channels = channels;
  f.height = h;
  f.width = w;
  f.box = box;
  f.data.resize(std::size_t(channels) * h * w);
  Rng rng(seed);
  for (double& v : f.data) v = rng.normal();
  return f;
}

double mat3_det(const Mat3& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

}  // namespace

TEST_CASE("mesh_adjacency is sorted and symmetric") {
  const auto nbrs = mesh_adjacency(make_tetra());
  REQUIRE(nbrs.size() == 4);
  // Complete graph on 4 vertices.
  CHECK(nbrs[0] == std::vector<int>{1, 2, 3});
  CHECK(nbrs[1] == std::vector<int>{0, 2, 3});
  CHECK(nbrs[2] == std::vector<int>{0, 1, 3});
  CHECK(nbrs[3] == std::vector<int>{0, 1, 2});

  const auto cube_nbrs = mesh_adjacency(make_cube());
  std::size_t degree_sum = 0;
  for (std::size_t i = 0; i < cube_nbrs.size(); ++i) {
    degree_sum += cube_nbrs[i].size();
    for (int j : cube_nbrs[i]) {
      const auto& back = cube_nbrs[j];
      CHECK(std::find(back.begin(), back.end(), int(i)) != back.end());
    }
  }
  // 18 unique edges on the triangulated cube.
  CHECK(degree_sum == 36);
}

TEST_CASE("graph_conv identity and neighbor-mean modes") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  const std::vector<std::vector<int>> chain{{1}, {0, 2}, {1}};

  GraphConvParams p;
  p.w0 = Eigen::MatrixXd::Identity(2, 2);
  p.w1 = Eigen::MatrixXd::Zero(2, 2);
  p.b = Eigen::VectorXd::Zero(2);
  CHECK(graph_conv(x, chain, p) == x);

  p.w0.setZero();
  p.w1 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd out = graph_conv(x, chain, p);
  // Row 0 sees row 1; row 1 averages rows 0 and 2; row 2 sees row 1.
  CHECK(out(0, 0) == doctest::Approx(3.0));
  CHECK(out(1, 0) == doctest::Approx(3.0));
  CHECK(out(1, 1) == doctest::Approx(4.0));
  CHECK(out(2, 1) == doctest::Approx(4.0));

  p.b = Eigen::VectorXd::Constant(2, 10.0);
  CHECK(graph_conv(x, chain, p)(0, 0) == doctest::Approx(13.0));
  CHECK_THROWS_AS(graph_conv(x, {{1}, {0}}, p), ArgumentError);
  p.w1 = Eigen::MatrixXd::Zero(2, 3);
  CHECK_THROWS_AS(graph_conv(x, chain, p), ArgumentError);
}

TEST_CASE("graph_conv against a dense loop oracle") {
  Rng rng(12);
  const int n = 6, in = 4, out_dim = 3;
  Eigen::MatrixXd x(n, in);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < in; ++j) x(i, j) = rng.normal();
  std::vector<std::vector<int>> nbrs(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && rng.uniform() < 0.5) nbrs[i].push_back(j);
  GraphConvParams p;
  p.w0 = Eigen::MatrixXd::NullaryExpr(out_dim, in, [&] { return rng.normal(); });
  p.w1 = Eigen::MatrixXd::NullaryExpr(out_dim, in, [&] { return rng.normal(); });
  p.b = Eigen::VectorXd::NullaryExpr(out_dim, [&] { return rng.normal(); });

  const Eigen::MatrixXd got = graph_conv(x, nbrs, p);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(in);
    for (int j : nbrs[i]) mean += x.row(j).transpose();
    if (!nbrs[i].empty()) mean /= double(nbrs[i].size());
    const Eigen::VectorXd want = p.w0 * x.row(i).transpose() + p.w1 * mean + p.b;
    for (int k = 0; k < out_dim; ++k)
      CHECK(got(i, k) == doctest::Approx(want(k)).epsilon(1e-12));
  }
}

TEST_CASE("vert_align hits grid cells exactly at align-corner coordinates") {
  RoiFeature f;
  f.channels = 2;
  f.height = 3;
  f.width = 4;
  f.data.resize(2 * 3 * 4);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) f.at(c, y, x) = 100 * c + 10 * y + x;

  // u = i/(W-1), v = j/(H-1) addresses cell (j, i) exactly.
  std::vector<std::pair<double, double>> coords{
      {0.0, 0.0}, {1.0, 0.0}, {1.0 / 3.0, 0.5}, {1.0, 1.0}};
  const Eigen::MatrixXd s = vert_align(f, coords);
  CHECK(s(0, 0) == doctest::Approx(0.0));
  CHECK(s(1, 0) == doctest::Approx(3.0));
  CHECK(s(2, 0) == doctest::Approx(11.0));  // cell (1, 1)
  CHECK(s(2, 1) == doctest::Approx(111.0));
  CHECK(s(3, 0) == doctest::Approx(23.0));
  // Midpoint between cells (0,0),(0,1),(1,0),(1,1): mean of 0,1,10,11.
  const Eigen::MatrixXd mid = vert_align(
      f, std::vector<std::pair<double, double>>{{1.0 / 6.0, 0.25}});
  CHECK(mid(0, 0) == doctest::Approx(5.5));
  CHECK_THROWS_AS(
      vert_align(f, std::vector<std::pair<double, double>>{{1.2, 0.0}}),
      ArgumentError);
}

TEST_CASE("vert_align zeroes rows for behind-camera vertices") {
  RoiFeature f = random_feature(3, 4, 4, {0, 0, 10, 10}, 7);
  std::vector<ProjectedVertex> coords(2);
  coords[0].u = 0.4;
  coords[0].v = 0.6;
  coords[1].behind = true;
  coords[1].u = 0.5;
  coords[1].v = 0.5;
  const Eigen::MatrixXd s = vert_align(f, coords);
  CHECK(s.row(0).cwiseAbs().sum() > 0.0);
  CHECK(s.row(1).cwiseAbs().sum() == 0.0);
}

TEST_CASE("vert_align_backward matches central differences") {
  RoiFeature f = random_feature(2, 5, 6, {0, 0, 10, 10}, 8);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ProjectedVertex> coords(1);
    coords[0].u = rng.uniform(0.05, 0.95);
    coords[0].v = rng.uniform(0.05, 0.95);
    Eigen::MatrixXd g(1, 2);
    g << rng.normal(), rng.normal();
    const auto duv = vert_align_backward(f, coords, g);
    const double h = 1e-7;
    for (int axis = 0; axis < 2; ++axis) {
      auto shifted = coords;
      auto& coord = axis == 0 ? shifted[0].u : shifted[0].v;
      coord += h;
      const double up = (vert_align(f, shifted).array() * g.array()).sum();
      coord -= 2 * h;
      const double dn = (vert_align(f, shifted).array() * g.array()).sum();
      const double numeric = (up - dn) / (2 * h);
      CHECK(numeric == doctest::Approx(duv[0][axis]).epsilon(1e-5));
    }
  }
}

TEST_CASE("freshly initialized pipeline is the identity on its reference") {
  const PipelineParams params = init_params(3, 8, 8, 8, 3, 101);
  const RoiFeature feat = random_feature(3, 6, 6, {32, 32, 96, 96}, 5);
  const Mesh ref = translated(make_tetra(), {0, 0, 2});
  const Mesh out = refine_pipeline(feat, ref, simple_rig(), params.stages);
  REQUIRE(out.vertices.size() == ref.vertices.size());
  for (std::size_t i = 0; i < ref.vertices.size(); ++i) {
    CHECK(out.vertices[i].x == ref.vertices[i].x);
    CHECK(out.vertices[i].y == ref.vertices[i].y);
    CHECK(out.vertices[i].z == ref.vertices[i].z);
  }
  CHECK(out.faces == ref.faces);
  CHECK_THROWS_AS(refine_vertices(feat, vertices_matrix(ref), simple_rig(),
                                  mesh_adjacency(ref), {}),
                  ArgumentError);
}

TEST_CASE("init_params is deterministic per seed and zeroes output heads") {
  const PipelineParams a = init_params(3, 8, 8, 8, 2, 7);
  const PipelineParams b = init_params(3, 8, 8, 8, 2, 7);
  const PipelineParams c = init_params(3, 8, 8, 8, 2, 8);
  CHECK(a.stages[0].conv_w == b.stages[0].conv_w);
  CHECK(a.stages[1].gcn[2].w1 == b.stages[1].gcn[2].w1);
  CHECK(a.head.w1 == b.head.w1);
  CHECK(a.stages[0].conv_w != c.stages[0].conv_w);
  CHECK(a.stages[0].out_w.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.stages[0].out_b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.head.w2.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.head.b2.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(init_params(0, 8, 8, 8, 2, 7), ArgumentError);
}

TEST_CASE("stage backward matches central differences") {
  const int channels = 2;
  PipelineParams pp = init_params(channels, 3, 4, 8, 1, 55);
  RefineStageParams p = pp.stages[0];
  Rng rng(66);
  for (Eigen::Index r = 0; r < p.out_w.rows(); ++r)
    for (Eigen::Index c = 0; c < p.out_w.cols(); ++c)
      p.out_w(r, c) = rng.normal() * 0.05;
  for (Eigen::Index r = 0; r < p.out_b.size(); ++r)
    p.out_b(r) = rng.normal() * 0.05;

  const CameraRig cam = simple_rig();
  const RoiFeature feat = random_feature(channels, 5, 6, {32, 32, 96, 96}, 77);
  const Mesh tetra = translated(make_tetra(), {-0.213, -0.147, 2.031});
  const Eigen::MatrixXd vref = vertices_matrix(tetra);
  const auto nbrs = mesh_adjacency(tetra);

  Eigen::MatrixXd g(vref.rows(), 3);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.normal();

  const auto loss = [&](const Eigen::MatrixXd& v) {
    return (mesh_refine_stage(feat, v, cam, nbrs, p).array() * g.array())
        .sum();
  };

  StageCache cache;
  mesh_refine_stage(feat, vref, cam, nbrs, p, &cache);
  RefineStageParams grads = zero_like(p);
  const Eigen::MatrixXd d_vref =
      mesh_refine_stage_backward(feat, p, nbrs, cache, g, grads);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < vref.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      Eigen::MatrixXd lo = vref, hi = vref;
      lo(i, a) -= h;
      hi(i, a) += h;
      const double numeric = (loss(hi) - loss(lo)) / (2 * h);
      CHECK(numeric == doctest::Approx(d_vref(i, a)).epsilon(1e-4));
    }
  }

  // Parameter gradients, one representative coefficient per tensor.
  const auto param_check = [&](double* coeff, double analytic) {
    const double keep = *coeff;
    *coeff = keep + h;
    const double up = loss(vref);
    *coeff = keep - h;
    const double dn = loss(vref);
    *coeff = keep;
    CHECK((up - dn) / (2 * h) == doctest::Approx(analytic).epsilon(1e-4));
  };
  param_check(&p.conv_w(0, 1), grads.conv_w(0, 1));
  param_check(&p.conv_b(0), grads.conv_b(0));
  param_check(&p.gcn[0].w0(1, 2), grads.gcn[0].w0(1, 2));
  param_check(&p.gcn[0].w1(0, 4), grads.gcn[0].w1(0, 4));
  param_check(&p.gcn[1].w0(2, 3), grads.gcn[1].w0(2, 3));
  param_check(&p.gcn[1].b(1), grads.gcn[1].b(1));
  param_check(&p.gcn[2].w1(3, 0), grads.gcn[2].w1(3, 0));
  param_check(&p.out_w(1, 2), grads.out_w(1, 2));
  param_check(&p.out_b(2), grads.out_b(2));
}

TEST_CASE("multi-stage pipeline backward matches central differences") {
  const int channels = 2;
  PipelineParams pp = init_params(channels, 3, 4, 8, 2, 550);
  Rng rng(661);
  for (auto& stage : pp.stages) {
    for (Eigen::Index r = 0; r < stage.out_w.rows(); ++r)
      for (Eigen::Index c = 0; c < stage.out_w.cols(); ++c)
        stage.out_w(r, c) = rng.normal() * 0.05;
  }

  const CameraRig cam = simple_rig();
  const RoiFeature feat = random_feature(channels, 5, 6, {32, 32, 96, 96}, 78);
  const Mesh tetra = translated(make_tetra(), {-0.213, -0.147, 2.031});
  const Eigen::MatrixXd vref = vertices_matrix(tetra);
  const auto nbrs = mesh_adjacency(tetra);
  Eigen::MatrixXd g(vref.rows(), 3);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.normal();

  const auto loss = [&](const Eigen::MatrixXd& v) {
    return (refine_vertices(feat, v, cam, nbrs, pp.stages).array() *
            g.array())
        .sum();
  };

  PipelineCache cache;
  refine_vertices(feat, vref, cam, nbrs, pp.stages, &cache);
  std::vector<RefineStageParams> grads;
  for (const auto& s : pp.stages) grads.push_back(zero_like(s));
  const Eigen::MatrixXd d_vref =
      refine_vertices_backward(feat, pp.stages, nbrs, cache, g, grads);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < vref.rows(); ++i)
    for (int a = 0; a < 3; ++a) {
      Eigen::MatrixXd lo = vref, hi = vref;
      lo(i, a) -= h;
      hi(i, a) += h;
      const double numeric = (loss(hi) - loss(lo)) / (2 * h);
      CHECK(numeric == doctest::Approx(d_vref(i, a)).epsilon(1e-4));
    }

  // A couple of parameter coefficients across both stages.
  const auto param_check = [&](double* coeff, double analytic) {
    const double keep = *coeff;
    *coeff = keep + h;
    const double up = loss(vref);
    *coeff = keep - h;
    const double dn = loss(vref);
    *coeff = keep;
    CHECK((up - dn) / (2 * h) == doctest::Approx(analytic).epsilon(1e-4));
  };
  param_check(&pp.stages[0].conv_w(1, 0), grads[0].conv_w(1, 0));
  param_check(&pp.stages[0].gcn[1].w0(0, 0), grads[0].gcn[1].w0(0, 0));
  param_check(&pp.stages[1].out_w(0, 1), grads[1].out_w(0, 1));
  param_check(&pp.stages[1].gcn[0].w1(2, 2), grads[1].gcn[0].w1(2, 2));
}

TEST_CASE("rotation_head pools 4x4 block means") {
  RoiFeature f;
  f.channels = 1;
  f.height = 8;
  f.width = 8;
  f.box = {0, 0, 8, 8};
  f.data.resize(64);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.at(0, y, x) = y * 8 + x;

  RotationHeadParams p;
  p.w1 = Eigen::MatrixXd::Zero(4, 16);
  p.b1 = Eigen::VectorXd::Zero(4);
  p.w2 = Eigen::MatrixXd::Zero(3, 4);
  p.b2 = Eigen::VectorXd::Zero(3);
  RotationHeadCache cache;
  rotation_head(f, p, &cache);
  REQUIRE(cache.pooled.size() == 16);
  // Block (by, bx) covers rows 2by..2by+1, cols 2bx..2bx+1; its mean is
  // (2by + 0.5) * 8 + 2bx + 0.5.
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 4; ++bx)
      CHECK(cache.pooled[by * 4 + bx] ==
            doctest::Approx((2 * by + 0.5) * 8.0 + 2 * bx + 0.5));
}

TEST_CASE("zeroed rotation head yields the identity rotation") {
  const RoiFeature f = random_feature(2, 4, 4, {0, 0, 8, 8}, 4);
  PipelineParams pp = init_params(2, 4, 4, 6, 1, 9);
  RotationHeadParams head = zero_like(pp.head);
  const Mat3 r = rotation_head(f, head);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(r(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("rotation head bias drives a quarter turn about z") {
  const RoiFeature f = random_feature(1, 4, 4, {0, 0, 8, 8}, 4);
  RotationHeadParams p;
  p.w1 = Eigen::MatrixXd::Zero(2, 16);
  p.b1 = Eigen::VectorXd::Zero(2);
  p.w2 = Eigen::MatrixXd::Zero(3, 2);
  p.b2 = Eigen::VectorXd::Zero(3);
  p.b2[0] = 3.14159265358979323846 / 2.0;
  const Mat3 r = rotation_head(f, p);
  const Vec3 mapped = r * Vec3{1, 0, 0};
  CHECK(mapped.x == doctest::Approx(0.0));
  CHECK(mapped.y == doctest::Approx(1.0));
  CHECK(mapped.z == doctest::Approx(0.0));
}

TEST_CASE("rotation head output is orthonormal with det +1") {
  const RoiFeature f = random_feature(2, 6, 7, {0, 0, 8, 8}, 11);
  PipelineParams pp = init_params(2, 4, 4, 6, 1, 31);
  RotationHeadParams head = pp.head;
  Rng rng(32);
  for (Eigen::Index i = 0; i < head.w2.size(); ++i) head.w2(i) = rng.normal();
  for (Eigen::Index i = 0; i < head.b2.size(); ++i) head.b2(i) = rng.normal();
  const Mat3 r = rotation_head(f, head);
  const Mat3 should_be_identity = r.transposed() * r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(should_be_identity(i, j) ==
            doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
  CHECK(mat3_det(r) == doctest::Approx(1.0));
}

TEST_CASE("rotation_head_backward matches central differences") {
  const RoiFeature f = random_feature(1, 5, 5, {0, 0, 8, 8}, 13);
  PipelineParams pp = init_params(1, 4, 4, 3, 1, 41);
  RotationHeadParams p = pp.head;
  Rng rng(42);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i)
    p.w2(i) = rng.normal() * 0.3;
  for (Eigen::Index i = 0; i < p.b2.size(); ++i)
    p.b2(i) = rng.normal() * 0.3;

  Mat3 g;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g(i, j) = rng.normal();
  const auto loss = [&]() {
    const Mat3 r = rotation_head(f, p);
    double sum = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) sum += g(i, j) * r(i, j);
    return sum;
  };

  RotationHeadCache cache;
  rotation_head(f, p, &cache);
  RotationHeadParams grads = zero_like(p);
  rotation_head_backward(p, cache, g, grads);

  const double h = 1e-6;
  const auto param_check = [&](double* coeff, double analytic) {
    const double keep = *coeff;
    *coeff = keep + h;
    const double up = loss();
    *coeff = keep - h;
    const double dn = loss();
    *coeff = keep;
    CHECK((up - dn) / (2 * h) == doctest::Approx(analytic).epsilon(1e-4));
  };
  param_check(&p.w1(0, 3), grads.w1(0, 3));
  param_check(&p.b1(1), grads.b1(1));
  param_check(&p.w2(1, 2), grads.w2(1, 2));
  param_check(&p.b2(0), grads.b2(0));
  param_check(&p.b2(2), grads.b2(2));
}

TEST_CASE("select_reference prefers the tracked mesh") {
  const Mesh prev = translated(make_tetra(), {5, 0, 0});
  std::map<int, Mesh> means{{1, make_cube()}};
  Detection d;
  d.class_id = 1;
  const RoiFeature f = random_feature(1, 4, 4, {0, 0, 8, 8}, 3);
  PipelineParams pp = init_params(1, 4, 4, 4, 1, 3);

  const Mesh tracked = select_reference(d, prev, means, f, pp.head);
  REQUIRE(tracked.vertices.size() == prev.vertices.size());
  CHECK(tracked.vertices[1].x == prev.vertices[1].x);

  // Untracked: mean shape, zero head leaves it unrotated.
  const Mesh fresh = select_reference(d, std::nullopt, means, f, pp.head);
  REQUIRE(fresh.vertices.size() == make_cube().vertices.size());
  CHECK(fresh.vertices[0].x == doctest::Approx(make_cube().vertices[0].x));

  d.class_id = 9;
  CHECK_THROWS_AS(select_reference(d, std::nullopt, means, f, pp.head),
                  ConfigError);
}

TEST_CASE("select_reference applies the head rotation about the centroid") {
  std::map<int, Mesh> means{{2, translated(make_cube(), {10, 0, 0})}};
  Detection d;
  d.class_id = 2;
  const RoiFeature f = random_feature(1, 4, 4, {0, 0, 8, 8}, 3);
  RotationHeadParams head;
  head.w1 = Eigen::MatrixXd::Zero(2, 16);
  head.b1 = Eigen::VectorXd::Zero(2);
  head.w2 = Eigen::MatrixXd::Zero(3, 2);
  head.b2 = Eigen::VectorXd::Zero(3);
  head.b2[0] = 3.14159265358979323846 / 2.0;  // quarter turn about z

  const Mesh rot = select_reference(d, std::nullopt, means, f, head);
  // The centroid stays put; a corner at centroid + (-.5,-.5,-.5) maps to
  // centroid + (.5,-.5,-.5) under Rz(90deg).
  const Vec3 c = centroid(rot);
  CHECK(c.x == doctest::Approx(10.0));
  CHECK(c.y == doctest::Approx(0.0));
  bool found = false;
  for (const Vec3& v : rot.vertices)
    if (std::abs(v.x - 10.5) < 1e-9 && std::abs(v.y + 0.5) < 1e-9 &&
        std::abs(v.z + 0.5) < 1e-9)
      found = true;
  CHECK(found);
}

TEST_CASE("augment_reference rotates rigidly and adds calibrated noise") {
  const Mesh base = make_sphere(1.0, 12, 24);

  SUBCASE("pure rotation is an isometry about the centroid") {
    const Mesh aug = augment_reference(base, 0.5, 0.0, 123);
    REQUIRE(aug.vertices.size() == base.vertices.size());
    const Vec3 c0 = centroid(base);
    const Vec3 c1 = centroid(aug);
    CHECK(c1.x == doctest::Approx(c0.x).epsilon(1e-9));
    CHECK(c1.y == doctest::Approx(c0.y).epsilon(1e-9));
    // Edge lengths survive the rotation.
    for (std::size_t k = 0; k < 20; ++k) {
      const auto& face = base.faces[k * 7 % base.faces.size()];
      const double before = norm(base.vertices[face[0]] - base.vertices[face[1]]);
      const double after = norm(aug.vertices[face[0]] - aug.vertices[face[1]]);
      CHECK(after == doctest::Approx(before).epsilon(1e-9));
    }
    // And something actually rotated.
    double moved = 0.0;
    for (std::size_t i = 0; i < base.vertices.size(); ++i)
      moved += norm(aug.vertices[i] - base.vertices[i]);
    CHECK(moved > 0.01);
  }

  SUBCASE("gaussian displacement magnitude matches the chi distribution") {
    const double sigma = 0.05;
    double total = 0.0;
    long count = 0;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
      const Mesh aug = augment_reference(base, 0.0, sigma, seed);
      for (std::size_t i = 0; i < base.vertices.size(); ++i) {
        total += norm(aug.vertices[i] - base.vertices[i]);
        ++count;
      }
    }
    // Mean length of a 3D isotropic Gaussian step: sigma * 2 * sqrt(2/pi).
    const double expected = sigma * 2.0 * std::sqrt(2.0 / 3.14159265358979323846);
    CHECK(total / count == doctest::Approx(expected).epsilon(0.05));
  }

  SUBCASE("same seed reproduces the same augmentation") {
    const Mesh a = augment_reference(base, 0.3, 0.02, 99);
    const Mesh b = augment_reference(base, 0.3, 0.02, 99);
    const Mesh c = augment_reference(base, 0.3, 0.02, 100);
    REQUIRE(a.vertices.size() == b.vertices.size());
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.vertices.size(); ++i) {
      if (a.vertices[i].x != b.vertices[i].x) all_equal = false;
      if (a.vertices[i].x != c.vertices[i].x) any_diff = true;
    }
    CHECK(all_equal);
    CHECK(any_diff);
  }

  CHECK_THROWS_AS(augment_reference(base, 0.1, -0.1, 5), ArgumentError);
}

TEST_CASE("depth extent and its normalization") {
  const Mesh cam_mesh = translated(make_cube(), {0.3, -0.2, 5.0});
  const DepthExtent d = depth_extent(cam_mesh);
  CHECK(d.z_near == doctest::Approx(4.5));
  CHECK(d.z_far == doctest::Approx(5.5));
  CHECK(d.dz == doctest::Approx(1.0));
  CHECK(d.z_c == doctest::Approx(5.0));
  CHECK(normalize_extent(d.dz, d.z_c, 10.0, 1.0) == doctest::Approx(2.0));
  CHECK(normalize_extent(2.0, 4.0, 6.0, 3.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(normalize_extent(1.0, 0.0, 10.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(normalize_extent(1.0, 5.0, 10.0, 0.0), ArgumentError);
  CHECK_THROWS_AS(depth_extent(Mesh{}), ArgumentError);
}

TEST_CASE("checkpoints round trip exactly") {
  const PipelineParams params = init_params(3, 16, 24, 12, 3, 2718);
  const std::string path = "test_refine_ckpt.bin";
  save_checkpoint(params, path);
  const PipelineParams back = load_checkpoint(path);
  CHECK(back.channels == params.channels);
  CHECK(back.e_dim == params.e_dim);
  CHECK(back.hidden == params.hidden);
  CHECK(back.head_hidden == params.head_hidden);
  REQUIRE(back.stages.size() == params.stages.size());
  CHECK(back.head.w1 == params.head.w1);
  CHECK(back.head.b1 == params.head.b1);
  CHECK(back.head.w2 == params.head.w2);
  CHECK(back.head.b2 == params.head.b2);
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    CHECK(back.stages[s].conv_w == params.stages[s].conv_w);
    CHECK(back.stages[s].conv_b == params.stages[s].conv_b);
    CHECK(back.stages[s].out_w == params.stages[s].out_w);
    CHECK(back.stages[s].out_b == params.stages[s].out_b);
    for (int k = 0; k < 3; ++k) {
      CHECK(back.stages[s].gcn[k].w0 == params.stages[s].gcn[k].w0);
      CHECK(back.stages[s].gcn[k].w1 == params.stages[s].gcn[k].w1);
      CHECK(back.stages[s].gcn[k].b == params.stages[s].gcn[k].b);
    }
  }
  // Saving the loaded params writes identical bytes.
  const std::string path2 = "test_refine_ckpt2.bin";
  save_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(!b1.empty());
  std::remove(path.c_str());
  std::remove(path2.c_str());
  CHECK_THROWS_AS(load_checkpoint("missing_ckpt.bin"), ArgumentError);
}

TEST_CASE("vertices_matrix and set_vertices round trip") {
  const Mesh m = make_tetra();
  const Eigen::MatrixXd v = vertices_matrix(m);
  REQUIRE(v.rows() == 4);
  REQUIRE(v.cols() == 3);
  CHECK(v(1, 0) == doctest::Approx(0.4));
  Mesh out = m;
  Eigen::MatrixXd shifted = v;
  shifted.col(2).array() += 1.5;
  set_vertices(out, shifted);
  CHECK(out.vertices[0].z == doctest::Approx(1.5));
  CHECK_THROWS_AS(set_vertices(out, Eigen::MatrixXd::Zero(4, 2)),
                  ArgumentError);
}
