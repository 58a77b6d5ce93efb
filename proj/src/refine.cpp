#include "meshtrace/refine.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "meshtrace/error.hpp"
#include "meshtrace/rng.hpp"

namespace meshtrace {

std::vector<std::vector<int>> mesh_adjacency(const Mesh& mesh) {
  std::vector<std::vector<int>> nbrs(mesh.vertex_count());
  for (const auto& [a, b] : unique_edges(mesh)) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  for (auto& list : nbrs) std::sort(list.begin(), list.end());
  return nbrs;
}

namespace {

// Neighbor mean rather than sum: keeps the activation scale independent of
// vertex degree, which varies a lot on simplified meshes.
Eigen::MatrixXd neighbor_mean(const Eigen::MatrixXd& x,
                              const std::vector<std::vector<int>>& nbrs) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (nbrs[i].empty()) continue;
    for (int j : nbrs[i]) s.row(i) += x.row(j);
    s.row(i) /= double(nbrs[i].size());
  }
  return s;
}

Eigen::MatrixXd gc_forward(const Eigen::MatrixXd& x,
                           const std::vector<std::vector<int>>& nbrs,
                           const GraphConvParams& p, Eigen::MatrixXd* s_out) {
  if (p.w0.cols() != x.cols() || p.w1.cols() != x.cols() ||
      p.w0.rows() != p.w1.rows() || p.b.size() != p.w0.rows())
    throw ArgumentError("graph_conv: dimension mismatch");
  Eigen::MatrixXd s = neighbor_mean(x, nbrs);
  Eigen::MatrixXd z = x * p.w0.transpose() + s * p.w1.transpose();
  z.rowwise() += p.b.transpose();
  if (s_out) *s_out = std::move(s);
  return z;
}

// dZ -> dX; accumulates parameter gradients. The mean weights 1/deg(i)
// belong to the destination row i, so the transpose scatters row i's
// contribution to its neighbors with that same factor.
Eigen::MatrixXd gc_backward(const Eigen::MatrixXd& dz,
                            const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& s,
                            const std::vector<std::vector<int>>& nbrs,
                            const GraphConvParams& p, GraphConvParams& g) {
  g.w0 += dz.transpose() * x;
  g.w1 += dz.transpose() * s;
  g.b += dz.colwise().sum().transpose();
  Eigen::MatrixXd dx = dz * p.w0;
  const Eigen::MatrixXd t = dz * p.w1;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    if (nbrs[i].empty()) continue;
    const double inv = 1.0 / double(nbrs[i].size());
    for (int j : nbrs[i]) dx.row(j) += inv * t.row(i);
  }
  return dx;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& dh,
                              const Eigen::MatrixXd& z) {
  return ((z.array() > 0.0).cast<double>() * dh.array()).matrix();
}

}  // namespace

Eigen::MatrixXd graph_conv(const Eigen::MatrixXd& x,
                           const std::vector<std::vector<int>>& neighbors,
                           const GraphConvParams& p) {
  if (neighbors.size() != std::size_t(x.rows()))
    throw ArgumentError("graph_conv: adjacency/feature size mismatch");
  return gc_forward(x, neighbors, p, nullptr);
}

// ---- vert align ----------------------------------------------------------

namespace {

struct BilinearCell {
  int x0 = 0, y0 = 0;
  double fx = 0.0, fy = 0.0;
};

BilinearCell locate(const RoiFeature& feat, double u, double v) {
  BilinearCell c;
  const double gx = u * (feat.width - 1);
  const double gy = v * (feat.height - 1);
  c.x0 = std::min(static_cast<int>(std::floor(gx)), feat.width - 2);
  c.y0 = std::min(static_cast<int>(std::floor(gy)), feat.height - 2);
  c.x0 = std::max(c.x0, 0);
  c.y0 = std::max(c.y0, 0);
  c.fx = gx - c.x0;
  c.fy = gy - c.y0;
  return c;
}

}  // namespace

Eigen::MatrixXd vert_align(const RoiFeature& feat,
                           const std::vector<ProjectedVertex>& coords) {
  validate_feature(feat);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(coords.size()), feat.channels);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const ProjectedVertex& pv = coords[i];
    if (pv.behind) continue;
    const BilinearCell c = locate(feat, pv.u, pv.v);
    for (int ch = 0; ch < feat.channels; ++ch) {
      const double f00 = feat.at(ch, c.y0, c.x0);
      const double f01 = feat.at(ch, c.y0, c.x0 + 1);
      const double f10 = feat.at(ch, c.y0 + 1, c.x0);
      const double f11 = feat.at(ch, c.y0 + 1, c.x0 + 1);
      out(static_cast<Eigen::Index>(i), ch) =
          (1.0 - c.fy) * ((1.0 - c.fx) * f00 + c.fx * f01) +
          c.fy * ((1.0 - c.fx) * f10 + c.fx * f11);
    }
  }
  return out;
}

Eigen::MatrixXd vert_align(
    const RoiFeature& feat,
    const std::vector<std::pair<double, double>>& coords) {
  std::vector<ProjectedVertex> pv(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!(coords[i].first >= 0.0 && coords[i].first <= 1.0 &&
          coords[i].second >= 0.0 && coords[i].second <= 1.0))
      throw ArgumentError("vert_align: coordinate outside [0,1]^2");
    pv[i].u = coords[i].first;
    pv[i].v = coords[i].second;
  }
  return vert_align(feat, pv);
}

std::vector<std::array<double, 2>> vert_align_backward(
    const RoiFeature& feat, const std::vector<ProjectedVertex>& coords,
    const Eigen::MatrixXd& d_sampled) {
  std::vector<std::array<double, 2>> duv(coords.size(), {0.0, 0.0});
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const ProjectedVertex& pv = coords[i];
    if (pv.behind) continue;
    const BilinearCell c = locate(feat, pv.u, pv.v);
    double du = 0.0, dv = 0.0;
    for (int ch = 0; ch < feat.channels; ++ch) {
      const double f00 = feat.at(ch, c.y0, c.x0);
      const double f01 = feat.at(ch, c.y0, c.x0 + 1);
      const double f10 = feat.at(ch, c.y0 + 1, c.x0);
      const double f11 = feat.at(ch, c.y0 + 1, c.x0 + 1);
      const double g = d_sampled(static_cast<Eigen::Index>(i), ch);
      du += g * (feat.width - 1) *
            ((1.0 - c.fy) * (f01 - f00) + c.fy * (f11 - f10));
      dv += g * (feat.height - 1) *
            ((1.0 - c.fx) * (f10 - f00) + c.fx * (f11 - f01));
    }
    duv[i] = {du, dv};
  }
  return duv;
}

// ---- stage forward/backward ----------------------------------------------

Eigen::MatrixXd mesh_refine_stage(const RoiFeature& feat,
                                  const Eigen::MatrixXd& vref,
                                  const CameraRig& cam,
                                  const std::vector<std::vector<int>>& nbrs,
                                  const RefineStageParams& p,
                                  StageCache* cache) {
  if (vref.cols() != 3) throw ArgumentError("mesh_refine_stage: vref must be Nx3");
  if (std::size_t(vref.rows()) != nbrs.size())
    throw ArgumentError("mesh_refine_stage: adjacency size mismatch");
  const Eigen::Index n = vref.rows();

  std::vector<Vec3> verts(n);
  for (Eigen::Index i = 0; i < n; ++i)
    verts[i] = {vref(i, 0), vref(i, 1), vref(i, 2)};
  std::vector<ProjectedVertex> proj = project_vertices(verts, cam, feat.box);

  Eigen::MatrixXd sampled = vert_align(feat, proj);
  Eigen::MatrixXd phi = sampled * p.conv_w.transpose();
  phi.rowwise() += p.conv_b.transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    if (proj[i].behind) phi.row(i).setZero();

  Eigen::MatrixXd x(n, phi.cols() + 3);
  x << phi, vref;

  StageCache local;
  StageCache& c = cache ? *cache : local;
  c.proj = std::move(proj);
  c.vref = vref;
  c.sampled = std::move(sampled);
  c.x = std::move(x);

  c.z0 = gc_forward(c.x, nbrs, p.gcn[0], &c.s0);
  c.h0 = relu(c.z0);
  c.z1 = gc_forward(c.h0, nbrs, p.gcn[1], &c.s1);
  c.h1 = relu(c.z1);
  c.z2 = gc_forward(c.h1, nbrs, p.gcn[2], &c.s2);
  c.h2 = relu(c.z2);

  Eigen::MatrixXd delta = c.h2 * p.out_w.transpose();
  delta.rowwise() += p.out_b.transpose();
  return vref + delta;
}

Eigen::MatrixXd mesh_refine_stage_backward(
    const RoiFeature& feat, const RefineStageParams& p,
    const std::vector<std::vector<int>>& nbrs, const StageCache& cache,
    const Eigen::MatrixXd& d_vout, RefineStageParams& grads) {
  // Identity branch: vout = vref + delta.
  Eigen::MatrixXd d_vref = d_vout;

  // Offset head.
  grads.out_w += d_vout.transpose() * cache.h2;
  grads.out_b += d_vout.colwise().sum().transpose();
  Eigen::MatrixXd dh2 = d_vout * p.out_w;

  Eigen::MatrixXd dz2 = relu_backward(dh2, cache.z2);
  Eigen::MatrixXd dh1 =
      gc_backward(dz2, cache.h1, cache.s2, nbrs, p.gcn[2], grads.gcn[2]);
  Eigen::MatrixXd dz1 = relu_backward(dh1, cache.z1);
  Eigen::MatrixXd dh0 =
      gc_backward(dz1, cache.h0, cache.s1, nbrs, p.gcn[1], grads.gcn[1]);
  Eigen::MatrixXd dz0 = relu_backward(dh0, cache.z0);
  Eigen::MatrixXd dx =
      gc_backward(dz0, cache.x, cache.s0, nbrs, p.gcn[0], grads.gcn[0]);

  const Eigen::Index e_dim = p.conv_w.rows();
  Eigen::MatrixXd dphi = dx.leftCols(e_dim);
  d_vref += dx.rightCols(3);

  for (Eigen::Index i = 0; i < dphi.rows(); ++i)
    if (cache.proj[i].behind) dphi.row(i).setZero();
  grads.conv_w += dphi.transpose() * cache.sampled;
  grads.conv_b += dphi.colwise().sum().transpose();

  // Through the bilinear sample into the projected coordinates, then through
  // the projection Jacobian into the reference vertices.
  Eigen::MatrixXd d_sampled = dphi * p.conv_w;
  const std::vector<std::array<double, 2>> duv =
      vert_align_backward(feat, cache.proj, d_sampled);
  for (Eigen::Index i = 0; i < d_vref.rows(); ++i) {
    const auto& j = cache.proj[i].jac;
    for (int a = 0; a < 3; ++a)
      d_vref(i, a) += j[0][a] * duv[i][0] + j[1][a] * duv[i][1];
  }
  return d_vref;
}

Eigen::MatrixXd refine_vertices(const RoiFeature& feat,
                                const Eigen::MatrixXd& vref,
                                const CameraRig& cam,
                                const std::vector<std::vector<int>>& nbrs,
                                const std::vector<RefineStageParams>& stages,
                                PipelineCache* cache) {
  if (stages.empty()) throw ArgumentError("refine_vertices: no stages");
  if (cache) cache->stages.resize(stages.size());
  Eigen::MatrixXd v = vref;
  for (std::size_t l = 0; l < stages.size(); ++l)
    v = mesh_refine_stage(feat, v, cam, nbrs, stages[l],
                          cache ? &cache->stages[l] : nullptr);
  return v;
}

Eigen::MatrixXd refine_vertices_backward(
    const RoiFeature& feat, const std::vector<RefineStageParams>& stages,
    const std::vector<std::vector<int>>& nbrs, const PipelineCache& cache,
    const Eigen::MatrixXd& d_vout, std::vector<RefineStageParams>& grads) {
  if (grads.size() != stages.size())
    throw ArgumentError("refine_vertices_backward: grads size mismatch");
  Eigen::MatrixXd d = d_vout;
  for (std::size_t l = stages.size(); l-- > 0;)
    d = mesh_refine_stage_backward(feat, stages[l], nbrs, cache.stages[l], d,
                                   grads[l]);
  return d;
}

Mesh refine_pipeline(const RoiFeature& feat, const Mesh& reference,
                     const CameraRig& cam,
                     const std::vector<RefineStageParams>& stages) {
  validate_mesh(reference);
  const std::vector<std::vector<int>> nbrs = mesh_adjacency(reference);
  const Eigen::MatrixXd v =
      refine_vertices(feat, vertices_matrix(reference), cam, nbrs, stages);
  Mesh out;
  out.faces = reference.faces;
  set_vertices(out, v);
  return out;
}

// ---- rotation head ---------------------------------------------------

namespace {

Eigen::VectorXd pool_4x4(const RoiFeature& feat) {
  if (feat.height < 4 || feat.width < 4)
    throw ArgumentError("rotation_head: feature grid must be at least 4x4");
  Eigen::VectorXd pooled(feat.channels * 16);
  for (int c = 0; c < feat.channels; ++c)
    for (int by = 0; by < 4; ++by)
      for (int bx = 0; bx < 4; ++bx) {
        const int y0 = by * feat.height / 4, y1 = (by + 1) * feat.height / 4;
        const int x0 = bx * feat.width / 4, x1 = (bx + 1) * feat.width / 4;
        double sum = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) sum += feat.at(c, y, x);
        pooled[(c * 4 + by) * 4 + bx] = sum / ((y1 - y0) * (x1 - x0));
      }
  return pooled;
}

void euler_pieces(const double angles[3], Mat3& rz, Mat3& ry, Mat3& rx,
                  Mat3& dz, Mat3& dy, Mat3& dx) {
  const double cz = std::cos(angles[0]), sz = std::sin(angles[0]);
  const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
  const double cx = std::cos(angles[2]), sx = std::sin(angles[2]);
  rz = Mat3::identity();
  rz(0, 0) = cz; rz(0, 1) = -sz; rz(1, 0) = sz; rz(1, 1) = cz;
  ry = Mat3::identity();
  ry(0, 0) = cy; ry(0, 2) = sy; ry(2, 0) = -sy; ry(2, 2) = cy;
  rx = Mat3::identity();
  rx(1, 1) = cx; rx(1, 2) = -sx; rx(2, 1) = sx; rx(2, 2) = cx;
  dz = Mat3{};
  dz(0, 0) = -sz; dz(0, 1) = -cz; dz(1, 0) = cz; dz(1, 1) = -sz;
  dy = Mat3{};
  dy(0, 0) = -sy; dy(0, 2) = cy; dy(2, 0) = -cy; dy(2, 2) = -sy;
  dx = Mat3{};
  dx(1, 1) = -sx; dx(1, 2) = -cx; dx(2, 1) = cx; dx(2, 2) = -sx;
}

}  // namespace

Mat3 rotation_head(const RoiFeature& feat, const RotationHeadParams& p,
                   RotationHeadCache* cache) {
  validate_feature(feat);
  Eigen::VectorXd pooled = pool_4x4(feat);
  if (p.w1.cols() != pooled.size())
    throw ArgumentError("rotation_head: weight/feature size mismatch");
  Eigen::VectorXd t1 = (p.w1 * pooled + p.b1).array().tanh().matrix();
  Eigen::VectorXd a = p.w2 * t1 + p.b2;
  if (a.size() != 3) throw ArgumentError("rotation_head: output must be 3 angles");
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->t1 = t1;
    cache->angles[0] = a[0];
    cache->angles[1] = a[1];
    cache->angles[2] = a[2];
  }
  return rotation_zyx(a[0], a[1], a[2]);
}

void rotation_head_backward(const RotationHeadParams& p,
                            const RotationHeadCache& cache, const Mat3& d_rot,
                            RotationHeadParams& grads) {
  Mat3 rz, ry, rx, dz, dy, dx;
  euler_pieces(cache.angles, rz, ry, rx, dz, dy, dx);
  const Mat3 d_az = dz * ry * rx;
  const Mat3 d_ay = rz * dy * rx;
  const Mat3 d_ax = rz * ry * dx;
  Eigen::Vector3d da = Eigen::Vector3d::Zero();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      da[0] += d_rot(r, c) * d_az(r, c);
      da[1] += d_rot(r, c) * d_ay(r, c);
      da[2] += d_rot(r, c) * d_ax(r, c);
    }
  grads.w2 += da * cache.t1.transpose();
  grads.b2 += da;
  const Eigen::VectorXd dt1 = p.w2.transpose() * da;
  const Eigen::VectorXd dz1 =
      (dt1.array() * (1.0 - cache.t1.array().square())).matrix();
  grads.w1 += dz1 * cache.pooled.transpose();
  grads.b1 += dz1;
}

// ---- reference selection & augmentation -----------------------------------

Vec3 centroid(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw ArgumentError("centroid: empty mesh");
  Vec3 c{};
  for (const Vec3& v : mesh.vertices) c += v;
  return c / static_cast<double>(mesh.vertices.size());
}

Mesh rotate_about_centroid(const Mesh& mesh, const Mat3& rot) {
  const Vec3 c = centroid(mesh);
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v = rot * (v - c) + c;
  for (Vec3& n : out.normals) n = rot * n;
  return out;
}

Mesh select_reference(const Detection& curr,
                      const std::optional<Mesh>& prev_mesh,
                      const std::map<int, Mesh>& mean_shapes,
                      const RoiFeature& feat, const RotationHeadParams& head) {
  if (prev_mesh) return *prev_mesh;
  const auto it = mean_shapes.find(curr.class_id);
  if (it == mean_shapes.end())
    throw ConfigError("no mean shape for class " +
                      std::to_string(curr.class_id));
  return rotate_about_centroid(it->second, rotation_head(feat, head));
}

Mesh augment_reference(const Mesh& gt, double rot_range, double sigma,
                       std::uint64_t seed) {
  if (sigma < 0.0) throw ArgumentError("augment_reference: negative sigma");
  Rng rng(seed);
  const double az = (rng.uniform() * 2.0 - 1.0) * rot_range;
  const double ay = (rng.uniform() * 2.0 - 1.0) * rot_range;
  const double ax = (rng.uniform() * 2.0 - 1.0) * rot_range;
  Mesh out = rotate_about_centroid(gt, rotation_zyx(az, ay, ax));
  for (Vec3& v : out.vertices) {
    v.x += rng.normal() * sigma;
    v.y += rng.normal() * sigma;
    v.z += rng.normal() * sigma;
  }
  out.normals.clear();  // noise invalidates them
  return out;
}

// ---- depth extent -------------------------------------------------------

DepthExtent depth_extent(const Mesh& mesh_in_camera) {
  if (mesh_in_camera.vertices.empty())
    throw ArgumentError("depth_extent: empty mesh");
  DepthExtent d;
  d.z_near = d.z_far = mesh_in_camera.vertices[0].z;
  for (const Vec3& v : mesh_in_camera.vertices) {
    d.z_near = std::min(d.z_near, v.z);
    d.z_far = std::max(d.z_far, v.z);
  }
  d.dz = d.z_far - d.z_near;
  d.z_c = 0.5 * (d.z_far + d.z_near);
  return d;
}

double normalize_extent(double dz, double z_c, double f, double h) {
  if (z_c <= 0.0) throw ArgumentError("normalize_extent: z_c must be positive");
  if (h <= 0.0) throw ArgumentError("normalize_extent: h must be positive");
  return dz / z_c * (f / h);
}

// ---- parameter construction ------------------------------------------

namespace {

Eigen::MatrixXd xavier(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = (rng.uniform() * 2.0 - 1.0) * s;
  return m;
}

}  // namespace

PipelineParams init_params(int channels, int e_dim, int hidden,
                           int head_hidden, int n_stages, std::uint64_t seed) {
  if (channels < 1 || e_dim < 1 || hidden < 1 || head_hidden < 1 ||
      n_stages < 1)
    throw ArgumentError("init_params: nonpositive dimension");
  Rng rng(seed);
  PipelineParams p;
  p.channels = channels;
  p.e_dim = e_dim;
  p.hidden = hidden;
  p.head_hidden = head_hidden;
  p.head.w1 = xavier(head_hidden, channels * 16, rng);
  p.head.b1 = Eigen::VectorXd::Zero(head_hidden);
  p.head.w2 = Eigen::MatrixXd::Zero(3, head_hidden);
  p.head.b2 = Eigen::VectorXd::Zero(3);
  for (int l = 0; l < n_stages; ++l) {
    RefineStageParams s;
    s.conv_w = xavier(e_dim, channels, rng);
    s.conv_b = Eigen::VectorXd::Zero(e_dim);
    const int in0 = e_dim + 3;
    s.gcn[0].w0 = xavier(hidden, in0, rng);
    s.gcn[0].w1 = xavier(hidden, in0, rng);
    s.gcn[0].b = Eigen::VectorXd::Zero(hidden);
    for (int k = 1; k < 3; ++k) {
      s.gcn[k].w0 = xavier(hidden, hidden, rng);
      s.gcn[k].w1 = xavier(hidden, hidden, rng);
      s.gcn[k].b = Eigen::VectorXd::Zero(hidden);
    }
    s.out_w = Eigen::MatrixXd::Zero(3, hidden);
    s.out_b = Eigen::VectorXd::Zero(3);
    p.stages.push_back(std::move(s));
  }
  return p;
}

RefineStageParams zero_like(const RefineStageParams& p) {
  RefineStageParams z;
  z.conv_w = Eigen::MatrixXd::Zero(p.conv_w.rows(), p.conv_w.cols());
  z.conv_b = Eigen::VectorXd::Zero(p.conv_b.size());
  for (int k = 0; k < 3; ++k) {
    z.gcn[k].w0 = Eigen::MatrixXd::Zero(p.gcn[k].w0.rows(), p.gcn[k].w0.cols());
    z.gcn[k].w1 = Eigen::MatrixXd::Zero(p.gcn[k].w1.rows(), p.gcn[k].w1.cols());
    z.gcn[k].b = Eigen::VectorXd::Zero(p.gcn[k].b.size());
  }
  z.out_w = Eigen::MatrixXd::Zero(p.out_w.rows(), p.out_w.cols());
  z.out_b = Eigen::VectorXd::Zero(p.out_b.size());
  return z;
}

RotationHeadParams zero_like(const RotationHeadParams& p) {
  RotationHeadParams z;
  z.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
  z.b1 = Eigen::VectorXd::Zero(p.b1.size());
  z.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
  z.b2 = Eigen::VectorXd::Zero(p.b2.size());
  return z;
}

PipelineParams zero_like(const PipelineParams& p) {
  PipelineParams z = p;
  z.head = zero_like(p.head);
  z.stages.clear();
  for (const auto& s : p.stages) z.stages.push_back(zero_like(s));
  return z;
}

// ---- checkpoints -----------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'T', 'C', 'K'};

void write_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.append(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

void write_vector(std::string& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v[i];
    out.append(reinterpret_cast<const char*>(&x), sizeof(double));
  }
}

struct PayloadReader {
  const std::string& bytes;
  std::size_t pos;

  double next() {
    if (pos + sizeof(double) > bytes.size())
      throw ParseError("checkpoint: truncated payload");
    double v;
    std::memcpy(&v, bytes.data() + pos, sizeof(double));
    pos += sizeof(double);
    return v;
  }
  void read_matrix(Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = next();
  }
  void read_vector(Eigen::VectorXd& v, Eigen::Index n) {
    v.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = next();
  }
};

}  // namespace

void save_checkpoint(const PipelineParams& params, const std::string& path) {
  nlohmann::ordered_json header;
  header["channels"] = params.channels;
  header["e_dim"] = params.e_dim;
  header["hidden"] = params.hidden;
  header["head_hidden"] = params.head_hidden;
  header["stages"] = params.stages.size();
  const std::string header_str = header.dump();

  std::string out(kCheckpointMagic, 4);
  const std::uint32_t version = 1;
  out.append(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t hlen = header_str.size();
  out.append(reinterpret_cast<const char*>(&hlen), 8);
  out += header_str;

  write_matrix(out, params.head.w1);
  write_vector(out, params.head.b1);
  write_matrix(out, params.head.w2);
  write_vector(out, params.head.b2);
  for (const auto& s : params.stages) {
    write_matrix(out, s.conv_w);
    write_vector(out, s.conv_b);
    for (const auto& g : s.gcn) {
      write_matrix(out, g.w0);
      write_matrix(out, g.w1);
      write_vector(out, g.b);
    }
    write_matrix(out, s.out_w);
    write_vector(out, s.out_b);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open for write: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ArgumentError("write failed: " + path);
}

PipelineParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw ParseError("checkpoint: bad magic");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != 1) throw ParseError("checkpoint: unsupported version");
  std::uint64_t hlen;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  if (16 + hlen > bytes.size()) throw ParseError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad header json: ") + e.what());
  }

  PipelineParams p;
  p.channels = header.at("channels").get<int>();
  p.e_dim = header.at("e_dim").get<int>();
  p.hidden = header.at("hidden").get<int>();
  p.head_hidden = header.at("head_hidden").get<int>();
  const int n_stages = header.at("stages").get<int>();

  PayloadReader reader{bytes, 16 + static_cast<std::size_t>(hlen)};
  reader.read_matrix(p.head.w1, p.head_hidden, p.channels * 16);
  reader.read_vector(p.head.b1, p.head_hidden);
  reader.read_matrix(p.head.w2, 3, p.head_hidden);
  reader.read_vector(p.head.b2, 3);
  for (int l = 0; l < n_stages; ++l) {
    RefineStageParams s;
    reader.read_matrix(s.conv_w, p.e_dim, p.channels);
    reader.read_vector(s.conv_b, p.e_dim);
    const int in0 = p.e_dim + 3;
    for (int k = 0; k < 3; ++k) {
      const int in = k == 0 ? in0 : p.hidden;
      reader.read_matrix(s.gcn[k].w0, p.hidden, in);
      reader.read_matrix(s.gcn[k].w1, p.hidden, in);
      reader.read_vector(s.gcn[k].b, p.hidden);
    }
    reader.read_matrix(s.out_w, 3, p.hidden);
    reader.read_vector(s.out_b, 3);
    p.stages.push_back(std::move(s));
  }
  if (reader.pos != bytes.size())
    throw ParseError("checkpoint: trailing bytes");
  return p;
}

// ---- mesh/eigen conversion ----------------------------------------------

Eigen::MatrixXd vertices_matrix(const Mesh& mesh) {
  Eigen::MatrixXd v(mesh.vertices.size(), 3);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    v(static_cast<Eigen::Index>(i), 0) = mesh.vertices[i].x;
    v(static_cast<Eigen::Index>(i), 1) = mesh.vertices[i].y;
    v(static_cast<Eigen::Index>(i), 2) = mesh.vertices[i].z;
  }
  return v;
}

void set_vertices(Mesh& mesh, const Eigen::MatrixXd& v) {
  if (v.cols() != 3) throw ArgumentError("set_vertices: expected Nx3");
  mesh.vertices.resize(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    mesh.vertices[i] = {v(i, 0), v(i, 1), v(i, 2)};
  mesh.normals.clear();
}

}  // namespace meshtrace
