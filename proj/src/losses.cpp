#include "meshtrace/losses.hpp"

#include <cmath>

#include "meshtrace/error.hpp"
#include "meshtrace/nn.hpp"

namespace meshtrace {

void validate_weights(const LossWeights& w) {
  if (w.w_cham < 0 || w.w_norm < 0 || w.w_edge < 0)
    throw ArgumentError("loss weights must be nonnegative");
  if (w.w_cham == 0 && w.w_norm == 0 && w.w_edge == 0)
    throw ArgumentError("at least one loss weight must be positive");
}

namespace {

void require_nonempty(const PointSet& p, const PointSet& q) {
  if (p.points.empty() || q.points.empty())
    throw ArgumentError("point sets must be nonempty");
}

std::vector<int> nearest_indices(const std::vector<Vec3>& queries,
                                 const KdTree& tree) {
  std::vector<int> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    out[i] = tree.nearest(queries[i]).index;
  return out;
}

}  // namespace

double chamfer(const PointSet& p, const PointSet& q) {
  require_nonempty(p, q);
  const KdTree tree_q(q.points);
  const KdTree tree_p(p.points);
  double term_p = 0.0;
  for (const Vec3& pt : p.points) term_p += tree_q.nearest(pt).dist2;
  double term_q = 0.0;
  for (const Vec3& pt : q.points) term_q += tree_p.nearest(pt).dist2;
  return term_p / static_cast<double>(p.size()) +
         term_q / static_cast<double>(q.size());
}

double normal_distance(const PointSet& p, const PointSet& q) {
  require_nonempty(p, q);
  for (const PointSet* ps : {&p, &q})
    for (const Vec3& n : ps->normals)
      if (std::abs(norm(n) - 1.0) > 1e-4)
        throw ArgumentError("normal_distance requires unit normals");
  const KdTree tree_q(q.points);
  const KdTree tree_p(p.points);
  double term_p = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int j = tree_q.nearest(p.points[i]).index;
    term_p += std::abs(dot(p.normals[i], q.normals[j]));
  }
  double term_q = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const int j = tree_p.nearest(q.points[i]).index;
    term_q += std::abs(dot(q.normals[i], p.normals[j]));
  }
  return -(term_p / static_cast<double>(p.size()) +
           term_q / static_cast<double>(q.size()));
}

double edge_regularizer(const Mesh& mesh) {
  const auto edges = unique_edges(mesh);
  if (edges.empty()) throw ArgumentError("mesh has no edges");
  double sum = 0.0;
  for (const auto& [a, b] : edges)
    sum += norm2(mesh.vertices[a] - mesh.vertices[b]);
  return sum / static_cast<double>(edges.size());
}

void refresh_sample(const Mesh& mesh, SurfaceSample& sample) {
  for (std::size_t k = 0; k < sample.face.size(); ++k) {
    const auto& f = mesh.faces[sample.face[k]];
    const auto& w = sample.bary[k];
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    sample.point_set.points[k] = a * w[0] + b * w[1] + c * w[2];
    sample.point_set.normals[k] = normalized(cross(b - a, c - a));
  }
}

namespace {

// Adjoint of n = cross(b-a, c-a) / |cross(b-a, c-a)| with respect to the
// three face vertices, accumulated into grad.
void backprop_face_normal(const Mesh& mesh, int face, const Vec3& g_n,
                          std::vector<Vec3>& grad) {
  const auto& f = mesh.faces[face];
  const Vec3& a = mesh.vertices[f[0]];
  const Vec3& b = mesh.vertices[f[1]];
  const Vec3& c = mesh.vertices[f[2]];
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 cr = cross(e1, e2);
  const double len = norm(cr);
  if (len <= 1e-30) return;
  const Vec3 n = cr / len;
  // d(cr/|cr|) adjoint: g_cr = (g_n - n * dot(n, g_n)) / len.
  const Vec3 g_cr = (g_n - n * dot(n, g_n)) / len;
  // cr = e1 x e2: d/d(e1) pullback is e2 x g_cr, d/d(e2) is g_cr x e1.
  const Vec3 g_e1 = cross(e2, g_cr);
  const Vec3 g_e2 = cross(g_cr, e1);
  grad[f[1]] += g_e1;
  grad[f[2]] += g_e2;
  grad[f[0]] -= g_e1 + g_e2;
}

}  // namespace

MeshLossResult mesh_loss_sampled(const Mesh& pred,
                                 const SurfaceSample& pred_sample,
                                 const PointSet& gt_points,
                                 const LossWeights& weights) {
  validate_weights(weights);
  // Re-derive the sampled points and normals from the current vertex
  // positions so a sample drawn once stays usable as the mesh deforms.
  SurfaceSample sample = pred_sample;
  refresh_sample(pred, sample);
  const PointSet& p = sample.point_set;
  require_nonempty(p, gt_points);

  MeshLossResult result;
  result.grad.assign(pred.vertices.size(), Vec3{});
  const double np = static_cast<double>(p.size());
  const double nq = static_cast<double>(gt_points.size());

  const KdTree tree_q(gt_points.points);
  const KdTree tree_p(p.points);
  const std::vector<int> nn_pq = nearest_indices(p.points, tree_q);
  const std::vector<int> nn_qp = nearest_indices(gt_points.points, tree_p);

  // Gradients are accumulated per sampled point, then pushed through the
  // fixed barycentric weights (positions) and face normals.
  std::vector<Vec3> g_points(p.size(), Vec3{});
  std::vector<Vec3> g_normals(p.size(), Vec3{});

  {
    double term_p = 0.0, term_q = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec3 d = p.points[i] - gt_points.points[nn_pq[i]];
      term_p += norm2(d);
      g_points[i] += d * (2.0 * weights.w_cham / np);
    }
    for (std::size_t j = 0; j < gt_points.size(); ++j) {
      const int i = nn_qp[j];
      const Vec3 d = p.points[i] - gt_points.points[j];
      term_q += norm2(d);
      g_points[i] += d * (2.0 * weights.w_cham / nq);
    }
    result.parts.l_cham = term_p / np + term_q / nq;
  }

  {
    double term_p = 0.0, term_q = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec3& u = p.normals[i];
      const Vec3& w = gt_points.normals[nn_pq[i]];
      const double d = dot(u, w);
      term_p += std::abs(d);
      const double sign = d >= 0.0 ? 1.0 : -1.0;
      g_normals[i] -= w * (sign * weights.w_norm / np);
    }
    for (std::size_t j = 0; j < gt_points.size(); ++j) {
      const int i = nn_qp[j];
      const Vec3& u = p.normals[i];
      const Vec3& w = gt_points.normals[j];
      const double d = dot(w, u);
      term_q += std::abs(d);
      const double sign = d >= 0.0 ? 1.0 : -1.0;
      g_normals[i] -= w * (sign * weights.w_norm / nq);
    }
    result.parts.l_norm = -(term_p / np + term_q / nq);
  }

  // Point gradient -> vertices via barycentric weights.
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto& f = pred.faces[sample.face[k]];
    const auto& w = sample.bary[k];
    result.grad[f[0]] += g_points[k] * w[0];
    result.grad[f[1]] += g_points[k] * w[1];
    result.grad[f[2]] += g_points[k] * w[2];
    if (weights.w_norm > 0.0)
      backprop_face_normal(pred, sample.face[k], g_normals[k], result.grad);
  }

  {
    const auto edges = unique_edges(pred);
    if (!edges.empty()) {
      double sum = 0.0;
      const double ne = static_cast<double>(edges.size());
      for (const auto& [a, b] : edges) {
        const Vec3 d = pred.vertices[a] - pred.vertices[b];
        sum += norm2(d);
        result.grad[a] += d * (2.0 * weights.w_edge / ne);
        result.grad[b] -= d * (2.0 * weights.w_edge / ne);
      }
      result.parts.l_edge = sum / ne;
    }
  }

  result.parts.total = weights.w_cham * result.parts.l_cham +
                       weights.w_norm * result.parts.l_norm +
                       weights.w_edge * result.parts.l_edge;
  return result;
}

MeshLossResult mesh_loss(const Mesh& pred, const Mesh& gt, int n_samples,
                         const LossWeights& weights, std::uint64_t seed) {
  const SurfaceSample pred_sample = sample_surface(pred, n_samples, seed);
  const SurfaceSample gt_sample = sample_surface(gt, n_samples, seed + 1);
  return mesh_loss_sampled(pred, pred_sample, gt_sample.point_set, weights);
}

}  // namespace meshtrace
