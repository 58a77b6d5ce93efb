#pragma once

#include <cstdint>
#include <vector>

#include "meshtrace/mesh.hpp"
#include "meshtrace/sampling.hpp"

namespace meshtrace {

struct LossWeights {
  double w_cham = 1.0;
  double w_norm = 0.1;
  double w_edge = 0.1;
};

void validate_weights(const LossWeights& w);

// Bidirectional mean of squared nearest-neighbor distances. Symmetric,
// >= 0, zero iff the point positions match as multisets.
double chamfer(const PointSet& p, const PointSet& q);

// Negated mean absolute cosine between normals under the Chamfer
// nearest-neighbor pairing; in [-2, 0], minimized when matched normals are
// parallel (either orientation).
double normal_distance(const PointSet& p, const PointSet& q);

// Mean squared length over unique undirected edges.
double edge_regularizer(const Mesh& mesh);

struct MeshLossBreakdown {
  double l_cham = 0.0;
  double l_norm = 0.0;
  double l_edge = 0.0;
  double total = 0.0;
};

struct MeshLossResult {
  MeshLossBreakdown parts;
  // d(total)/d(pred vertex), barycentric face choices held fixed.
  std::vector<Vec3> grad;
};

// Weighted Chamfer + normal + edge loss between a predicted mesh and a
// pre-sampled ground-truth point set, with the analytic gradient with
// respect to every predicted vertex. `pred_sample` must have been drawn
// from a mesh with pred's connectivity; its points/normals are recomputed
// from `pred` so the same sample can be reused as vertices move.
MeshLossResult mesh_loss_sampled(const Mesh& pred,
                                 const SurfaceSample& pred_sample,
                                 const PointSet& gt_points,
                                 const LossWeights& weights);

// Convenience wrapper: samples n points from each mesh (pred with `seed`,
// gt with `seed + 1`) and evaluates mesh_loss_sampled.
MeshLossResult mesh_loss(const Mesh& pred, const Mesh& gt, int n_samples,
                         const LossWeights& weights, std::uint64_t seed);

// Re-evaluates a sample's points and face normals from current vertex
// positions (face choices and barycentric coordinates fixed).
void refresh_sample(const Mesh& mesh, SurfaceSample& sample);

}  // namespace meshtrace
