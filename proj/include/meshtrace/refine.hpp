#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meshtrace/camera.hpp"
#include "meshtrace/mesh.hpp"

namespace meshtrace {

// ---- graph convolution -----------------------------------------------

struct GraphConvParams {
  Eigen::MatrixXd w0;  // self weight, out x in
  Eigen::MatrixXd w1;  // neighbor weight, out x in
  Eigen::VectorXd b;   // out
};

// Sorted neighbor lists derived from the unique edge set.
std::vector<std::vector<int>> mesh_adjacency(const Mesh& mesh);

// out_i = W0 f_i + W1 mean_{j in N(i)} f_j + b. Rows of x are per-vertex
// features. Neighbor mean (not sum) keeps the activation scale independent
// of vertex degree.
Eigen::MatrixXd graph_conv(const Eigen::MatrixXd& x,
                           const std::vector<std::vector<int>>& neighbors,
                           const GraphConvParams& p);

// ---- refinement stages -------------------------------------------------

struct RefineStageParams {
  Eigen::MatrixXd conv_w;  // 1x1 conv: e_dim x channels
  Eigen::VectorXd conv_b;  // e_dim
  std::array<GraphConvParams, 3> gcn;
  Eigen::MatrixXd out_w;   // offset head: 3 x hidden (zero-initialized)
  Eigen::VectorXd out_b;   // 3
};

struct RotationHeadParams {
  Eigen::MatrixXd w1;  // head_hidden x (channels * 16)
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // 3 x head_hidden (zero-initialized: identity rotation)
  Eigen::VectorXd b2;
};

struct PipelineParams {
  int channels = 3;
  int e_dim = 64;
  int hidden = 64;
  int head_hidden = 32;
  RotationHeadParams head;
  std::vector<RefineStageParams> stages;
};

// Xavier-style random weights; offset and rotation output layers start at
// zero so the untrained pipeline is the identity on its reference.
PipelineParams init_params(int channels, int e_dim, int hidden,
                           int head_hidden, int n_stages, std::uint64_t seed);

RefineStageParams zero_like(const RefineStageParams& p);
RotationHeadParams zero_like(const RotationHeadParams& p);
PipelineParams zero_like(const PipelineParams& p);

// ---- vert align ----------------------------------------------------------

// Bilinear sample of every channel at each ROI-normalized coordinate
// (align-corners convention: u=i/(W-1) hits cell center i exactly).
// Behind-camera vertices produce zero rows.
Eigen::MatrixXd vert_align(const RoiFeature& feat,
                           const std::vector<ProjectedVertex>& coords);
Eigen::MatrixXd vert_align(
    const RoiFeature& feat,
    const std::vector<std::pair<double, double>>& coords);

// d(loss)/d(u,v) per vertex given d(loss)/d(sampled values).
std::vector<std::array<double, 2>> vert_align_backward(
    const RoiFeature& feat, const std::vector<ProjectedVertex>& coords,
    const Eigen::MatrixXd& d_sampled);

// ---- stage forward/backward ----------------------------------------------

struct StageCache {
  std::vector<ProjectedVertex> proj;
  Eigen::MatrixXd vref;     // N x 3
  Eigen::MatrixXd sampled;  // N x C
  Eigen::MatrixXd x;        // N x (E+3), input to gcn[0]
  Eigen::MatrixXd s0, z0, h0;
  Eigen::MatrixXd s1, z1, h1;
  Eigen::MatrixXd s2, z2, h2;
};

// phi = VertAlign(conv1x1(R)); delta = GCN(concat(phi, vref));
// returns vref + delta. Face connectivity is the caller's business.
Eigen::MatrixXd mesh_refine_stage(const RoiFeature& feat,
                                  const Eigen::MatrixXd& vref,
                                  const CameraRig& cam,
                                  const std::vector<std::vector<int>>& nbrs,
                                  const RefineStageParams& p,
                                  StageCache* cache = nullptr);

// Accumulates parameter gradients into `grads` (same shapes as the params)
// and returns d(loss)/d(vref), including the path through the projected
// sampling coordinates.
Eigen::MatrixXd mesh_refine_stage_backward(
    const RoiFeature& feat, const RefineStageParams& p,
    const std::vector<std::vector<int>>& nbrs, const StageCache& cache,
    const Eigen::MatrixXd& d_vout, RefineStageParams& grads);

struct PipelineCache {
  std::vector<StageCache> stages;
};

Eigen::MatrixXd refine_vertices(const RoiFeature& feat,
                                const Eigen::MatrixXd& vref,
                                const CameraRig& cam,
                                const std::vector<std::vector<int>>& nbrs,
                                const std::vector<RefineStageParams>& stages,
                                PipelineCache* cache = nullptr);

Eigen::MatrixXd refine_vertices_backward(
    const RoiFeature& feat, const std::vector<RefineStageParams>& stages,
    const std::vector<std::vector<int>>& nbrs, const PipelineCache& cache,
    const Eigen::MatrixXd& d_vout, std::vector<RefineStageParams>& grads);

// Chains all stages over the reference mesh; faces pass through untouched.
Mesh refine_pipeline(const RoiFeature& feat, const Mesh& reference,
                     const CameraRig& cam,
                     const std::vector<RefineStageParams>& stages);

// ---- rotation head ---------------------------------------------------

struct RotationHeadCache {
  Eigen::VectorXd pooled;
  Eigen::VectorXd t1;      // tanh activations
  double angles[3] = {};   // (az, ay, ax)
};

// 4x4 average pool -> dense tanh -> dense -> intrinsic Z-Y-X Euler angles.
// Output is orthonormal with det +1 by construction.
Mat3 rotation_head(const RoiFeature& feat, const RotationHeadParams& p,
                   RotationHeadCache* cache = nullptr);

void rotation_head_backward(const RotationHeadParams& p,
                            const RotationHeadCache& cache, const Mat3& d_rot,
                            RotationHeadParams& grads);

// ---- reference selection & augmentation -----------------------------------

Vec3 centroid(const Mesh& mesh);
Mesh rotate_about_centroid(const Mesh& mesh, const Mat3& rot);

// Eq.-(3) style choice: tracked objects reuse the previous frame's predicted
// mesh verbatim; new objects get the class mean shape aligned by the
// rotation head.
Mesh select_reference(const Detection& curr,
                      const std::optional<Mesh>& prev_mesh,
                      const std::map<int, Mesh>& mean_shapes,
                      const RoiFeature& feat, const RotationHeadParams& head);

// Random rotation (Euler angles uniform in +-rot_range radians, about the
// centroid) followed by i.i.d. Gaussian vertex noise of std sigma.
Mesh augment_reference(const Mesh& gt, double rot_range, double sigma,
                       std::uint64_t seed);

// ---- depth extent -------------------------------------------------------

struct DepthExtent {
  double z_near = 0.0;
  double z_far = 0.0;
  double dz = 0.0;
  double z_c = 0.0;
  double dz_bar = 0.0;
};

// Vertex z range of a camera-space mesh; dz_bar is left for
// normalize_extent.
DepthExtent depth_extent(const Mesh& mesh_in_camera);

// dz_bar = (dz / z_c) * (f / h).
double normalize_extent(double dz, double z_c, double f, double h);

// ---- checkpoints -----------------------------------------------------

void save_checkpoint(const PipelineParams& params, const std::string& path);
PipelineParams load_checkpoint(const std::string& path);

// ---- mesh/eigen conversion ----------------------------------------------

Eigen::MatrixXd vertices_matrix(const Mesh& mesh);
void set_vertices(Mesh& mesh, const Eigen::MatrixXd& v);

}  // namespace meshtrace
