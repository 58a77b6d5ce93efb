#include "meshtrace/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "meshtrace/error.hpp"
#include "meshtrace/log.hpp"

namespace meshtrace {

namespace {

Eigen::Matrix3d to_eigen(const Mat3& m) {
  Eigen::Matrix3d e;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) e(r, c) = m(r, c);
  return e;
}

Mat3 to_mat3(const Eigen::Matrix3d& e) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = e(r, c);
  return m;
}

Eigen::MatrixXd grad_matrix(const std::vector<Vec3>& grad) {
  Eigen::MatrixXd g(grad.size(), 3);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    g(static_cast<Eigen::Index>(i), 0) = grad[i].x;
    g(static_cast<Eigen::Index>(i), 1) = grad[i].y;
    g(static_cast<Eigen::Index>(i), 2) = grad[i].z;
  }
  return g;
}

template <typename F>
void visit_params(PipelineParams& a, PipelineParams& b, PipelineParams& c,
                  F&& f) {
  f(a.head.w1, b.head.w1, c.head.w1);
  f(a.head.b1, b.head.b1, c.head.b1);
  f(a.head.w2, b.head.w2, c.head.w2);
  f(a.head.b2, b.head.b2, c.head.b2);
  for (std::size_t l = 0; l < a.stages.size(); ++l) {
    RefineStageParams& sa = a.stages[l];
    RefineStageParams& sb = b.stages[l];
    RefineStageParams& sc = c.stages[l];
    f(sa.conv_w, sb.conv_w, sc.conv_w);
    f(sa.conv_b, sb.conv_b, sc.conv_b);
    for (int k = 0; k < 3; ++k) {
      f(sa.gcn[k].w0, sb.gcn[k].w0, sc.gcn[k].w0);
      f(sa.gcn[k].w1, sb.gcn[k].w1, sc.gcn[k].w1);
      f(sa.gcn[k].b, sb.gcn[k].b, sc.gcn[k].b);
    }
    f(sa.out_w, sb.out_w, sc.out_w);
    f(sa.out_b, sb.out_b, sc.out_b);
  }
}

void sgd_step(PipelineParams& params, PipelineParams& grads,
              PipelineParams& velocity, double lr, double momentum) {
  visit_params(params, grads, velocity, [&](auto& p, auto& g, auto& v) {
    v = momentum * v - lr * g;
    p += v;
  });
}

// Per-class mean-shape geometry reused every stage-1 step.
struct MeanEntry {
  const Mesh* mesh = nullptr;
  Vec3 center;
  Eigen::MatrixXd base;  // vertices minus centroid
  std::vector<std::vector<int>> nbrs;
};

std::map<int, MeanEntry> build_mean_entries(
    const std::map<int, Mesh>& mean_shapes) {
  std::map<int, MeanEntry> entries;
  for (const auto& [cls, mesh] : mean_shapes) {
    validate_mesh(mesh);
    MeanEntry e;
    e.mesh = &mesh;
    e.center = centroid(mesh);
    e.base = vertices_matrix(mesh);
    e.base.rowwise() -=
        Eigen::RowVector3d(e.center.x, e.center.y, e.center.z);
    e.nbrs = mesh_adjacency(mesh);
    entries.emplace(cls, std::move(e));
  }
  return entries;
}

const MeanEntry& entry_for(const std::map<int, MeanEntry>& entries, int cls) {
  const auto it = entries.find(cls);
  if (it == entries.end())
    throw ConfigError("no mean shape for class " + std::to_string(cls));
  return it->second;
}

std::uint64_t step_seed(std::uint64_t base, int step) {
  return base ^ (0x9e3779b97f4a7c15ULL *
                 (static_cast<std::uint64_t>(step) + 1));
}

void check_finite(const MeshLossBreakdown& parts, int step) {
  const char* name = nullptr;
  if (!std::isfinite(parts.l_cham)) name = "L_cham";
  else if (!std::isfinite(parts.l_norm)) name = "L_norm";
  else if (!std::isfinite(parts.l_edge)) name = "L_edge";
  else if (!std::isfinite(parts.total)) name = "total";
  if (name)
    throw DegenerateError("training diverged: non-finite " +
                          std::string(name) + " at step " +
                          std::to_string(step));
}

double mesh_diagonal(const Mesh& mesh) {
  return norm(bounding_box(mesh).extent());
}

}  // namespace

TrainResult train(const std::vector<TrainExample>& examples,
                  const std::map<int, Mesh>& mean_shapes,
                  const PipelineParams& init, const TrainConfig& config) {
  if (examples.empty()) throw ArgumentError("train: no examples");
  validate_weights(config.weights);
  const std::map<int, MeanEntry> means = build_mean_entries(mean_shapes);

  // Stage-2 references keep the gt connectivity; cache adjacency per example.
  std::vector<std::vector<std::vector<int>>> gt_nbrs;
  gt_nbrs.reserve(examples.size());
  for (const TrainExample& ex : examples) {
    validate_mesh(ex.gt);
    gt_nbrs.push_back(mesh_adjacency(ex.gt));
  }

  TrainResult result;
  result.params = init;
  PipelineParams velocity = zero_like(init);
  const int total_steps = config.stage1_steps + config.stage2_steps;
  result.log.reserve(total_steps);

  for (int step = 0; step < total_steps; ++step) {
    const int stage = step < config.stage1_steps ? 1 : 2;
    const TrainExample& ex = examples[step % examples.size()];
    const std::uint64_t seed = step_seed(config.seed, step);

    PipelineParams grads = zero_like(result.params);
    MeshLossResult loss;

    if (stage == 1) {
      const MeanEntry& mean = entry_for(means, ex.class_id);
      RotationHeadCache head_cache;
      const Mat3 rot =
          rotation_head(ex.feat, result.params.head, &head_cache);
      Eigen::MatrixXd vref = mean.base * to_eigen(rot).transpose();
      vref.rowwise() +=
          Eigen::RowVector3d(mean.center.x, mean.center.y, mean.center.z);

      PipelineCache cache;
      const Eigen::MatrixXd vout =
          refine_vertices(ex.feat, vref, ex.camera, mean.nbrs,
                          result.params.stages, &cache);
      Mesh pred;
      pred.faces = mean.mesh->faces;
      set_vertices(pred, vout);
      loss = mesh_loss(pred, ex.gt, config.n_samples, config.weights, seed);
      check_finite(loss.parts, step);

      std::vector<RefineStageParams> stage_grads;
      for (const auto& s : result.params.stages)
        stage_grads.push_back(zero_like(s));
      Eigen::MatrixXd d_vref = refine_vertices_backward(
          ex.feat, result.params.stages, mean.nbrs, cache,
          grad_matrix(loss.grad), stage_grads);
      for (std::size_t l = 0; l < stage_grads.size(); ++l)
        grads.stages[l] = std::move(stage_grads[l]);

      if (config.align_weight > 0.0) {
        Mesh ref_mesh;
        ref_mesh.faces = mean.mesh->faces;
        set_vertices(ref_mesh, vref);
        const MeshLossResult align = mesh_loss(
            ref_mesh, ex.gt, config.n_samples, LossWeights{1.0, 0.0, 0.0},
            seed ^ 0x517cc1b727220a95ULL);
        check_finite(align.parts, step);
        d_vref += config.align_weight * grad_matrix(align.grad);
      }

      const Eigen::Matrix3d d_rot = d_vref.transpose() * mean.base;
      rotation_head_backward(result.params.head, head_cache, to_mat3(d_rot),
                             grads.head);
    } else {
      const double sigma = config.sigma_scale * mesh_diagonal(ex.gt);
      const Mesh ref = augment_reference(ex.gt, config.rot_range, sigma,
                                         seed ^ 0xda3e39cb94b95bdbULL);
      const std::vector<std::vector<int>>& nbrs =
          gt_nbrs[step % examples.size()];
      PipelineCache cache;
      const Eigen::MatrixXd vout =
          refine_vertices(ex.feat, vertices_matrix(ref), ex.camera, nbrs,
                          result.params.stages, &cache);
      Mesh pred;
      pred.faces = ref.faces;
      set_vertices(pred, vout);
      loss = mesh_loss(pred, ex.gt, config.n_samples, config.weights, seed);
      check_finite(loss.parts, step);

      std::vector<RefineStageParams> stage_grads;
      for (const auto& s : result.params.stages)
        stage_grads.push_back(zero_like(s));
      refine_vertices_backward(ex.feat, result.params.stages, nbrs, cache,
                               grad_matrix(loss.grad), stage_grads);
      for (std::size_t l = 0; l < stage_grads.size(); ++l)
        grads.stages[l] = std::move(stage_grads[l]);
    }

    sgd_step(result.params, grads, velocity, config.lr, config.momentum);
    result.log.push_back({step, stage, loss.parts.l_cham, loss.parts.l_norm,
                          loss.parts.l_edge, loss.parts.total});
    if ((step + 1) % 100 == 0)
      MT_INFO("train step " << step + 1 << "/" << total_steps << " stage "
                            << stage << " loss " << loss.parts.total);
  }
  return result;
}

double mean_mesh_loss(const std::vector<TrainExample>& examples,
                      const std::map<int, Mesh>& mean_shapes,
                      const PipelineParams& params,
                      const TrainConfig& config) {
  if (examples.empty()) throw ArgumentError("mean_mesh_loss: no examples");
  const std::map<int, MeanEntry> means = build_mean_entries(mean_shapes);
  double sum = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const TrainExample& ex = examples[i];
    const MeanEntry& mean = entry_for(means, ex.class_id);
    const Mat3 rot = rotation_head(ex.feat, params.head, nullptr);
    Eigen::MatrixXd vref = mean.base * to_eigen(rot).transpose();
    vref.rowwise() +=
        Eigen::RowVector3d(mean.center.x, mean.center.y, mean.center.z);
    const Eigen::MatrixXd vout = refine_vertices(
        ex.feat, vref, ex.camera, mean.nbrs, params.stages, nullptr);
    Mesh pred;
    pred.faces = mean.mesh->faces;
    set_vertices(pred, vout);
    const MeshLossResult loss =
        mesh_loss(pred, ex.gt, config.n_samples, config.weights,
                  config.seed + static_cast<std::uint64_t>(i));
    // The normal term lives in [-2, 0]; shift it by +2 so the reported
    // value is nonnegative and ratios against it are meaningful.
    sum += loss.parts.total + 2.0 * config.weights.w_norm;
  }
  return sum / static_cast<double>(examples.size());
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,stage,l_cham,l_norm,l_edge,total\n";
  char buf[160];
  for (const TrainLogRow& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g,%.9g\n", row.step,
                  row.stage, row.l_cham, row.l_norm, row.l_edge, row.total);
    out += buf;
  }
  return out;
}

void write_train_log_csv(const std::vector<TrainLogRow>& log,
                         const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open for write: " + path);
  const std::string csv = train_log_csv(log);
  f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
  if (!f) throw ArgumentError("write failed: " + path);
}

}  // namespace meshtrace
