#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "meshtrace/camera.hpp"
#include "meshtrace/losses.hpp"
#include "meshtrace/refine.hpp"

namespace meshtrace {

// One annotated object in one frame, ready for the refinement head.
struct TrainExample {
  RoiFeature feat;
  CameraRig camera;
  Mesh gt;  // model coordinates
  int class_id = 0;
};

struct TrainConfig {
  int stage1_steps = 1000;
  int stage2_steps = 1000;
  double lr = 0.02;
  double momentum = 0.9;
  int n_samples = 600;  // loss sample count per mesh
  LossWeights weights;
  // Stage-1 extra chamfer term pulling the rotated mean shape toward the
  // ground truth (trains the rotation head directly).
  double align_weight = 1.0;
  // Stage-2 reference augmentation: rotation range in radians and noise std
  // as a fraction of the reference bounding-box diagonal.
  double rot_range = 15.0 * 3.14159265358979323846 / 180.0;
  double sigma_scale = 0.02;
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  int step = 0;   // global step index
  int stage = 1;  // 1 = mean-shape references, 2 = augmented-gt references
  double l_cham = 0.0;
  double l_norm = 0.0;
  double l_edge = 0.0;
  double total = 0.0;
};

struct TrainResult {
  PipelineParams params;
  std::vector<TrainLogRow> log;
};

// Two-stage SGD (lr/momentum from config) over the examples in round-robin
// order. Stage 1 refines rotation-head-aligned mean shapes; stage 2 refines
// augmented ground-truth references standing in for the previous frame's
// prediction. Throws DegenerateError naming the offending term if the loss
// goes non-finite.
TrainResult train(const std::vector<TrainExample>& examples,
                  const std::map<int, Mesh>& mean_shapes,
                  const PipelineParams& init, const TrainConfig& config);

// Mean total mesh loss over the examples using stage-1 references (rotated
// class mean shapes); forward only.  The normal term is reported shifted to
// (2 - sum of mean |cos|) so the result is nonnegative and loss ratios are
// well-defined; this differs from the training objective by a constant.
double mean_mesh_loss(const std::vector<TrainExample>& examples,
                      const std::map<int, Mesh>& mean_shapes,
                      const PipelineParams& params, const TrainConfig& config);

// CSV: step,stage,l_cham,l_norm,l_edge,total
std::string train_log_csv(const std::vector<TrainLogRow>& log);
void write_train_log_csv(const std::vector<TrainLogRow>& log,
                         const std::string& path);

}  // namespace meshtrace
