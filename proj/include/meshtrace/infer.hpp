#pragma once

#include <map>
#include <vector>

#include "meshtrace/camera.hpp"
#include "meshtrace/refine.hpp"
#include "meshtrace/tracker.hpp"

namespace meshtrace {

// One detected object in one frame as consumed at inference time.
struct InferObservation {
  Detection det;
  RoiFeature feat;
  CameraRig camera;
};

enum class ReferenceMode {
  kTemporal,   // tracked objects deform the previous frame's prediction
  kMeanShape,  // every frame starts from the rotated class mean
};

struct InferResult {
  // Same shape as the input frames; one predicted mesh per observation, with
  // the matching detections annotated with track ids.
  std::vector<std::vector<Mesh>> meshes;
  std::vector<std::vector<Detection>> detections;
};

// Tracks the clip, chooses references (previous predicted mesh when
// tracked and gated, else rotation-head-aligned mean shape), and runs the
// refinement pipeline per object.
InferResult infer_clip(const std::vector<std::vector<InferObservation>>& frames,
                       const std::vector<int>& shot_transitions,
                       const std::map<int, Mesh>& mean_shapes,
                       const PipelineParams& params, ReferenceMode mode,
                       double iou_gate = 0.5);

}  // namespace meshtrace
