#include "meshtrace/infer.hpp"

#include <set>

namespace meshtrace {

InferResult infer_clip(const std::vector<std::vector<InferObservation>>& frames,
                       const std::vector<int>& shot_transitions,
                       const std::map<int, Mesh>& mean_shapes,
                       const PipelineParams& params, ReferenceMode mode,
                       double iou_gate) {
  const std::set<int> transitions(shot_transitions.begin(),
                                  shot_transitions.end());
  InferResult result;
  result.meshes.reserve(frames.size());
  result.detections.reserve(frames.size());

  TrackState state;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (transitions.count(static_cast<int>(f))) state.reset();
    std::vector<Detection> dets;
    dets.reserve(frames[f].size());
    for (const InferObservation& obs : frames[f]) dets.push_back(obs.det);

    // Previous meshes must be read before update() replaces the tracks.
    const std::vector<Track> prev_tracks = state.tracks;
    const std::vector<int> matched = state.update(dets, iou_gate);

    std::vector<Mesh> meshes;
    std::vector<Detection> annotated;
    meshes.reserve(frames[f].size());
    annotated.reserve(frames[f].size());
    for (std::size_t i = 0; i < frames[f].size(); ++i) {
      const InferObservation& obs = frames[f][i];
      std::optional<Mesh> prev_mesh;
      if (mode == ReferenceMode::kTemporal && matched[i] >= 0 &&
          prev_tracks[matched[i]].last_mesh)
        prev_mesh = prev_tracks[matched[i]].last_mesh;
      const Mesh reference = select_reference(obs.det, prev_mesh, mean_shapes,
                                              obs.feat, params.head);
      Mesh pred =
          refine_pipeline(obs.feat, reference, obs.camera, params.stages);
      state.tracks[i].last_mesh = pred;
      annotated.push_back(state.tracks[i].last);
      meshes.push_back(std::move(pred));
    }
    result.meshes.push_back(std::move(meshes));
    result.detections.push_back(std::move(annotated));
  }
  return result;
}

}  // namespace meshtrace
