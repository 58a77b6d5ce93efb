#pragma once

#include <optional>
#include <vector>

#include "meshtrace/detection.hpp"
#include "meshtrace/mesh.hpp"

namespace meshtrace {

// Pairwise association scores: entry (i, j) = box IoU between current object
// i and previous object j, minus 1 when their classes differ.
std::vector<std::vector<double>> score_matrix(
    const std::vector<Detection>& curr, const std::vector<Detection>& prev);

// One column choice per current object; -1 selects the dummy column
// (no match). Real columns are used at most once.
struct Assignment {
  std::vector<int> col;
  double total = 0.0;  // sum of selected real-column scores, in row order
};

// Globally optimal assignment maximizing the total score, with dummy columns
// of score 0 making every instance feasible. Among optimal assignments the
// lexicographically smallest column sequence wins, counting the dummy as one
// past the last real column.
Assignment solve_assignment(const std::vector<std::vector<double>>& scores);

// Applies the IoU gate: entry i is the matched previous index only when the
// assignment picked a real column and IoU > iou_gate, else -1 (the no-match
// token).
std::vector<int> gate_and_align(const Assignment& assignment,
                                const std::vector<Detection>& curr,
                                const std::vector<Detection>& prev,
                                double iou_gate = 0.5);

struct Track {
  int id = -1;
  Detection last;
  std::optional<Mesh> last_mesh;  // previous frame's predicted mesh
  int age = 0;
};

// One-frame-deep track memory. update() matches a new frame against the
// stored tracks, replaces them, and returns for each new detection the index
// of its previous track (into the pre-update track list) or -1.
struct TrackState {
  std::vector<Track> tracks;
  int next_id = 0;

  std::vector<int> update(const std::vector<Detection>& dets,
                          double iou_gate = 0.5);
  void reset() { tracks.clear(); }
};

// Runs score/solve/gate over consecutive frames and annotates every
// detection with a track id. Tracks hard-reset at the listed shot-transition
// frame indices (the transition frame starts fresh ids).
std::vector<std::vector<Detection>> track_clip(
    const std::vector<std::vector<Detection>>& frames,
    const std::vector<int>& shot_transitions, double iou_gate = 0.5);

}  // namespace meshtrace
