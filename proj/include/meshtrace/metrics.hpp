#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "meshtrace/detection.hpp"
#include "meshtrace/sampling.hpp"

namespace meshtrace {

// Intersection over union of two pixel boxes; disjoint boxes give 0.
double box_iou(const Box& a, const Box& b);

// |a AND b| / |a OR b|; two empty masks give 1. Dimension mismatch throws.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Precision/recall/F1 between surface samples: a sampled point counts as a
// hit when its nearest sample on the other mesh lies within tau. Distances
// are multiplied by `factor` first, so callers can fold in a rescale factor
// without resampling. F1 is 0 when precision + recall is 0.
F1Result f1_points(const PointSet& pred, const PointSet& gt, double tau,
                   double factor = 1.0);

// Samples both meshes (n_samples each, shared seed so identical meshes give
// identical samples) and scores them with f1_points. Inputs are expected to
// be pre-rescaled (see rescale_to_gt).
F1Result f1_at(const Mesh& pred, const Mesh& gt, double tau, int n_samples,
               std::uint64_t seed);

enum class MatchKind { kBox, kMask, kMesh };

struct MatchConfig {
  double iou_thresh = 0.5;     // box/mask true-positive threshold
  double f1_thresh = 0.5;      // mesh true-positive threshold on F1@tau
  double tau = 0.3;
  double rescale_target = 5.0;
  int f1_samples = 10000;
  std::uint64_t seed = 1234;   // fixed evaluation seed
};

struct MatchRecord {
  int pred_index = -1;  // index into the preds argument
  double score = 0.0;
  bool tp = false;
  // Matched only an out-of-split ground-truth object; excluded from the PR
  // curve. Always false for plain match_predictions.
  bool ignored = false;
};

// Greedy score-ordered matching within each (clip, frame, category) group.
// A prediction is a true positive when its criterion (box IoU, mask IoU, or
// F1@tau after rescaling, per `kind`) passes against a same-category ground
// truth not already matched; later duplicates become false positives.
std::vector<MatchRecord> match_predictions(
    const std::vector<Detection>& preds,
    const std::vector<GroundTruthObject>& gts, MatchKind kind,
    const MatchConfig& config);

// 101-point interpolated average precision. `matches` carries (score, is_tp)
// pairs in any order; ties on score are broken by input position. Returns 0
// when n_gt is 0.
double average_precision(std::vector<std::pair<double, bool>> matches,
                         int n_gt);

struct EvalConfig {
  MatchConfig match;
  // Subset splits to report. Known names: all, small, medium, large,
  // slightly_occluded, heavily_occluded, short_clips, long_clips.
  std::vector<std::string> splits;
  // Clip length overrides; when absent, lengths are derived from the ground
  // truth (max frame id - min frame id + 1 per clip).
  std::map<std::string, int> clip_lengths;
  // Explicit category ids; when empty, derived from the data.
  std::vector<int> categories;
};

const std::vector<std::string>& all_split_names();

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct CategoryAp {
  int class_id = 0;
  bool defined = false;  // undefined cells are excluded from the mean
  double ap = 0.0;
  int n_gt = 0;
  std::vector<PrPoint> curve;
};

struct KindResult {
  std::vector<CategoryAp> categories;
  bool defined = false;
  double mean_ap = 0.0;
};

struct SplitResult {
  std::string name;
  KindResult box;
  KindResult mask;
  KindResult mesh;
};

struct EvalReport {
  std::vector<SplitResult> splits;
  std::vector<std::string> warnings;
};

EvalReport evaluate(const std::vector<Detection>& preds,
                    const std::vector<GroundTruthObject>& gts,
                    const EvalConfig& config);

std::string report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace meshtrace
