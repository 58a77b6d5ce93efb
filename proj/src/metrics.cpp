#include "meshtrace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "meshtrace/error.hpp"
#include "meshtrace/log.hpp"
#include "meshtrace/nn.hpp"

namespace meshtrace {

bool operator==(const Box& a, const Box& b) {
  return a.x0 == b.x0 && a.y0 == b.y0 && a.x1 == b.x1 && a.y1 == b.y1;
}

void validate_detection(const Detection& d) {
  if (!d.box.valid()) throw ArgumentError("detection box is empty or inverted");
  if (!(d.score >= 0.0 && d.score <= 1.0))
    throw ArgumentError("detection score outside [0,1]");
}

void validate_ground_truth(const GroundTruthObject& g) {
  if (!g.box.valid())
    throw ArgumentError("ground-truth box is empty or inverted");
  if (!(g.occlusion_rate >= 0.0 && g.occlusion_rate <= 1.0))
    throw ArgumentError("occlusion_rate outside [0,1]");
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw ArgumentError("mask_iou: dimension mismatch");
  long inter = 0;
  long uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool pa = a.data[i] != 0;
    const bool pb = b.data[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

F1Result f1_with_trees(const PointSet& pred, const KdTree& pred_tree,
                       const PointSet& gt, const KdTree& gt_tree, double tau,
                       double factor) {
  if (pred.points.empty() || gt.points.empty())
    throw ArgumentError("f1: empty point set");
  if (tau <= 0.0) throw ArgumentError("f1: tau must be positive");
  // A point hits when factor * distance <= tau; compared in squared form so
  // every code path makes the identical decision.
  const double t2 = tau * tau;
  const double f2 = factor * factor;
  long hits = 0;
  for (const Vec3& p : pred.points)
    hits += f2 * gt_tree.nearest(p).dist2 <= t2;
  long rhits = 0;
  for (const Vec3& q : gt.points)
    rhits += f2 * pred_tree.nearest(q).dist2 <= t2;
  F1Result r;
  r.precision = static_cast<double>(hits) / static_cast<double>(pred.size());
  r.recall = static_cast<double>(rhits) / static_cast<double>(gt.size());
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

}  // namespace

F1Result f1_points(const PointSet& pred, const PointSet& gt, double tau,
                   double factor) {
  const KdTree pred_tree(pred.points);
  const KdTree gt_tree(gt.points);
  return f1_with_trees(pred, pred_tree, gt, gt_tree, tau, factor);
}

F1Result f1_at(const Mesh& pred, const Mesh& gt, double tau, int n_samples,
               std::uint64_t seed) {
  const PointSet p = sample_points(pred, n_samples, seed);
  const PointSet q = sample_points(gt, n_samples, seed);
  return f1_points(p, q, tau, 1.0);
}

namespace {

double ap101(const std::vector<double>& prec, const std::vector<double>& rec) {
  const int n = static_cast<int>(prec.size());
  std::vector<double> maxp(n + 1, 0.0);
  for (int k = n - 1; k >= 0; --k) maxp[k] = std::max(prec[k], maxp[k + 1]);
  double total = 0.0;
  int k = 0;  // recall is nondecreasing, so the cursor only moves forward
  for (int r = 0; r <= 100; ++r) {
    const double level = static_cast<double>(r) / 100.0;
    while (k < n && rec[k] < level) ++k;
    if (k < n) total += maxp[k];
  }
  return total / 101.0;
}

}  // namespace

double average_precision(std::vector<std::pair<double, bool>> matches,
                         int n_gt) {
  if (n_gt < 0) throw ArgumentError("average_precision: negative n_gt");
  if (n_gt == 0) return 0.0;
  std::stable_sort(
      matches.begin(), matches.end(),
      [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> prec, rec;
  prec.reserve(matches.size());
  rec.reserve(matches.size());
  int tp = 0, fp = 0;
  for (const auto& [score, is_tp] : matches) {
    (void)score;
    is_tp ? ++tp : ++fp;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  return ap101(prec, rec);
}

namespace {

constexpr double kNoMatch = -1.0;  // below every positive threshold

struct Group {
  std::vector<int> preds;  // indices into preds, sorted score desc, index asc
  std::vector<int> gts;    // indices into gts, ascending
  // Criterion matrices [kind][pred position][gt position]; kNoMatch where a
  // required payload is missing.
  std::array<std::vector<std::vector<double>>, 3> crit;
};

using GroupKey = std::tuple<std::string, int, int>;  // clip, frame, class

struct MeshSample {
  PointSet points;
  std::unique_ptr<KdTree> tree;
};

struct GroupMatchRecord {
  int pred_index = -1;
  double score = 0.0;
  bool tp = false;
  bool ignored = false;
};

double threshold_for(MatchKind kind, const MatchConfig& c) {
  return kind == MatchKind::kMesh ? c.f1_thresh : c.iou_thresh;
}

bool pred_has_payload(const Detection& d, MatchKind kind) {
  switch (kind) {
    case MatchKind::kBox:
      return true;
    case MatchKind::kMask:
      return d.mask.has_value();
    case MatchKind::kMesh:
      return d.mesh.has_value();
  }
  return false;
}

bool gt_has_payload(const GroundTruthObject& g, MatchKind kind) {
  switch (kind) {
    case MatchKind::kBox:
      return true;
    case MatchKind::kMask:
      return g.mask.has_value();
    case MatchKind::kMesh:
      return g.mesh.has_value();
  }
  return false;
}

class Evaluator {
 public:
  Evaluator(const std::vector<Detection>& preds,
            const std::vector<GroundTruthObject>& gts,
            const MatchConfig& config)
      : preds_(preds), gts_(gts), config_(config) {
    build_groups();
  }

  const std::map<GroupKey, Group>& groups() const { return groups_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Greedy matching of one group against one kind. active[g] marks in-split
  // ground truths (by position in group.gts); predictions whose only
  // qualifying matches are inactive come back flagged `ignored`, as do
  // unmatched predictions that are themselves out of the split
  // (pred_active[p] == 0).
  std::vector<GroupMatchRecord> match_group(
      const Group& group, MatchKind kind, const std::vector<char>& active,
      const std::vector<char>& pred_active) {
    std::vector<GroupMatchRecord> records;
    std::vector<char> used(group.gts.size(), 0);
    const double thresh = threshold_for(kind, config_);
    const auto& crit = group.crit[static_cast<int>(kind)];
    for (std::size_t p = 0; p < group.preds.size(); ++p) {
      const Detection& det = preds_[group.preds[p]];
      if (!pred_has_payload(det, kind)) continue;
      double best_v = -std::numeric_limits<double>::infinity();
      int best_g = -1;
      double best_iv = -std::numeric_limits<double>::infinity();
      int best_ig = -1;
      for (std::size_t g = 0; g < group.gts.size(); ++g) {
        if (used[g]) continue;
        const double v = crit[p][g];
        if (v < thresh) continue;
        if (active[g]) {
          if (v > best_v) {
            best_v = v;
            best_g = static_cast<int>(g);
          }
        } else if (v > best_iv) {
          best_iv = v;
          best_ig = static_cast<int>(g);
        }
      }
      GroupMatchRecord rec;
      rec.pred_index = group.preds[p];
      rec.score = det.score;
      if (best_g >= 0) {
        used[best_g] = 1;
        rec.tp = true;
      } else if (best_ig >= 0) {
        used[best_ig] = 1;
        rec.ignored = true;
      } else if (!pred_active[p]) {
        rec.ignored = true;
      }
      records.push_back(rec);
    }
    return records;
  }

 private:
  void build_groups() {
    for (std::size_t i = 0; i < preds_.size(); ++i) {
      validate_detection(preds_[i]);
      const Detection& d = preds_[i];
      groups_[{d.clip_id, d.frame_id, d.class_id}].preds.push_back(
          static_cast<int>(i));
    }
    for (std::size_t i = 0; i < gts_.size(); ++i) {
      validate_ground_truth(gts_[i]);
      const GroundTruthObject& g = gts_[i];
      groups_[{g.clip_id, g.frame_id, g.class_id}].gts.push_back(
          static_cast<int>(i));
    }
    for (auto& [key, group] : groups_) {
      (void)key;
      std::stable_sort(group.preds.begin(), group.preds.end(),
                       [this](int a, int b) {
                         if (preds_[a].score != preds_[b].score)
                           return preds_[a].score > preds_[b].score;
                         return a < b;
                       });
      fill_criteria(group);
    }
  }

  void fill_criteria(Group& group) {
    for (int k = 0; k < 3; ++k)
      group.crit[k].assign(group.preds.size(),
                           std::vector<double>(group.gts.size(), kNoMatch));
    for (std::size_t p = 0; p < group.preds.size(); ++p) {
      const Detection& det = preds_[group.preds[p]];
      for (std::size_t g = 0; g < group.gts.size(); ++g) {
        const GroundTruthObject& gt = gts_[group.gts[g]];
        group.crit[0][p][g] = box_iou(det.box, gt.box);
        if (det.mask && gt.mask && det.mask->width == gt.mask->width &&
            det.mask->height == gt.mask->height)
          group.crit[1][p][g] = mask_iou(*det.mask, *gt.mask);
        if (det.mesh && gt.mesh)
          group.crit[2][p][g] = mesh_f1(group.preds[p], group.gts[g]);
      }
    }
  }

  double mesh_f1(int pred_index, int gt_index) {
    const double factor = gt_factor(gt_index);
    if (!(factor > 0.0) || !std::isfinite(factor)) return kNoMatch;
    const MeshSample& ps = sample_for(pred_samples_, *preds_[pred_index].mesh,
                                      pred_index);
    const MeshSample& qs =
        sample_for(gt_samples_, *gts_[gt_index].mesh, gt_index);
    return f1_with_trees(ps.points, *ps.tree, qs.points, *qs.tree, config_.tau,
                         factor)
        .f1;
  }

  // Shared rescale factor implied by this ground truth; both meshes would be
  // scaled by it, so it is folded into the distance comparison instead.
  double gt_factor(int gt_index) {
    auto it = gt_factors_.find(gt_index);
    if (it != gt_factors_.end()) return it->second;
    const Aabb bb = bounding_box(*gts_[gt_index].mesh);
    const double edge = bb.longest_edge();
    double factor = 0.0;
    if (edge > 0.0) {
      factor = config_.rescale_target / edge;
    } else {
      warn("degenerate ground-truth mesh (zero bounding box) for gt #" +
           std::to_string(gt_index));
    }
    gt_factors_[gt_index] = factor;
    return factor;
  }

  const MeshSample& sample_for(std::map<int, MeshSample>& cache,
                               const Mesh& mesh, int index) {
    auto it = cache.find(index);
    if (it == cache.end()) {
      MeshSample s;
      s.points = sample_points(mesh, config_.f1_samples, config_.seed);
      s.tree = std::make_unique<KdTree>(s.points.points);
      it = cache.emplace(index, std::move(s)).first;
    }
    return it->second;
  }

  void warn(const std::string& msg) {
    MT_WARN(msg);
    warnings_.push_back(msg);
  }

  const std::vector<Detection>& preds_;
  const std::vector<GroundTruthObject>& gts_;
  MatchConfig config_;
  std::map<GroupKey, Group> groups_;
  std::map<int, MeshSample> pred_samples_;
  std::map<int, MeshSample> gt_samples_;
  std::map<int, double> gt_factors_;
  std::vector<std::string> warnings_;
};

void sort_records(std::vector<GroupMatchRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const GroupMatchRecord& a, const GroupMatchRecord& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.pred_index < b.pred_index;
            });
}

}  // namespace

std::vector<MatchRecord> match_predictions(
    const std::vector<Detection>& preds,
    const std::vector<GroundTruthObject>& gts, MatchKind kind,
    const MatchConfig& config) {
  Evaluator ev(preds, gts, config);
  std::vector<GroupMatchRecord> records;
  for (const auto& [key, group] : ev.groups()) {
    (void)key;
    const std::vector<char> active(group.gts.size(), 1);
    const std::vector<char> pred_active(group.preds.size(), 1);
    auto part = ev.match_group(group, kind, active, pred_active);
    records.insert(records.end(), part.begin(), part.end());
  }
  sort_records(records);
  std::vector<MatchRecord> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back({r.pred_index, r.score, r.tp, r.ignored});
  return out;
}

const std::vector<std::string>& all_split_names() {
  static const std::vector<std::string> names = {
      "all",          "small",          "medium",      "large",
      "slightly_occluded", "heavily_occluded", "short_clips", "long_clips"};
  return names;
}

namespace {

bool area_in_split(double area, const std::string& split) {
  if (split == "small") return area < 32.0 * 32.0;
  if (split == "medium") return area >= 32.0 * 32.0 && area <= 96.0 * 96.0;
  return area > 96.0 * 96.0;  // large
}

bool length_in_split(const std::string& clip_id, const std::string& split,
                     const std::map<std::string, int>& clip_lengths) {
  const auto it = clip_lengths.find(clip_id);
  const int len = it == clip_lengths.end() ? 1 : it->second;
  return split == "long_clips" ? len > 30 : len <= 30;
}

bool gt_in_split(const GroundTruthObject& g, const std::string& split,
                 const std::map<std::string, int>& clip_lengths) {
  if (split == "all") return true;
  if (split == "small" || split == "medium" || split == "large")
    return area_in_split(g.box.area(), split);
  if (split == "slightly_occluded") return g.occlusion_rate <= 0.25;
  if (split == "heavily_occluded") return g.occlusion_rate > 0.25;
  if (split == "short_clips" || split == "long_clips")
    return length_in_split(g.clip_id, split, clip_lengths);
  throw ConfigError("unknown split name: " + split);
}

// Split membership for predictions, used to drop unmatched out-of-split
// detections from the PR curve (the COCO area-range rule). Occlusion is a
// ground-truth-only attribute, so occlusion splits keep every unmatched
// prediction as a false positive.
bool pred_in_split(const Detection& d, const std::string& split,
                   const std::map<std::string, int>& clip_lengths) {
  if (split == "small" || split == "medium" || split == "large")
    return area_in_split(d.box.area(), split);
  if (split == "short_clips" || split == "long_clips")
    return length_in_split(d.clip_id, split, clip_lengths);
  return true;
}

CategoryAp make_cell(int class_id, std::vector<GroupMatchRecord> records,
                     int n_gt) {
  records.erase(std::remove_if(records.begin(), records.end(),
                               [](const GroupMatchRecord& r) { return r.ignored; }),
                records.end());
  sort_records(records);
  CategoryAp cell;
  cell.class_id = class_id;
  cell.n_gt = n_gt;
  if (records.empty() && n_gt == 0) return cell;  // excluded from the mean
  cell.defined = true;
  std::vector<double> prec, rec;
  int tp = 0, fp = 0;
  for (const auto& r : records) {
    r.tp ? ++tp : ++fp;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    rec.push_back(n_gt > 0
                      ? static_cast<double>(tp) / static_cast<double>(n_gt)
                      : 0.0);
    cell.curve.push_back({rec.back(), prec.back()});
  }
  cell.ap = n_gt > 0 ? ap101(prec, rec) : 0.0;
  return cell;
}

void finalize_kind(KindResult& kind) {
  double sum = 0.0;
  int count = 0;
  for (const auto& c : kind.categories) {
    if (!c.defined) continue;
    sum += c.ap;
    ++count;
  }
  kind.defined = count > 0;
  kind.mean_ap = count > 0 ? sum / count : 0.0;
}

}  // namespace

EvalReport evaluate(const std::vector<Detection>& preds,
                    const std::vector<GroundTruthObject>& gts,
                    const EvalConfig& config) {
  EvalReport report;
  Evaluator ev(preds, gts, config.match);
  report.warnings = ev.warnings();

  std::vector<std::string> splits =
      config.splits.empty() ? all_split_names() : config.splits;

  // Category universe: explicit config list, else every id seen in the data.
  std::set<int> gt_classes, pred_classes;
  for (const auto& g : gts) gt_classes.insert(g.class_id);
  for (const auto& d : preds) pred_classes.insert(d.class_id);
  std::vector<int> categories = config.categories;
  if (categories.empty()) {
    std::set<int> all_ids = gt_classes;
    all_ids.insert(pred_classes.begin(), pred_classes.end());
    categories.assign(all_ids.begin(), all_ids.end());
  }
  for (int c : pred_classes) {
    if (!gt_classes.count(c)) {
      const std::string msg =
          "predictions contain category " + std::to_string(c) +
          " absent from the ground truth; counted as false positives";
      MT_WARN(msg);
      report.warnings.push_back(msg);
    }
  }

  // Clip lengths: config override first, else derived from gt frame spans.
  std::map<std::string, int> clip_lengths = config.clip_lengths;
  std::map<std::string, std::pair<int, int>> spans;
  for (const auto& g : gts) {
    auto it = spans.find(g.clip_id);
    if (it == spans.end())
      spans[g.clip_id] = {g.frame_id, g.frame_id};
    else {
      it->second.first = std::min(it->second.first, g.frame_id);
      it->second.second = std::max(it->second.second, g.frame_id);
    }
  }
  for (const auto& [clip, span] : spans)
    if (!clip_lengths.count(clip))
      clip_lengths[clip] = span.second - span.first + 1;

  for (const std::string& split : splits) {
    SplitResult sr;
    sr.name = split;
    for (int kind_idx = 0; kind_idx < 3; ++kind_idx) {
      const MatchKind kind = static_cast<MatchKind>(kind_idx);
      KindResult& kr = kind_idx == 0 ? sr.box : (kind_idx == 1 ? sr.mask : sr.mesh);
      for (int category : categories) {
        std::vector<GroupMatchRecord> records;
        int n_gt = 0;
        for (const auto& [key, group] : ev.groups()) {
          if (std::get<2>(key) != category) continue;
          std::vector<char> active(group.gts.size(), 0);
          for (std::size_t g = 0; g < group.gts.size(); ++g) {
            const GroundTruthObject& gt = gts[group.gts[g]];
            if (!gt_has_payload(gt, kind)) continue;
            if (!gt_in_split(gt, split, clip_lengths)) continue;
            active[g] = 1;
            ++n_gt;
          }
          std::vector<char> p_active(group.preds.size(), 0);
          for (std::size_t p = 0; p < group.preds.size(); ++p)
            p_active[p] =
                pred_in_split(preds[group.preds[p]], split, clip_lengths);
          auto part = ev.match_group(group, kind, active, p_active);
          records.insert(records.end(), part.begin(), part.end());
        }
        kr.categories.push_back(make_cell(category, std::move(records), n_gt));
      }
      finalize_kind(kr);
    }
    report.splits.push_back(std::move(sr));
  }
  return report;
}

namespace {

nlohmann::ordered_json kind_to_json(const KindResult& kind) {
  nlohmann::ordered_json j;
  j["defined"] = kind.defined;
  if (kind.defined)
    j["mean_ap"] = kind.mean_ap;
  else
    j["mean_ap"] = nullptr;
  auto cats = nlohmann::ordered_json::array();
  for (const auto& c : kind.categories) {
    nlohmann::ordered_json jc;
    jc["class_id"] = c.class_id;
    jc["defined"] = c.defined;
    if (c.defined)
      jc["ap"] = c.ap;
    else
      jc["ap"] = nullptr;
    jc["n_gt"] = c.n_gt;
    auto curve = nlohmann::ordered_json::array();
    for (const auto& pt : c.curve)
      curve.push_back({pt.recall, pt.precision});
    jc["curve"] = std::move(curve);
    cats.push_back(std::move(jc));
  }
  j["categories"] = std::move(cats);
  return j;
}

std::string format_ap(bool defined, double value) {
  if (!defined) return "-";
  std::ostringstream oss;
  oss << std::fixed << std::setprecision(4) << value;
  return oss.str();
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  auto splits = nlohmann::ordered_json::array();
  for (const auto& s : report.splits) {
    nlohmann::ordered_json js;
    js["name"] = s.name;
    js["box"] = kind_to_json(s.box);
    js["mask"] = kind_to_json(s.mask);
    js["mesh"] = kind_to_json(s.mesh);
    splits.push_back(std::move(js));
  }
  j["splits"] = std::move(splits);
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  for (const auto& s : report.splits) {
    out << "[" << s.name << "]\n";
    out << std::left << std::setw(12) << "category" << std::right
        << std::setw(10) << "AP^box" << std::setw(10) << "AP^mask"
        << std::setw(10) << "AP^mesh" << "\n";
    for (std::size_t i = 0; i < s.box.categories.size(); ++i) {
      out << std::left << std::setw(12) << s.box.categories[i].class_id
          << std::right << std::setw(10)
          << format_ap(s.box.categories[i].defined, s.box.categories[i].ap)
          << std::setw(10)
          << format_ap(s.mask.categories[i].defined, s.mask.categories[i].ap)
          << std::setw(10)
          << format_ap(s.mesh.categories[i].defined, s.mesh.categories[i].ap)
          << "\n";
    }
    out << std::left << std::setw(12) << "mean" << std::right << std::setw(10)
        << format_ap(s.box.defined, s.box.mean_ap) << std::setw(10)
        << format_ap(s.mask.defined, s.mask.mean_ap) << std::setw(10)
        << format_ap(s.mesh.defined, s.mesh.mean_ap) << "\n";
  }
  return out.str();
}

}  // namespace meshtrace
