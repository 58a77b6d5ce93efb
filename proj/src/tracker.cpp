#include "meshtrace/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "meshtrace/error.hpp"
#include "meshtrace/metrics.hpp"

namespace meshtrace {

std::vector<std::vector<double>> score_matrix(
    const std::vector<Detection>& curr, const std::vector<Detection>& prev) {
  std::vector<std::vector<double>> scores(curr.size(),
                                          std::vector<double>(prev.size()));
  for (std::size_t i = 0; i < curr.size(); ++i)
    for (std::size_t j = 0; j < prev.size(); ++j)
      scores[i][j] = box_iou(curr[i].box, prev[j].box) -
                     (curr[i].class_id != prev[j].class_id ? 1.0 : 0.0);
  return scores;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path Hungarian on an n x m cost matrix with n <= m,
// minimizing total cost; returns row -> col.
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = n == 0 ? 0 : static_cast<int>(cost[0].size());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Best achievable total over the given rows and the columns not masked out,
// each row free to take a score-0 dummy instead.
double best_total(const std::vector<std::vector<double>>& scores,
                  const std::vector<int>& rows,
                  const std::vector<char>& col_used) {
  const int n = static_cast<int>(rows.size());
  if (n == 0) return 0.0;
  std::vector<int> cols;
  for (std::size_t c = 0; c < col_used.size(); ++c)
    if (!col_used[c]) cols.push_back(static_cast<int>(c));
  const int m = static_cast<int>(cols.size());
  // Augmented cost: negated scores plus one dummy column per row at cost 0.
  std::vector<std::vector<double>> cost(n, std::vector<double>(m + n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) cost[i][j] = -scores[rows[i]][cols[j]];
  const std::vector<int> match = hungarian_min(cost);
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    if (match[i] >= 0 && match[i] < m) total += scores[rows[i]][cols[match[i]]];
  return total;
}

}  // namespace

Assignment solve_assignment(const std::vector<std::vector<double>>& scores) {
  const int n = static_cast<int>(scores.size());
  Assignment out;
  out.col.assign(n, -1);
  if (n == 0) return out;
  const int m = static_cast<int>(scores[0].size());
  for (const auto& row : scores) {
    if (static_cast<int>(row.size()) != m)
      throw ArgumentError("solve_assignment: ragged score matrix");
    for (double s : row)
      if (!std::isfinite(s))
        throw ArgumentError("solve_assignment: non-finite score");
  }

  std::vector<char> col_used(m, 0);
  std::vector<int> all_rows(n);
  for (int i = 0; i < n; ++i) all_rows[i] = i;
  const double optimum = best_total(scores, all_rows, col_used);
  // Tolerance for "still optimal" while fixing rows; distinct assignment
  // totals on real data differ by far more than this, and exact ties are
  // resolved toward the lowest column.
  const double eps = 1e-9 * (1.0 + std::abs(optimum));

  double fixed = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<int> rest;
    for (int r = i + 1; r < n; ++r) rest.push_back(r);
    int chosen = -1;
    for (int c = 0; c < m; ++c) {
      if (col_used[c]) continue;
      col_used[c] = 1;
      const double completion = best_total(scores, rest, col_used);
      col_used[c] = 0;
      if (fixed + scores[i][c] + completion >= optimum - eps) {
        chosen = c;
        break;
      }
    }
    if (chosen >= 0) {
      col_used[chosen] = 1;
      fixed += scores[i][chosen];
      out.col[i] = chosen;
    }
    // else: the dummy column is the only optimal choice for this row.
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    if (out.col[i] >= 0) total += scores[i][out.col[i]];
  out.total = total;
  return out;
}

std::vector<int> gate_and_align(const Assignment& assignment,
                                const std::vector<Detection>& curr,
                                const std::vector<Detection>& prev,
                                double iou_gate) {
  if (assignment.col.size() != curr.size())
    throw ArgumentError("gate_and_align: assignment/frame size mismatch");
  std::vector<int> out(curr.size(), -1);
  for (std::size_t i = 0; i < curr.size(); ++i) {
    const int j = assignment.col[i];
    if (j < 0) continue;
    if (box_iou(curr[i].box, prev[j].box) > iou_gate) out[i] = j;
  }
  return out;
}

std::vector<int> TrackState::update(const std::vector<Detection>& dets,
                                    double iou_gate) {
  std::vector<Detection> prev;
  prev.reserve(tracks.size());
  for (const Track& t : tracks) prev.push_back(t.last);
  const Assignment assignment = solve_assignment(score_matrix(dets, prev));
  const std::vector<int> matched = gate_and_align(assignment, dets, prev,
                                                  iou_gate);
  std::vector<Track> next;
  next.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    Track t;
    t.last = dets[i];
    if (matched[i] >= 0) {
      t.id = tracks[matched[i]].id;
      t.age = tracks[matched[i]].age + 1;
    } else {
      t.id = next_id++;
      t.age = 0;
    }
    t.last.track_id = t.id;
    next.push_back(std::move(t));
  }
  tracks = std::move(next);
  return matched;
}

std::vector<std::vector<Detection>> track_clip(
    const std::vector<std::vector<Detection>>& frames,
    const std::vector<int>& shot_transitions, double iou_gate) {
  const std::set<int> transitions(shot_transitions.begin(),
                                  shot_transitions.end());
  TrackState state;
  std::vector<std::vector<Detection>> out;
  out.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (transitions.count(static_cast<int>(f))) state.reset();
    state.update(frames[f], iou_gate);
    std::vector<Detection> annotated;
    annotated.reserve(frames[f].size());
    for (const Track& t : state.tracks) annotated.push_back(t.last);
    out.push_back(std::move(annotated));
  }
  return out;
}

}  // namespace meshtrace
