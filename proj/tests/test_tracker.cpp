#include <doctest.h>

#include <cmath>
#include <vector>

#include "meshtrace/rng.hpp"
#include "meshtrace/tracker.hpp"

using namespace meshtrace;

namespace {

Detection det(Box b, int cls = 1, double score = 0.9) {
  Detection d;
  d.box = b;
  d.class_id = cls;
  d.score = score;
  return d;
}

// Exhaustive maximum over all one-to-one (partial) column assignments,
// breaking score ties on the lexicographically smallest column sequence
// with -1 (dummy) ordered after every real column.
struct BruteResult {
  std::vector<int> col;
  double total = -1e300;
};

void brute_rec(const std::vector<std::vector<double>>& s, std::size_t row,
               std::vector<int>& col, std::vector<char>& used, double acc,
               BruteResult& best) {
  if (row == s.size()) {
    const int ncols = s.empty() ? 0 : static_cast<int>(s[0].size());
    const auto key = [ncols](int c) { return c < 0 ? ncols : c; };
    if (acc > best.total + 1e-12) {
      best.total = acc;
      best.col = col;
    } else if (acc > best.total - 1e-12 && !best.col.empty()) {
      // Tie on total: keep the lexicographically smaller column sequence.
      for (std::size_t i = 0; i < col.size(); ++i) {
        if (key(col[i]) == key(best.col[i])) continue;
        if (key(col[i]) < key(best.col[i])) {
          best.total = acc;
          best.col = col;
        }
        break;
      }
    }
    return;
  }
  const std::size_t ncol = s[row].size();
  for (std::size_t j = 0; j < ncol; ++j) {
    if (used[j]) continue;
    used[j] = 1;
    col[row] = static_cast<int>(j);
    brute_rec(s, row + 1, col, used, acc + s[row][j], best);
    used[j] = 0;
  }
  col[row] = -1;
  brute_rec(s, row + 1, col, used, acc, best);
}

BruteResult brute_force(const std::vector<std::vector<double>>& s) {
  BruteResult best;
  std::vector<int> col(s.size(), -1);
  std::vector<char> used(s.empty() ? 0 : s[0].size(), 0);
  brute_rec(s, 0, col, used, 0.0, best);
  if (best.col.empty()) best.col.assign(s.size(), -1);
  if (s.empty()) best.total = 0.0;
  return best;
}

}  // namespace

TEST_CASE("score_matrix is IoU with a class penalty") {
  const std::vector<Detection> curr{det({0, 0, 2, 2}, 1),
                                    det({0, 0, 2, 2}, 2)};
  const std::vector<Detection> prev{det({1, 1, 3, 3}, 1)};
  const auto s = score_matrix(curr, prev);
  REQUIRE(s.size() == 2);
  REQUIRE(s[0].size() == 1);
  CHECK(s[0][0] == doctest::Approx(1.0 / 7.0));
  // Different classes: IoU minus 1.
  CHECK(s[1][0] == doctest::Approx(1.0 / 7.0 - 1.0));
}

TEST_CASE("solve_assignment on a diagonal-dominant matrix") {
  // Row 0 prefers col 1 (0.9), row 1 prefers col 0 (0.8): total 1.7.
  const std::vector<std::vector<double>> s{{0.1, 0.9}, {0.8, 0.2}};
  const Assignment a = solve_assignment(s);
  REQUIRE(a.col.size() == 2);
  CHECK(a.col[0] == 1);
  CHECK(a.col[1] == 0);
  CHECK(a.total == doctest::Approx(1.7));
}

TEST_CASE("solve_assignment 1x1 and empty") {
  const Assignment a = solve_assignment({{0.7}});
  CHECK(a.col == std::vector<int>{0});
  CHECK(a.total == doctest::Approx(0.7));
  const Assignment b = solve_assignment({});
  CHECK(b.col.empty());
  CHECK(b.total == 0.0);
}

TEST_CASE("negative scores lose to the zero-score dummy") {
  const Assignment a = solve_assignment({{-0.4, -0.2}});
  CHECK(a.col == std::vector<int>{-1});
  CHECK(a.total == 0.0);
}

TEST_CASE("two rows compete for one good column") {
  // Row 1 needs col 0 more than row 0 does.
  const std::vector<std::vector<double>> s{{0.6, 0.5}, {0.9, 0.0}};
  const Assignment a = solve_assignment(s);
  CHECK(a.col[0] == 1);
  CHECK(a.col[1] == 0);
  CHECK(a.total == doctest::Approx(1.4));
}

TEST_CASE("score ties resolve to the lexicographically smallest columns") {
  // Both permutations of a constant matrix score the same.
  const Assignment a = solve_assignment({{0.5, 0.5}, {0.5, 0.5}});
  CHECK(a.col[0] == 0);
  CHECK(a.col[1] == 1);
  // The dummy is ordered after real columns: taking col 0 on the first row
  // ties with taking it on the second; the first row wins it.
  const Assignment b = solve_assignment({{0.5}, {0.5}});
  CHECK(b.col[0] == 0);
  CHECK(b.col[1] == -1);
  // Zero scores tie with the dummy; the real column is still preferred.
  const Assignment c = solve_assignment({{0.0}});
  CHECK(c.col[0] == 0);
}

TEST_CASE("solve_assignment matches brute force on random matrices") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 1 + static_cast<int>(rng.below(5));
    const int cols = 1 + static_cast<int>(rng.below(5));
    std::vector<std::vector<double>> s(rows, std::vector<double>(cols));
    for (auto& row : s)
      for (double& v : row) {
        v = rng.uniform(-1.0, 1.0);
        // Sprinkle exact ties to exercise the lexicographic rule.
        if (rng.uniform() < 0.3) v = std::round(v * 4.0) / 4.0;
      }
    const Assignment got = solve_assignment(s);
    const BruteResult want = brute_force(s);
    CHECK(got.total == doctest::Approx(want.total).epsilon(1e-9));
    CHECK(got.col == want.col);
  }
}

TEST_CASE("gate_and_align drops weak-overlap matches") {
  const std::vector<Detection> prev{det({0, 0, 10, 10}, 1)};
  const std::vector<Detection> curr{det({0, 0, 10, 9}, 1)};
  const auto s = score_matrix(curr, prev);
  const Assignment a = solve_assignment(s);
  REQUIRE(a.col[0] == 0);
  // IoU = 0.9 > 0.5: kept.
  CHECK(gate_and_align(a, curr, prev, 0.5) == std::vector<int>{0});
  // Gate above the IoU: dropped. The gate is strict.
  CHECK(gate_and_align(a, curr, prev, 0.9) == std::vector<int>{-1});
  CHECK(gate_and_align(a, curr, prev, 0.89999) == std::vector<int>{0});
}

TEST_CASE("track ids persist across a drifting sequence") {
  // Two boxes drifting right by 1px per frame, far apart vertically.
  std::vector<std::vector<Detection>> frames;
  for (int t = 0; t < 6; ++t) {
    const double x = t;
    frames.push_back({det({x, 0, x + 10, 10}, 1),
                      det({x, 50, x + 10, 60}, 2)});
  }
  const auto out = track_clip(frames, {});
  REQUIRE(out.size() == 6);
  for (const auto& frame : out) REQUIRE(frame.size() == 2);
  const int id_a = out[0][0].track_id;
  const int id_b = out[0][1].track_id;
  CHECK(id_a != id_b);
  for (const auto& frame : out) {
    CHECK(frame[0].track_id == id_a);
    CHECK(frame[1].track_id == id_b);
  }
}

TEST_CASE("a teleporting box starts a new track") {
  std::vector<std::vector<Detection>> frames;
  frames.push_back({det({0, 0, 10, 10}, 1)});
  frames.push_back({det({500, 500, 510, 510}, 1)});
  const auto out = track_clip(frames, {});
  CHECK(out[0][0].track_id != out[1][0].track_id);
}

TEST_CASE("shot transitions reset every id") {
  std::vector<std::vector<Detection>> frames;
  for (int t = 0; t < 4; ++t) frames.push_back({det({0, 0, 10, 10}, 1)});
  const auto out = track_clip(frames, {2});
  // Frames 0-1 share an id; frame 2 starts fresh even though the box is
  // stationary, and frame 3 continues the new id.
  CHECK(out[0][0].track_id == out[1][0].track_id);
  CHECK(out[2][0].track_id != out[1][0].track_id);
  CHECK(out[3][0].track_id == out[2][0].track_id);
}

TEST_CASE("crossing objects keep their ids while overlap stays high") {
  // Two boxes sliding toward each other horizontally, separated enough
  // vertically that self-overlap beats cross-overlap in every frame.
  std::vector<std::vector<Detection>> frames;
  for (int t = 0; t < 9; ++t) {
    const double xa = t * 2.0;
    const double xb = 16.0 - t * 2.0;
    frames.push_back({det({xa, 0, xa + 10, 10}, 1),
                      det({xb, 4, xb + 10, 14}, 1)});
  }
  const auto out = track_clip(frames, {});
  const int id_a = out[0][0].track_id;
  const int id_b = out[0][1].track_id;
  REQUIRE(id_a != id_b);
  for (const auto& frame : out) {
    CHECK(frame[0].track_id == id_a);
    CHECK(frame[1].track_id == id_b);
  }
}

TEST_CASE("assignment is invariant to a constant score shift") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> s(3, std::vector<double>(3));
    for (auto& row : s)
      for (double& v : row) v = rng.uniform(0.05, 1.0);
    const Assignment base = solve_assignment(s);
    // Shifting all scores by a constant cannot reorder complete matchings,
    // provided everything stays above the dummy's 0.
    std::vector<std::vector<double>> shifted = s;
    for (auto& row : shifted)
      for (double& v : row) v += 5.0;
    const Assignment moved = solve_assignment(shifted);
    CHECK(moved.col == base.col);
  }
}

TEST_CASE("class relabeling does not change the matching") {
  const std::vector<Detection> prev{det({0, 0, 10, 10}, 1),
                                    det({20, 0, 30, 10}, 2)};
  std::vector<Detection> curr{det({1, 0, 11, 10}, 1),
                              det({21, 0, 31, 10}, 2)};
  const auto base =
      gate_and_align(solve_assignment(score_matrix(curr, prev)), curr, prev);
  // Swap both class labels consistently (a bijection on class ids).
  std::vector<Detection> prev2 = prev;
  std::vector<Detection> curr2 = curr;
  for (auto* v : {&prev2, &curr2})
    for (auto& d : *v) d.class_id = d.class_id == 1 ? 7 : 3;
  const auto relabeled = gate_and_align(
      solve_assignment(score_matrix(curr2, prev2)), curr2, prev2);
  CHECK(relabeled == base);
  CHECK(base == std::vector<int>{0, 1});
}

TEST_CASE("TrackState::update reports previous-track indices") {
  TrackState state;
  const std::vector<Detection> f0{det({0, 0, 10, 10}, 1)};
  const auto m0 = state.update(f0);
  CHECK(m0 == std::vector<int>{-1});
  REQUIRE(state.tracks.size() == 1);
  const int first_id = state.tracks[0].id;

  const std::vector<Detection> f1{det({1, 0, 11, 10}, 1),
                                  det({100, 100, 110, 110}, 1)};
  const auto m1 = state.update(f1);
  REQUIRE(m1.size() == 2);
  CHECK(m1[0] == 0);    // continues the old track (index into old list)
  CHECK(m1[1] == -1);   // new object
  REQUIRE(state.tracks.size() == 2);
  CHECK(state.tracks[0].id == first_id);
  CHECK(state.tracks[1].id != first_id);
  CHECK(state.tracks[0].age == 1);

  state.reset();
  CHECK(state.tracks.empty());
}
