#include "meshtrace/nn.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "meshtrace/error.hpp"

namespace meshtrace {

namespace {
double axis_value(const Vec3& v, int axis) {
  return axis == 0 ? v.x : (axis == 1 ? v.y : v.z);
}
}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw ArgumentError("kd-tree needs at least one point");
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = (lo + hi) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) {
                     const double va = axis_value(points_[a], axis);
                     const double vb = axis_value(points_[b], axis);
                     return va < vb || (va == vb && a < b);
                   });
  Node node;
  node.axis = axis;
  node.point = idx[mid];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::search(int node, const Vec3& q, Hit& best, Hit& second) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  const double d2 = norm2(q - p);

  const bool better_than_best =
      d2 < best.dist2 || (d2 == best.dist2 && n.point < best.index);
  if (best.index < 0 || better_than_best) {
    second = best;
    best = {n.point, d2};
  } else if (second.index < 0 || d2 < second.dist2) {
    second = {n.point, d2};
  }

  const double diff = axis_value(q, n.axis) - axis_value(p, n.axis);
  const int near = diff <= 0.0 ? n.left : n.right;
  const int far = diff <= 0.0 ? n.right : n.left;
  search(near, q, best, second);
  // Prune against the second-best radius so both hits stay exact; <= keeps
  // equal-distance candidates reachable for the lowest-index tie rule.
  if (second.index < 0 || diff * diff <= second.dist2)
    search(far, q, best, second);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  Hit best, second;
  best.dist2 = std::numeric_limits<double>::infinity();
  second.dist2 = std::numeric_limits<double>::infinity();
  search(root_, query, best, second);
  return best;
}

std::pair<KdTree::Hit, KdTree::Hit> KdTree::nearest_two(
    const Vec3& query) const {
  Hit best, second;
  best.dist2 = std::numeric_limits<double>::infinity();
  second.dist2 = std::numeric_limits<double>::infinity();
  search(root_, query, best, second);
  return {best, second};
}

}  // namespace meshtrace
