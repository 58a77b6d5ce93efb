// Exact nearest-neighbor queries over a fixed point cloud. A kd-tree is an
// internal accelerator only; results are identical to a linear scan.
#pragma once

#include <cstddef>
#include <vector>

#include "meshtrace/geometry.hpp"

namespace meshtrace {

class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  struct Hit {
    int index = -1;
    double dist2 = 0.0;
  };

  // Index of the closest stored point and its squared distance. On exact
  // distance ties the lowest index wins.
  Hit nearest(const Vec3& query) const;

  // Nearest and second-nearest squared distances (second may come from the
  // same tie class); used by gradient-check margin filters.
  std::pair<Hit, Hit> nearest_two(const Vec3& query) const;

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct Node {
    int axis = 0;
    int point = -1;   // index into points_
    int left = -1;
    int right = -1;
  };

  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, Hit& best, Hit& second) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace meshtrace
