#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

#include "dipole/util.hpp"

namespace dipole {

// Median-split kd-tree over 3D points. Read-only thread-safe after build.
// Neighbor ties are broken by lower point index.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& pts) { build(pts); }

  void build(const std::vector<Vec3>& pts) {
    points_ = pts;
    order_.resize(pts.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.clear();
    nodes_.reserve(pts.size() * 2);
    if (!pts.empty()) root_ = build_range(0, static_cast<int>(pts.size()), 0);
  }

  std::size_t size() const { return points_.size(); }

  // k nearest points to `query`, ascending (distance, index).
  std::vector<int> knn(const Vec3& query, int k) const {
    std::vector<int> result;
    if (k <= 0 || points_.empty()) return result;
    k = std::min<int>(k, static_cast<int>(points_.size()));
    // max-heap of (dist2, index)
    std::priority_queue<std::pair<double, int>> heap;
    search(root_, query, k, heap);
    result.resize(heap.size());
    for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
      result[i] = heap.top().second;
      heap.pop();
    }
    return result;
  }

  int nearest(const Vec3& query) const {
    auto v = knn(query, 1);
    return v.empty() ? -1 : v[0];
  }

  double nearest_distance(const Vec3& query) const {
    int i = nearest(query);
    return i < 0 ? std::numeric_limits<double>::infinity() : (points_[i] - query).norm();
  }

 private:
  struct Node {
    int point = -1;  // index into points_
    int axis = 0;
    int left = -1, right = -1;
  };

  int build_range(int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    int axis = depth % 3;
    int mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](int a, int b) {
                       double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    Node node;
    node.point = order_[mid];
    node.axis = axis;
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int l = build_range(lo, mid, depth + 1);
    int r = build_range(mid + 1, hi, depth + 1);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(int ni, const Vec3& q, int k,
              std::priority_queue<std::pair<double, int>>& heap) const {
    if (ni < 0) return;
    const Node& node = nodes_[ni];
    const Vec3& p = points_[node.point];
    double d2 = (p - q).squaredNorm();
    // tie-break: with equal distance prefer the lower index, so push a key
    // that sorts (dist2, index) ascending in a max-heap of negated index
    std::pair<double, int> key(d2, node.point);
    if (static_cast<int>(heap.size()) < k) {
      heap.push(key);
    } else if (key < heap.top()) {
      heap.pop();
      heap.push(key);
    }
    double diff = q[node.axis] - p[node.axis];
    int near = diff <= 0 ? node.left : node.right;
    int far = diff <= 0 ? node.right : node.left;
    search(near, q, k, heap);
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().first) search(far, q, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace dipole
