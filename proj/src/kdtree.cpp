#include "sdfit/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>

namespace sdfit {

namespace {

// max-heap entry: worst current neighbor on top
struct HeapEntry {
  double sq;
  int idx;
  bool operator<(const HeapEntry& o) const {
    if (sq != o.sq) return sq < o.sq;
    return idx < o.idx;  // tie break keeps results order-stable
  }
};

}  // namespace

KdTree::KdTree(const Eigen::MatrixXd& points, int leaf_size)
    : points_(points), leaf_size_(std::max(1, leaf_size)) {
  if (points_.cols() == 0) throw std::invalid_argument("KdTree: empty point set");
  order_.resize(points_.cols());
  for (int i = 0; i < static_cast<int>(order_.size()); ++i) order_[i] = i;
  nodes_.reserve(2 * order_.size() / leaf_size_ + 4);
  root_ = build(0, static_cast<int>(order_.size()));
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);

  if (end - begin <= leaf_size_) return id;

  // split on widest axis at the median
  const int d = static_cast<int>(points_.rows());
  int axis = 0;
  double best_extent = -1.0;
  for (int a = 0; a < d; ++a) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int i = begin; i < end; ++i) {
      const double v = points_(a, order_[i]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_extent) {
      best_extent = hi - lo;
      axis = a;
    }
  }
  if (best_extent <= 0.0) return id;  // all points coincide; keep as leaf

  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_(axis, a) < points_(axis, b); });

  nodes_[id].axis = axis;
  nodes_[id].split = points_(axis, order_[mid]);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::knn(const Eigen::VectorXd& q, int k,
                 std::vector<int>& indices, std::vector<double>& sq_dists) const {
  k = std::min<int>(k, size());
  indices.clear();
  sq_dists.clear();
  if (k <= 0) return;

  std::priority_queue<HeapEntry> heap;
  auto visit = [&](int i) {
    const double sq = (points_.col(i) - q).squaredNorm();
    if (static_cast<int>(heap.size()) < k) {
      heap.push({sq, i});
    } else if (HeapEntry{sq, i} < heap.top()) {
      heap.pop();
      heap.push({sq, i});
    }
  };

  // iterative depth-first descent with pruning
  std::vector<int> stack;
  stack.push_back(root_);
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) visit(order_[i]);
      continue;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    if (static_cast<int>(heap.size()) < k || delta * delta <= heap.top().sq) {
      stack.push_back(far);
    }
    stack.push_back(near);
  }

  // pruning uses a stale bound for nodes already stacked, so re-check is not
  // needed: visiting extra leaves only adds candidates, never loses any
  indices.resize(heap.size());
  sq_dists.resize(heap.size());
  for (int i = static_cast<int>(heap.size()) - 1; !heap.empty(); --i) {
    indices[i] = heap.top().idx;
    sq_dists[i] = heap.top().sq;
    heap.pop();
  }
}

double KdTree::nearest_sq(const Eigen::VectorXd& q) const {
  static thread_local std::vector<int> idx;
  static thread_local std::vector<double> sq;
  knn(q, 1, idx, sq);
  return sq[0];
}

}  // namespace sdfit
