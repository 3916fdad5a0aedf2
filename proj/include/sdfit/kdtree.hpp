#pragma once

#include <Eigen/Core>
#include <vector>

namespace sdfit {

/// Axis-aligned median-split kd-tree over a fixed point set (columns of a
/// d x n matrix, d in {2,3}). Queries are exact: every candidate distance is
/// computed with the same expression a brute-force scan uses, so results
/// agree with exhaustive search bit for bit.
class KdTree {
 public:
  explicit KdTree(const Eigen::MatrixXd& points, int leaf_size = 16);

  /// Indices and squared distances of the k nearest points to q, ascending by
  /// distance. k is clamped to the point count.
  void knn(const Eigen::VectorXd& q, int k,
           std::vector<int>& indices, std::vector<double>& sq_dists) const;

  /// Squared distance to the nearest point.
  double nearest_sq(const Eigen::VectorXd& q) const;

  int size() const { return static_cast<int>(points_.cols()); }

 private:
  struct Node {
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;     // leaf range in order_
    int axis = 0;
    double split = 0.0;
  };

  int build(int begin, int end);

  Eigen::MatrixXd points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
  int leaf_size_;
};

}  // namespace sdfit
