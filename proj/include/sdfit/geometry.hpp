#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace sdfit {

/// Raw sample of a shape: d x n point matrix (d in {2,3}) with optional unit
/// normals of the same shape. Columns are points.
struct PointCloud {
  Eigen::MatrixXd points;
  Eigen::MatrixXd normals;  // 0 x 0 when absent

  int dim() const { return static_cast<int>(points.rows()); }
  int size() const { return static_cast<int>(points.cols()); }
  bool has_normals() const { return normals.size() > 0; }

  /// Throws std::invalid_argument if any invariant is violated:
  /// d in {2,3}, n >= 1, finite coordinates, normals (if present) matching
  /// in shape and unit length within 1e-6.
  void validate() const;
};

/// Axis-aligned box, lo <= hi componentwise.
struct Aabb {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }
  Eigen::VectorXd extent() const { return hi - lo; }
  bool contains(const Eigen::VectorXd& p, double tol = 0.0) const;
};

/// Symmetric and one-sided Chamfer/Hausdorff distances between two point sets.
struct MetricReport {
  double chamfer = 0.0;
  double hausdorff = 0.0;
  double chamfer_one_sided_ab = 0.0;
  double chamfer_one_sided_ba = 0.0;
  double hausdorff_one_sided_ab = 0.0;
  double hausdorff_one_sided_ba = 0.0;
};

/// Distance from each point of `cloud` to its k-th nearest other point
/// (neighbors exclude the query point). Requires 1 <= k <= n-1.
/// Exhaustive scan below 1000 points, kd-tree above; identical results.
std::vector<double> kth_nn_distance(const PointCloud& cloud, int k);

/// Default neighbor count for sampling bandwidths: min(50, n - 1).
int default_knn_k(int point_count);

/// Per-point distance from each column of a to the nearest column of b.
std::vector<double> min_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Chamfer / Hausdorff metrics between point sets a and b (columns).
/// One-sided Chamfer is the mean nearest distance, one-sided Hausdorff the
/// max; the symmetric versions are their mean resp. max.
MetricReport set_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Tight box around the cloud, each side grown by margin_fraction * side
/// length on both ends; degenerate sides grow by margin_fraction * longest
/// side instead.
Aabb bounding_box(const PointCloud& cloud, double margin_fraction);

/// Text format: one point per line, "x y [z] [nx ny [nz]]", '#' comments.
/// Column count (2/3/4/6) fixes dimension and normal presence; normals are
/// renormalized to unit length. Errors carry 1-based line numbers.
PointCloud load_point_cloud(const std::string& path);
void save_point_cloud(const PointCloud& cloud, const std::string& path);

}  // namespace sdfit
