#include "sdfit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sdfit/kdtree.hpp"
#include "sdfit/parallel.hpp"

namespace sdfit {

namespace {
constexpr int kBruteForceLimit = 1000;
}

void PointCloud::validate() const {
  const int d = dim();
  if (d != 2 && d != 3) throw std::invalid_argument("PointCloud: dimension must be 2 or 3");
  if (size() < 1) throw std::invalid_argument("PointCloud: at least one point required");
  if (!points.allFinite()) throw std::invalid_argument("PointCloud: non-finite coordinate");
  if (has_normals()) {
    if (normals.rows() != d || normals.cols() != points.cols())
      throw std::invalid_argument("PointCloud: normals shape mismatch");
    for (int i = 0; i < size(); ++i) {
      const double n = normals.col(i).norm();
      if (!(std::abs(n - 1.0) <= 1e-6))
        throw std::invalid_argument("PointCloud: normal " + std::to_string(i) + " not unit length");
    }
  }
}

bool Aabb::contains(const Eigen::VectorXd& p, double tol) const {
  return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
}

int default_knn_k(int point_count) { return std::min(50, point_count - 1); }

std::vector<double> kth_nn_distance(const PointCloud& cloud, int k) {
  cloud.validate();
  const int n = cloud.size();
  if (k < 1 || k >= n)
    throw std::invalid_argument("kth_nn_distance: k must satisfy 1 <= k <= n-1, got k=" +
                                std::to_string(k) + " with n=" + std::to_string(n));

  std::vector<double> out(n);
  if (n <= kBruteForceLimit) {
    parallel_chunks(n, 64, [&](std::size_t b, std::size_t e, std::size_t) {
      std::vector<double> sq(n);
      for (std::size_t i = b; i < e; ++i) {
        for (int j = 0; j < n; ++j)
          sq[j] = (cloud.points.col(j) - cloud.points.col(static_cast<int>(i))).squaredNorm();
        sq[i] = std::numeric_limits<double>::infinity();  // exclude self
        std::nth_element(sq.begin(), sq.begin() + (k - 1), sq.end());
        out[i] = std::sqrt(sq[k - 1]);
      }
    });
  } else {
    KdTree tree(cloud.points);
    parallel_chunks(n, 64, [&](std::size_t b, std::size_t e, std::size_t) {
      std::vector<int> idx;
      std::vector<double> sq;
      for (std::size_t i = b; i < e; ++i) {
        // k+1 neighbors: the query point itself comes back at distance 0
        tree.knn(cloud.points.col(static_cast<int>(i)), k + 1, idx, sq);
        out[i] = std::sqrt(sq[k]);
      }
    });
  }
  return out;
}

std::vector<double> min_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() == 0 || b.cols() == 0)
    throw std::invalid_argument("min_distances: empty point set");
  if (a.rows() != b.rows())
    throw std::invalid_argument("min_distances: dimension mismatch");

  const int na = static_cast<int>(a.cols());
  const int nb = static_cast<int>(b.cols());
  std::vector<double> out(na);

  if (nb <= kBruteForceLimit) {
    parallel_chunks(na, 64, [&](std::size_t s, std::size_t e, std::size_t) {
      for (std::size_t i = s; i < e; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < nb; ++j)
          best = std::min(best, (b.col(j) - a.col(static_cast<int>(i))).squaredNorm());
        out[i] = std::sqrt(best);
      }
    });
  } else {
    KdTree tree(b);
    parallel_chunks(na, 64, [&](std::size_t s, std::size_t e, std::size_t) {
      for (std::size_t i = s; i < e; ++i)
        out[i] = std::sqrt(tree.nearest_sq(a.col(static_cast<int>(i))));
    });
  }
  return out;
}

MetricReport set_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const std::vector<double> dab = min_distances(a, b);
  const std::vector<double> dba = min_distances(b, a);

  auto mean_max = [](const std::vector<double>& v) {
    double s = 0.0, m = 0.0;
    for (double x : v) {
      s += x;
      m = std::max(m, x);
    }
    return std::pair<double, double>{s / static_cast<double>(v.size()), m};
  };

  const auto [cab, hab] = mean_max(dab);
  const auto [cba, hba] = mean_max(dba);

  MetricReport r;
  r.chamfer_one_sided_ab = cab;
  r.chamfer_one_sided_ba = cba;
  r.hausdorff_one_sided_ab = hab;
  r.hausdorff_one_sided_ba = hba;
  r.chamfer = 0.5 * (cab + cba);
  r.hausdorff = std::max(hab, hba);
  return r;
}

Aabb bounding_box(const PointCloud& cloud, double margin_fraction) {
  cloud.validate();
  if (margin_fraction < 0.0) throw std::invalid_argument("bounding_box: negative margin");

  Aabb box;
  box.lo = cloud.points.rowwise().minCoeff();
  box.hi = cloud.points.rowwise().maxCoeff();

  const Eigen::VectorXd side = box.hi - box.lo;
  const double longest = side.maxCoeff();
  for (int a = 0; a < box.dim(); ++a) {
    const double pad = margin_fraction * (side[a] > 0.0 ? side[a] : longest);
    box.lo[a] -= pad;
    box.hi[a] += pad;
  }
  return box;
}

PointCloud load_point_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open point cloud file: " + path);

  std::vector<std::vector<double>> rows;
  int expected_cols = -1;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        vals.push_back(v);
      } catch (const std::exception&) {
        throw std::invalid_argument(path + ": line " + std::to_string(lineno) +
                                    ": cannot parse '" + tok + "' as a number");
      }
    }
    if (vals.empty()) continue;
    const int c = static_cast<int>(vals.size());
    if (c != 2 && c != 3 && c != 4 && c != 6)
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) +
                                  ": expected 2, 3, 4 or 6 columns, got " + std::to_string(c));
    if (expected_cols < 0) expected_cols = c;
    if (c != expected_cols)
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) +
                                  ": inconsistent column count (" + std::to_string(c) + " vs " +
                                  std::to_string(expected_cols) + ")");
    if (!std::all_of(vals.begin(), vals.end(), [](double v) { return std::isfinite(v); }))
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) + ": non-finite value");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no points found");

  const bool with_normals = expected_cols == 4 || expected_cols == 6;
  const int d = with_normals ? expected_cols / 2 : expected_cols;

  PointCloud cloud;
  cloud.points.resize(d, static_cast<int>(rows.size()));
  if (with_normals) cloud.normals.resize(d, static_cast<int>(rows.size()));
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    for (int a = 0; a < d; ++a) cloud.points(a, i) = rows[i][a];
    if (with_normals) {
      Eigen::VectorXd n(d);
      for (int a = 0; a < d; ++a) n[a] = rows[i][d + a];
      const double len = n.norm();
      if (len <= 0.0)
        throw std::invalid_argument(path + ": zero-length normal for point " + std::to_string(i));
      cloud.normals.col(i) = n / len;
    }
  }
  cloud.validate();
  return cloud;
}

void save_point_cloud(const PointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);
  const int d = cloud.dim();
  for (int i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < d; ++a) std::fprintf(f, "%s%.17g", a ? " " : "", cloud.points(a, i));
    if (cloud.has_normals())
      for (int a = 0; a < d; ++a) std::fprintf(f, " %.17g", cloud.normals(a, i));
    std::fputc('\n', f);
  }
  std::fclose(f);
}

}  // namespace sdfit
