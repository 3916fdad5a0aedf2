#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <fstream>
#include <random>

#include "sdfit/geometry.hpp"
#include "sdfit/kdtree.hpp"

using namespace sdfit;

namespace {

PointCloud cloud_from(const Eigen::MatrixXd& pts) {
  PointCloud c;
  c.points = pts;
  return c;
}

Eigen::MatrixXd random_points(int d, int n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(d, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) m(a, i) = g(rng);
  return m;
}

// brute-force oracle for the k-th neighbor distance
std::vector<double> kth_nn_brute(const Eigen::MatrixXd& pts, int k) {
  const int n = static_cast<int>(pts.cols());
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> sq;
    for (int j = 0; j < n; ++j)
      if (j != i) sq.push_back((pts.col(j) - pts.col(i)).squaredNorm());
    std::sort(sq.begin(), sq.end());
    out[i] = std::sqrt(sq[k - 1]);
  }
  return out;
}

}  // namespace

TEST_CASE("kth_nn_distance on collinear points") {
  Eigen::MatrixXd pts(2, 3);
  pts << 0, 1, 3, 0, 0, 0;
  const PointCloud c = cloud_from(pts);

  const auto k1 = kth_nn_distance(c, 1);
  CHECK(k1[0] == doctest::Approx(1.0));
  CHECK(k1[1] == doctest::Approx(1.0));
  CHECK(k1[2] == doctest::Approx(2.0));

  const auto k2 = kth_nn_distance(c, 2);
  CHECK(k2[0] == doctest::Approx(3.0));
  CHECK(k2[1] == doctest::Approx(2.0));
  CHECK(k2[2] == doctest::Approx(3.0));
}

TEST_CASE("kth_nn_distance rejects k >= n") {
  const PointCloud c = cloud_from(random_points(3, 5, 7));
  CHECK_THROWS_AS(kth_nn_distance(c, 5), std::invalid_argument);
  CHECK_THROWS_AS(kth_nn_distance(c, 0), std::invalid_argument);
}

TEST_CASE("kth_nn_distance matches the all-pairs oracle exactly") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd pts(3, 100);
  for (int i = 0; i < 100; ++i)
    for (int a = 0; a < 3; ++a) pts(a, i) = u(rng);
  const PointCloud c = cloud_from(pts);

  const auto got = kth_nn_distance(c, 50);
  const auto want = kth_nn_brute(pts, 50);
  for (int i = 0; i < 100; ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("kd-tree path agrees exactly with the brute-force path") {
  const Eigen::MatrixXd pts = random_points(3, 1500, 23);  // above the kd-tree cutoff
  const PointCloud c = cloud_from(pts);
  const auto got = kth_nn_distance(c, 50);
  const auto want = kth_nn_brute(pts, 50);
  for (int i = 0; i < c.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("kth_nn_distance is monotone in k") {
  const PointCloud c = cloud_from(random_points(3, 40, 3));
  std::vector<std::vector<double>> by_k;
  for (int k = 1; k < 10; ++k) by_k.push_back(kth_nn_distance(c, k));
  for (int k = 1; k < 9; ++k)
    for (int i = 0; i < 40; ++i) CHECK(by_k[k][i] >= by_k[k - 1][i]);
}

TEST_CASE("set_distances identity and single pair") {
  const Eigen::MatrixXd a = random_points(3, 10, 5);
  const MetricReport same = set_distances(a, a);
  CHECK(same.chamfer == 0.0);
  CHECK(same.hausdorff == 0.0);
  CHECK(same.chamfer_one_sided_ab == 0.0);
  CHECK(same.hausdorff_one_sided_ba == 0.0);

  Eigen::MatrixXd p(3, 1), q(3, 1);
  p << 0, 0, 0;
  q << 1, 0, 0;
  const MetricReport r = set_distances(p, q);
  CHECK(r.chamfer == doctest::Approx(1.0));
  CHECK(r.hausdorff == doctest::Approx(1.0));
  CHECK(r.chamfer_one_sided_ab == doctest::Approx(1.0));
  CHECK(r.chamfer_one_sided_ba == doctest::Approx(1.0));
  CHECK(r.hausdorff_one_sided_ab == doctest::Approx(1.0));
  CHECK(r.hausdorff_one_sided_ba == doctest::Approx(1.0));
}

TEST_CASE("set_distances equals the double-loop oracle") {
  const Eigen::MatrixXd a = random_points(3, 3, 17);
  const Eigen::MatrixXd b = random_points(3, 4, 18);
  const MetricReport r = set_distances(a, b);

  auto one_sided = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    double mean = 0.0, mx = 0.0;
    for (int i = 0; i < x.cols(); ++i) {
      double best = 1e300;
      for (int j = 0; j < y.cols(); ++j) best = std::min(best, (x.col(i) - y.col(j)).norm());
      mean += best;
      mx = std::max(mx, best);
    }
    return std::pair<double, double>{mean / x.cols(), mx};
  };
  const auto [cab, hab] = one_sided(a, b);
  const auto [cba, hba] = one_sided(b, a);
  CHECK(r.chamfer_one_sided_ab == doctest::Approx(cab).epsilon(1e-14));
  CHECK(r.chamfer_one_sided_ba == doctest::Approx(cba).epsilon(1e-14));
  CHECK(r.hausdorff_one_sided_ab == doctest::Approx(hab).epsilon(1e-14));
  CHECK(r.hausdorff_one_sided_ba == doctest::Approx(hba).epsilon(1e-14));
  CHECK(r.chamfer == doctest::Approx(0.5 * (cab + cba)));
  CHECK(r.hausdorff == doctest::Approx(std::max(hab, hba)));
}

TEST_CASE("one-sided Hausdorff dominates one-sided Chamfer") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::MatrixXd a = random_points(3, 15, 100 + seed);
    const Eigen::MatrixXd b = random_points(3, 11, 200 + seed);
    const MetricReport r = set_distances(a, b);
    CHECK(r.hausdorff_one_sided_ab >= r.chamfer_one_sided_ab);
    CHECK(r.hausdorff_one_sided_ba >= r.chamfer_one_sided_ba);
  }
}

TEST_CASE("set_distances is rigid-motion invariant") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(3, 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd rot = qr.householderQ();
  if (rot.determinant() < 0) rot.col(0) *= -1.0;
  Eigen::Vector3d shift(0.3, -1.2, 2.5);

  const Eigen::MatrixXd a = random_points(3, 25, 41);
  const Eigen::MatrixXd b = random_points(3, 30, 42);
  const MetricReport r0 = set_distances(a, b);
  const MetricReport r1 =
      set_distances((rot * a).colwise() + shift, (rot * b).colwise() + shift);
  CHECK(r1.chamfer == doctest::Approx(r0.chamfer).epsilon(1e-9));
  CHECK(r1.hausdorff == doctest::Approx(r0.hausdorff).epsilon(1e-9));
}

TEST_CASE("set_distances rejects empty sets") {
  Eigen::MatrixXd empty(3, 0);
  CHECK_THROWS_AS(set_distances(empty, random_points(3, 3, 1)), std::invalid_argument);
}

TEST_CASE("bounding_box margins") {
  Eigen::MatrixXd sq(2, 4);
  sq << 0, 1, 1, 0, 0, 0, 1, 1;
  const PointCloud c = cloud_from(sq);

  const Aabb tight = bounding_box(c, 0.0);
  CHECK(tight.lo[0] == 0.0);
  CHECK(tight.hi[1] == 1.0);

  const Aabb wide = bounding_box(c, 0.1);
  CHECK(wide.lo[0] == doctest::Approx(-0.1));
  CHECK(wide.lo[1] == doctest::Approx(-0.1));
  CHECK(wide.hi[0] == doctest::Approx(1.1));
  CHECK(wide.hi[1] == doctest::Approx(1.1));
}

TEST_CASE("bounding_box expands degenerate sides by the largest side") {
  Eigen::MatrixXd flat(3, 4);
  flat << 0, 2, 2, 0, 0, 0, 1, 1, 0, 0, 0, 0;  // z = 0 plane, largest side 2
  const Aabb box = bounding_box(cloud_from(flat), 0.1);
  CHECK(box.lo[2] == doctest::Approx(-0.2));
  CHECK(box.hi[2] == doctest::Approx(0.2));
}

TEST_CASE("every point lies inside its bounding box") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud c = cloud_from(random_points(3, 50, 300 + seed, 2.0));
    for (double m : {0.0, 0.05, 0.5}) {
      const Aabb box = bounding_box(c, m);
      for (int i = 0; i < c.size(); ++i) CHECK(box.contains(c.points.col(i)));
    }
  }
}

TEST_CASE("point cloud text round trip and validation") {
  PointCloud c;
  c.points = random_points(3, 12, 55);
  c.normals.resize(3, 12);
  std::mt19937_64 rng(56);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 12; ++i) {
    Eigen::Vector3d n(g(rng), g(rng), g(rng));
    c.normals.col(i) = n.normalized();
  }
  c.validate();

  const std::string path = "geom_roundtrip.txt";
  save_point_cloud(c, path);
  const PointCloud back = load_point_cloud(path);
  CHECK(back.points == c.points);
  CHECK(back.has_normals());
  CHECK((back.normals - c.normals).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("loader reports the offending line") {
  const std::string path = "geom_bad.txt";
  {
    std::ofstream f(path);
    f << "# comment\n0 0 0\n1.0 abc 2.0\n";
  }
  try {
    load_point_cloud(path);
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("loader rejects inconsistent column counts") {
  const std::string path = "geom_cols.txt";
  {
    std::ofstream f(path);
    f << "0 0 0\n1 1\n";
  }
  CHECK_THROWS_AS(load_point_cloud(path), std::invalid_argument);
}

TEST_CASE("non-unit normals are rejected by validate") {
  PointCloud c;
  c.points = random_points(3, 4, 9);
  c.normals = Eigen::MatrixXd::Constant(3, 4, 0.7);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
