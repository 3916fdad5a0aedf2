#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace sdfit {

/// Quadratic-plus-quartic loss for the linear model f(x;w) = w.x fitted to a
/// point set with unit-gradient penalty weight lambda. Stored in diagonalized
/// coordinates: the second-moment matrix sum_i x_i x_i^T = U diag(eigvals) U^T
/// with eigvals ascending and U orthonormal.
struct LinearProblem {
  Eigen::MatrixXd points;   // d x n (columns); may encode a synthetic spectrum
  double lambda = 0.1;
  Eigen::VectorXd eigvals;  // ascending, nonnegative
  Eigen::MatrixXd eigvecs;  // columns u_1..u_d

  int dim() const { return static_cast<int>(eigvals.size()); }
  /// True when the two smallest eigenvalues coincide within tol; the critical
  /// point classification below is then reported but not meaningful.
  bool degenerate(double tol = 1e-9) const;
};

enum class CriticalKind { GlobalMin, StrictSaddleOrMax, Origin };

std::string to_string(CriticalKind k);

struct CriticalPoint {
  Eigen::VectorXd location;
  CriticalKind kind = CriticalKind::Origin;
  Eigen::VectorXd hessian_eigs;
};

/// Points x_i = y_i + eps_i near a hyperplane through the origin: unit normal,
/// in-plane samples y_i (y_i . normal = 0) and deviations with max norm <=
/// epsilon. The deviation directions are drawn once from the seed and scaled,
/// so sweeps over epsilon with a fixed seed vary only the scale.
struct PlanarSample {
  Eigen::VectorXd normal;
  Eigen::MatrixXd inplane;     // d x n
  Eigen::MatrixXd deviations;  // d x n
  double epsilon = 0.0;

  Eigen::MatrixXd points() const { return inplane + deviations; }
};

PlanarSample make_planar_sample(int d, int n, double epsilon, std::uint64_t seed);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations
/// (off-diagonal norm threshold 1e-12). Ascending eigenvalues; each
/// eigenvector's largest-magnitude entry is made positive.
void jacobi_eigen(const Eigen::MatrixXd& sym, Eigen::VectorXd& eigvals, Eigen::MatrixXd& eigvecs);

/// Builds the diagonalized problem from raw points (d >= 2).
LinearProblem diagonalize(const Eigen::MatrixXd& points, double lambda);

/// Synthetic problem with the given ascending spectrum and U = I; the stored
/// points are sqrt(eig_j) e_j so the second-moment identity holds exactly.
LinearProblem problem_from_spectrum(const Eigen::VectorXd& eigvals, double lambda);

struct LinearLossEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Loss q^T D q + lambda (|q|^2 - 1)^2 with its exact gradient and Hessian.
LinearLossEval linear_loss_grad_hess(const Eigen::VectorXd& q, const LinearProblem& prob);

/// Loss in original coordinates: sum_i (w.x_i)^2 + lambda (|w|^2 - 1)^2.
double linear_loss_original(const Eigen::VectorXd& w, const LinearProblem& prob);

/// All critical points in diagonalized coordinates: the origin plus
/// +-sqrt(1 - eig_j / (2 lambda)) e_j for every j with positive radicand,
/// classified by Hessian spectrum. The +-q_1 pair is the global minimum
/// when lambda > eig_1 / 2; `warned_small_lambda` reports the case where
/// that guarantee does not apply.
struct CriticalPointSet {
  std::vector<CriticalPoint> points;
  bool warned_small_lambda = false;
  bool degenerate = false;
};

CriticalPointSet critical_points(const LinearProblem& prob);

enum class DescentStatus { Converged, MaxIterations, Diverged };

struct DescentResult {
  Eigen::VectorXd terminal;
  DescentStatus status = DescentStatus::MaxIterations;
  int iterations = 0;
  double final_loss = 0.0;
  double final_gradient_norm = 0.0;
  int matched_critical = -1;  // index into critical_points(prob), -1 if none
  std::string label;          // "global-min", "strict-saddle-or-max", "origin",
                              // "unmatched", "diverged"
  std::vector<double> loss_trace;
  std::vector<Eigen::VectorXd> trajectory;  // filled only on request
  bool step_size_ok = true;
};

/// Crude smoothness bound L = 2 eig_d + 12 lambda max(1, |q0|^2); steps
/// alpha < 1/L keep descent monotone. The CLI default is 0.5 / L.
double descent_smoothness_bound(const LinearProblem& prob, const Eigen::VectorXd& q0);

/// Plain gradient descent q <- q - alpha grad l(q), stopping when the
/// gradient norm drops below tol. The terminal point is matched against
/// critical_points within 10*tol. |q| > 1e3 reports divergence.
DescentResult gradient_descent(const LinearProblem& prob, const Eigen::VectorXd& q0, double alpha,
                               int max_iters, double tol, bool record_trajectory = false);

struct LiapunovSample {
  double h = 0.0;
  double dhdt_closed = 0.0;
  double dhdt_chain = 0.0;
};

/// Evaluates h(q) = |q - v|^2 / (1 + |q|^2) and its derivative along the
/// gradient flow, once by the closed form -8 (v.q) l(q) / (1 + |q|^2)^2 and
/// once by the chain rule grad h . (-grad l). The closed form is exact for
/// planar data (eig_1 = 0), where |v| = 1. Every sample must lie strictly in
/// the half space v.q > 0.
std::vector<LiapunovSample> liapunov_check(const LinearProblem& prob, const Eigen::VectorXd& v,
                                           const Eigen::MatrixXd& samples);

}  // namespace sdfit
