#include "sdfit/linear_theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sdfit {

bool LinearProblem::degenerate(double tol) const {
  return dim() >= 2 && eigvals[1] - eigvals[0] <= tol * std::max(1.0, eigvals[dim() - 1]);
}

std::string to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::GlobalMin: return "global-min";
    case CriticalKind::StrictSaddleOrMax: return "strict-saddle-or-max";
    case CriticalKind::Origin: return "origin";
  }
  return "?";
}

PlanarSample make_planar_sample(int d, int n, double epsilon, std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("make_planar_sample: d >= 2 required");
  if (n < 1) throw std::invalid_argument("make_planar_sample: n >= 1 required");
  if (epsilon < 0.0) throw std::invalid_argument("make_planar_sample: negative epsilon");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // random unit normal, then an orthonormal in-plane basis via Gram-Schmidt
  Eigen::VectorXd normal(d);
  do {
    for (int a = 0; a < d; ++a) normal[a] = gauss(rng);
  } while (normal.norm() < 1e-8);
  normal.normalize();

  Eigen::MatrixXd basis(d, d - 1);
  int got = 0;
  while (got < d - 1) {
    Eigen::VectorXd v(d);
    for (int a = 0; a < d; ++a) v[a] = gauss(rng);
    v -= normal.dot(v) * normal;
    for (int j = 0; j < got; ++j) v -= basis.col(j).dot(v) * basis.col(j);
    if (v.norm() < 1e-8) continue;
    basis.col(got++) = v.normalized();
  }

  PlanarSample sample;
  sample.normal = normal;
  sample.epsilon = epsilon;
  sample.inplane.resize(d, n);
  sample.deviations.resize(d, n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd g(d - 1);
    for (int a = 0; a < d - 1; ++a) g[a] = gauss(rng);
    sample.inplane.col(i) = basis * g;

    // deviation direction uniform in the unit ball, scaled by epsilon
    Eigen::VectorXd dir(d);
    do {
      for (int a = 0; a < d; ++a) dir[a] = gauss(rng);
    } while (dir.norm() < 1e-8);
    dir.normalize();
    const double radius = std::pow(unif(rng), 1.0 / d);
    sample.deviations.col(i) = epsilon * radius * dir;
  }
  return sample;
}

void jacobi_eigen(const Eigen::MatrixXd& sym, Eigen::VectorXd& eigvals, Eigen::MatrixXd& eigvecs) {
  const int d = static_cast<int>(sym.rows());
  if (sym.cols() != d) throw std::invalid_argument("jacobi_eigen: matrix not square");

  Eigen::MatrixXd a = 0.5 * (sym + sym.transpose());  // enforce symmetry
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d);

  auto off_norm = [&]() {
    double s = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
  };

  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double threshold = 1e-12 * scale;
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && off_norm() > threshold; ++sweep) {
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        // smaller-magnitude root keeps rotations well conditioned
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });

  eigvals.resize(d);
  eigvecs.resize(d, d);
  for (int j = 0; j < d; ++j) {
    eigvals[j] = a(order[j], order[j]);
    Eigen::VectorXd col = v.col(order[j]);
    int arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0.0) col = -col;
    eigvecs.col(j) = col;
  }
}

LinearProblem diagonalize(const Eigen::MatrixXd& points, double lambda) {
  if (points.cols() < 1) throw std::invalid_argument("diagonalize: at least one point");
  if (points.rows() < 2) throw std::invalid_argument("diagonalize: d >= 2 required");
  if (!(lambda > 0.0)) throw std::invalid_argument("diagonalize: lambda must be positive");

  LinearProblem prob;
  prob.points = points;
  prob.lambda = lambda;
  const Eigen::MatrixXd moment = points * points.transpose();
  jacobi_eigen(moment, prob.eigvals, prob.eigvecs);
  // clamp tiny negative round-off: the moment matrix is PSD by construction
  for (int j = 0; j < prob.dim(); ++j) prob.eigvals[j] = std::max(0.0, prob.eigvals[j]);
  return prob;
}

LinearProblem problem_from_spectrum(const Eigen::VectorXd& eigvals, double lambda) {
  const int d = static_cast<int>(eigvals.size());
  if (d < 2) throw std::invalid_argument("problem_from_spectrum: d >= 2 required");
  if (!(lambda > 0.0)) throw std::invalid_argument("problem_from_spectrum: lambda > 0 required");
  for (int j = 0; j < d; ++j) {
    if (eigvals[j] < 0.0) throw std::invalid_argument("problem_from_spectrum: negative eigenvalue");
    if (j && eigvals[j] < eigvals[j - 1])
      throw std::invalid_argument("problem_from_spectrum: eigenvalues must ascend");
  }
  LinearProblem prob;
  prob.lambda = lambda;
  prob.eigvals = eigvals;
  prob.eigvecs = Eigen::MatrixXd::Identity(d, d);
  prob.points = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) prob.points(j, j) = std::sqrt(eigvals[j]);
  return prob;
}

LinearLossEval linear_loss_grad_hess(const Eigen::VectorXd& q, const LinearProblem& prob) {
  if (q.size() != prob.dim()) throw std::invalid_argument("linear_loss: dimension mismatch");
  if (!q.allFinite()) throw std::invalid_argument("linear_loss: non-finite q");

  const Eigen::VectorXd& ev = prob.eigvals;
  const double lambda = prob.lambda;
  const double r = q.squaredNorm() - 1.0;

  LinearLossEval out;
  out.value = q.dot(ev.asDiagonal() * q) + lambda * r * r;
  out.gradient = 2.0 * (ev.asDiagonal() * q + 2.0 * lambda * r * q);
  out.hessian = (2.0 * ev.array() + 4.0 * lambda * r).matrix().asDiagonal();
  out.hessian += 8.0 * lambda * q * q.transpose();
  return out;
}

double linear_loss_original(const Eigen::VectorXd& w, const LinearProblem& prob) {
  const double r = w.squaredNorm() - 1.0;
  return (prob.points.transpose() * w).squaredNorm() + prob.lambda * r * r;
}

CriticalPointSet critical_points(const LinearProblem& prob) {
  CriticalPointSet out;
  out.degenerate = prob.degenerate();
  out.warned_small_lambda = !(prob.lambda > 0.5 * prob.eigvals[0]);

  const int d = prob.dim();
  const double lambda = prob.lambda;

  auto classify = [&](const Eigen::VectorXd& q, bool is_origin) {
    CriticalPoint cp;
    cp.location = q;
    const LinearLossEval ev = linear_loss_grad_hess(q, prob);
    Eigen::MatrixXd vecs;
    jacobi_eigen(ev.hessian, cp.hessian_eigs, vecs);
    if (is_origin) {
      cp.kind = CriticalKind::Origin;
    } else {
      cp.kind = (cp.hessian_eigs.array() >= -1e-10).all() ? CriticalKind::GlobalMin
                                                          : CriticalKind::StrictSaddleOrMax;
    }
    return cp;
  };

  out.points.push_back(classify(Eigen::VectorXd::Zero(d), true));
  for (int j = 0; j < d; ++j) {
    const double radicand = 1.0 - prob.eigvals[j] / (2.0 * lambda);
    if (radicand <= 0.0) continue;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(d);
    q[j] = std::sqrt(radicand);
    out.points.push_back(classify(q, false));
    out.points.push_back(classify(-q, false));
  }
  return out;
}

double descent_smoothness_bound(const LinearProblem& prob, const Eigen::VectorXd& q0) {
  return 2.0 * prob.eigvals[prob.dim() - 1] +
         12.0 * prob.lambda * std::max(1.0, q0.squaredNorm());
}

DescentResult gradient_descent(const LinearProblem& prob, const Eigen::VectorXd& q0, double alpha,
                               int max_iters, double tol, bool record_trajectory) {
  if (q0.size() != prob.dim()) throw std::invalid_argument("gradient_descent: dimension mismatch");
  if (!(alpha > 0.0)) throw std::invalid_argument("gradient_descent: alpha must be positive");

  DescentResult res;
  res.step_size_ok = alpha < 1.0 / descent_smoothness_bound(prob, q0);

  Eigen::VectorXd q = q0;
  res.loss_trace.reserve(std::min(max_iters + 1, 1 << 20));
  if (record_trajectory) res.trajectory.push_back(q);

  for (int it = 0;; ++it) {
    const LinearLossEval ev = linear_loss_grad_hess(q, prob);
    res.loss_trace.push_back(ev.value);
    const double gnorm = ev.gradient.norm();
    res.iterations = it;
    res.final_loss = ev.value;
    res.final_gradient_norm = gnorm;
    if (gnorm < tol) {
      res.status = DescentStatus::Converged;
      break;
    }
    if (q.norm() > 1e3) {
      res.status = DescentStatus::Diverged;
      break;
    }
    if (it >= max_iters) {
      res.status = DescentStatus::MaxIterations;
      break;
    }
    q -= alpha * ev.gradient;
    if (record_trajectory) res.trajectory.push_back(q);
  }
  res.terminal = q;

  if (res.status == DescentStatus::Diverged) {
    res.label = "diverged";
    return res;
  }
  const CriticalPointSet cps = critical_points(prob);
  const double match_tol = 10.0 * tol;
  for (int i = 0; i < static_cast<int>(cps.points.size()); ++i) {
    if ((cps.points[i].location - q).norm() <= match_tol) {
      res.matched_critical = i;
      res.label = to_string(cps.points[i].kind);
      return res;
    }
  }
  res.label = "unmatched";
  return res;
}

std::vector<LiapunovSample> liapunov_check(const LinearProblem& prob, const Eigen::VectorXd& v,
                                           const Eigen::MatrixXd& samples) {
  if (v.size() != prob.dim()) throw std::invalid_argument("liapunov_check: dimension mismatch");

  std::vector<LiapunovSample> out(samples.cols());
  for (int i = 0; i < samples.cols(); ++i) {
    const Eigen::VectorXd q = samples.col(i);
    const double vq = v.dot(q);
    if (!(vq > 0.0))
      throw std::invalid_argument("liapunov_check: sample " + std::to_string(i) +
                                  " outside the half space v.q > 0");
    const double denom = 1.0 + q.squaredNorm();
    const LinearLossEval ev = linear_loss_grad_hess(q, prob);

    LiapunovSample s;
    s.h = (q - v).squaredNorm() / denom;
    s.dhdt_closed = -8.0 * vq / (denom * denom) * ev.value;
    // grad h = (2 (q - v) (1 + |q|^2) - 2 |q - v|^2 q) / (1 + |q|^2)^2
    const Eigen::VectorXd grad_h =
        (2.0 * (q - v) * denom - 2.0 * (q - v).squaredNorm() * q) / (denom * denom);
    s.dhdt_chain = grad_h.dot(-ev.gradient);
    out[i] = s;
  }
  return out;
}

}  // namespace sdfit
