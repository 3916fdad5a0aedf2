#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "sdfit/linear_theory.hpp"

using namespace sdfit;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST_CASE("jacobi matches Eigen's selfadjoint solver") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 2 + trial % 6;
    Eigen::MatrixXd m(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = g(rng);
    m = (m + m.transpose()).eval();

    Eigen::VectorXd vals;
    Eigen::MatrixXd vecs;
    jacobi_eigen(m, vals, vecs);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(m);
    for (int j = 0; j < d; ++j) CHECK(vals[j] == doctest::Approx(ref.eigenvalues()[j]).epsilon(1e-12));
    // orthonormality and the eigen relation
    CHECK((vecs.transpose() * vecs - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((m * vecs - vecs * vals.asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-9);
    // sign fix: the largest-magnitude entry of each column is positive
    for (int j = 0; j < d; ++j) {
      int arg = 0;
      vecs.col(j).cwiseAbs().maxCoeff(&arg);
      CHECK(vecs(arg, j) > 0.0);
    }
  }
}

TEST_CASE("diagonalize standard basis in 2D") {
  Eigen::MatrixXd pts(2, 2);
  pts << 1, 0, 0, 1;
  const LinearProblem prob = diagonalize(pts, 0.1);
  CHECK(prob.eigvals[0] == doctest::Approx(1.0));
  CHECK(prob.eigvals[1] == doctest::Approx(1.0));
  CHECK(prob.degenerate());
}

TEST_CASE("diagonalize exact planar data finds the plane normal") {
  const PlanarSample sample = make_planar_sample(3, 100, 0.0, 99);
  const LinearProblem prob = diagonalize(sample.points(), 0.1);
  CHECK(prob.eigvals[0] <= 1e-10);
  CHECK(std::abs(prob.eigvecs.col(0).dot(sample.normal)) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("planar perturbation trend follows the eigen-perturbation bounds") {
  // same seed => same in-plane points and deviation directions, scaled
  double prev_l1 = 1e300, prev_mis = 1e300;
  for (double eps : {0.1, 0.05, 0.025}) {
    const PlanarSample sample = make_planar_sample(3, 200, eps, 7);
    const LinearProblem prob = diagonalize(sample.points(), 0.1);
    const double mis = std::min((prob.eigvecs.col(0) - sample.normal).norm(),
                                (prob.eigvecs.col(0) + sample.normal).norm());
    CHECK(prob.eigvals[0] < prev_l1);
    CHECK(mis < prev_mis);
    prev_l1 = prob.eigvals[0];
    prev_mis = mis;
  }
}

TEST_CASE("loss, gradient and Hessian closed forms") {
  const LinearProblem prob = problem_from_spectrum(vec2(0.0, 1.0), 0.1);

  SUBCASE("q = 0") {
    const LinearLossEval ev = linear_loss_grad_hess(Eigen::VectorXd::Zero(2), prob);
    CHECK(ev.value == doctest::Approx(0.1));
    CHECK(ev.gradient.norm() == 0.0);
    CHECK(ev.hessian(0, 0) == doctest::Approx(-0.4));
    CHECK(ev.hessian(1, 1) == doctest::Approx(2.0 - 0.4));
    CHECK(ev.hessian(0, 1) == 0.0);
  }

  SUBCASE("q = e1 is the global minimum with Hessian diag(0.8, 2)") {
    const LinearLossEval ev = linear_loss_grad_hess(vec2(1.0, 0.0), prob);
    CHECK(ev.value == doctest::Approx(0.0));
    CHECK(ev.gradient.norm() < 1e-15);
    CHECK(ev.hessian(0, 0) == doctest::Approx(0.8));
    CHECK(ev.hessian(1, 1) == doctest::Approx(2.0));
  }
}

TEST_CASE("gradient and Hessian match finite differences") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  const LinearProblem prob = problem_from_spectrum(vec3(0.05, 0.3, 1.2), 0.2);

  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd q(3);
    for (int a = 0; a < 3; ++a) q[a] = g(rng);
    const LinearLossEval ev = linear_loss_grad_hess(q, prob);

    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      Eigen::VectorXd qp = q, qm = q;
      qp[a] += h;
      qm[a] -= h;
      const double fd = (linear_loss_grad_hess(qp, prob).value -
                         linear_loss_grad_hess(qm, prob).value) / (2 * h);
      CHECK(ev.gradient[a] == doctest::Approx(fd).epsilon(1e-7));
      const Eigen::VectorXd gd = (linear_loss_grad_hess(qp, prob).gradient -
                                  linear_loss_grad_hess(qm, prob).gradient) / (2 * h);
      for (int b = 0; b < 3; ++b) CHECK(ev.hessian(b, a) == doctest::Approx(gd[b]).epsilon(1e-5));
    }
  }
}

TEST_CASE("coordinate-change consistency between original and diagonal forms") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd pts(3, 40);
  for (int i = 0; i < 40; ++i)
    for (int a = 0; a < 3; ++a) pts(a, i) = g(rng);
  const LinearProblem prob = diagonalize(pts, 0.15);

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd w(3);
    for (int a = 0; a < 3; ++a) w[a] = g(rng);
    const Eigen::VectorXd q = prob.eigvecs.transpose() * w;
    const double lw = linear_loss_original(w, prob);
    const double lq = linear_loss_grad_hess(q, prob).value;
    CHECK(lq == doctest::Approx(lw).epsilon(1e-10));
  }
}

TEST_CASE("critical point enumeration of Theorem-1 style cases") {
  SUBCASE("D = diag(0, 1), lambda = 0.1: exactly 3 critical points") {
    const CriticalPointSet cps = critical_points(problem_from_spectrum(vec2(0.0, 1.0), 0.1));
    CHECK(cps.points.size() == 3);
    CHECK(!cps.warned_small_lambda);
    int mins = 0;
    for (const auto& cp : cps.points) {
      if (cp.kind == CriticalKind::GlobalMin) {
        ++mins;
        CHECK(std::abs(cp.location.cwiseAbs()[0] - 1.0) < 1e-12);
        CHECK(cp.hessian_eigs[0] == doctest::Approx(0.8));
        CHECK(cp.hessian_eigs[1] == doctest::Approx(2.0));
      }
      if (cp.kind == CriticalKind::Origin) CHECK(cp.hessian_eigs[0] == doctest::Approx(-0.4));
    }
    CHECK(mins == 2);
  }

  SUBCASE("D = diag(0.02, 0.04), lambda = 0.1: the full 2d+1 points") {
    const CriticalPointSet cps = critical_points(problem_from_spectrum(vec2(0.02, 0.04), 0.1));
    CHECK(cps.points.size() == 5);
    int mins = 0, saddles = 0;
    for (const auto& cp : cps.points) {
      if (cp.kind == CriticalKind::GlobalMin) {
        ++mins;
        CHECK(cp.location.cwiseAbs().maxCoeff() == doctest::Approx(std::sqrt(0.9)));
      }
      if (cp.kind == CriticalKind::StrictSaddleOrMax) {
        ++saddles;
        CHECK(cp.location.cwiseAbs().maxCoeff() == doctest::Approx(std::sqrt(0.8)));
      }
    }
    CHECK(mins == 2);
    CHECK(saddles == 2);
  }

  SUBCASE("lambda below eig_1/2 leaves only the origin and warns") {
    const CriticalPointSet cps = critical_points(problem_from_spectrum(vec2(0.5, 1.0), 0.1));
    CHECK(cps.points.size() == 1);
    CHECK(cps.points[0].kind == CriticalKind::Origin);
    CHECK(cps.warned_small_lambda);
  }
}

TEST_CASE("emitted critical points have vanishing gradients") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 4;
    Eigen::VectorXd ev(d);
    double acc = 0.05 * u(rng);
    for (int j = 0; j < d; ++j) {
      ev[j] = acc;
      acc += 0.05 + u(rng);
    }
    const double lambda = 0.5 * ev[0] + 0.05 + u(rng);
    const LinearProblem prob = problem_from_spectrum(ev, lambda);
    for (const auto& cp : critical_points(prob).points)
      CHECK(linear_loss_grad_hess(cp.location, prob).gradient.norm() < 1e-9);
  }
}

TEST_CASE("global minimum value equals eig1 - eig1^2/(4 lambda)") {
  const Eigen::VectorXd ev = vec3(0.08, 0.4, 1.0);
  const double lambda = 0.25;
  const LinearProblem prob = problem_from_spectrum(ev, lambda);
  for (const auto& cp : critical_points(prob).points) {
    if (cp.kind != CriticalKind::GlobalMin) continue;
    const double got = linear_loss_grad_hess(cp.location, prob).value;
    CHECK(got == doctest::Approx(ev[0] - ev[0] * ev[0] / (4 * lambda)).epsilon(1e-12));
  }
}

TEST_CASE("gradient descent from a fixed point stays put") {
  const LinearProblem prob = problem_from_spectrum(vec2(0.0, 1.0), 0.1);
  const DescentResult res = gradient_descent(prob, vec2(1.0, 0.0), 0.01, 1000, 1e-8);
  CHECK(res.status == DescentStatus::Converged);
  CHECK(res.iterations == 0);
  CHECK(res.label == "global-min");
}

TEST_CASE("random starts all reach a global minimum") {
  const LinearProblem prob = problem_from_spectrum(vec2(0.0, 1.0), 0.1);
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int run = 0; run < 100; ++run) {
    Eigen::VectorXd q0(2);
    q0 << g(rng), g(rng);
    const DescentResult res = gradient_descent(prob, q0, 0.01, 200000, 1e-8);
    CHECK(res.status == DescentStatus::Converged);
    CHECK(res.label == "global-min");
    CHECK(std::abs(res.terminal.cwiseAbs()[0] - 1.0) < 1e-7);
  }
}

TEST_CASE("a saddle-axis start converges to a non-global critical point") {
  const LinearProblem prob = problem_from_spectrum(vec2(0.02, 0.04), 0.1);
  const DescentResult res = gradient_descent(prob, vec2(0.0, 1.0), 0.01, 200000, 1e-8);
  CHECK(res.status == DescentStatus::Converged);
  CHECK(res.label == "strict-saddle-or-max");
  CHECK(std::abs(res.terminal[1]) == doctest::Approx(std::sqrt(0.8)).epsilon(1e-6));
  CHECK(res.terminal[0] == 0.0);  // the axis is exactly invariant
}

TEST_CASE("descent loss decreases monotonically under the step-size rule") {
  const LinearProblem prob = problem_from_spectrum(vec3(0.0, 0.5, 1.0), 0.1);
  std::mt19937_64 rng(55);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int run = 0; run < 10; ++run) {
    Eigen::VectorXd q0(3);
    q0 << g(rng), g(rng), g(rng);
    const double alpha = 0.5 / descent_smoothness_bound(prob, q0);
    const DescentResult res = gradient_descent(prob, q0, alpha, 500000, 1e-8);
    CHECK(res.step_size_ok);
    for (std::size_t k = 1; k < res.loss_trace.size(); ++k)
      CHECK(res.loss_trace[k] <= res.loss_trace[k - 1] + 1e-12);
  }
}

TEST_CASE("trajectories from q0 and -q0 are exact mirrors") {
  const LinearProblem prob = problem_from_spectrum(vec2(0.03, 0.8), 0.12);
  const Eigen::VectorXd q0 = vec2(0.7, -1.3);
  const DescentResult a = gradient_descent(prob, q0, 0.01, 100000, 1e-9, true);
  const DescentResult b = gradient_descent(prob, -q0, 0.01, 100000, 1e-9, true);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t k = 0; k < a.trajectory.size(); ++k)
    CHECK(a.trajectory[k] == -b.trajectory[k]);
}

TEST_CASE("oversized steps are flagged and divergence is caught") {
  const LinearProblem prob = problem_from_spectrum(vec2(0.0, 1.0), 0.1);
  const DescentResult res = gradient_descent(prob, vec2(5.0, 5.0), 10.0, 10000, 1e-8);
  CHECK(!res.step_size_ok);
  CHECK(res.status == DescentStatus::Diverged);
  CHECK(res.label == "diverged");
}

TEST_CASE("liapunov certificate on exact planar data") {
  const LinearProblem prob = problem_from_spectrum(vec3(0.0, 0.5, 1.0), 0.1);
  const Eigen::VectorXd v = vec3(1.0, 0.0, 0.0);  // eig1 = 0 => |v| = 1

  SUBCASE("hand cases") {
    Eigen::MatrixXd samples(3, 2);
    samples.col(0) = v;
    samples.col(1) = 2.0 * v;
    const auto out = liapunov_check(prob, v, samples);
    CHECK(out[0].h == 0.0);
    CHECK(std::abs(out[0].dhdt_closed) < 1e-15);
    CHECK(std::abs(out[0].dhdt_chain) < 1e-15);
    CHECK(out[1].h == doctest::Approx(0.2));
  }

  SUBCASE("closed form agrees with the chain rule and certifies decrease") {
    std::mt19937_64 rng(202);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd samples(3, 1000);
    int got = 0;
    while (got < 1000) {
      Eigen::VectorXd q(3);
      q << g(rng), g(rng), g(rng);
      if (q[0] < 0) q = -q;
      if (q[0] < 1e-3) continue;  // keep away from the boundary of the half space
      samples.col(got++) = q;
    }
    const auto out = liapunov_check(prob, v, samples);
    for (const auto& s : out) {
      CHECK(s.h >= 0.0);
      CHECK(s.h < 1.0);
      CHECK(s.dhdt_closed <= 1e-12);
      CHECK(s.dhdt_chain <= 1e-12);
      const double scale = std::max({std::abs(s.dhdt_closed), std::abs(s.dhdt_chain), 1e-15});
      CHECK(std::abs(s.dhdt_closed - s.dhdt_chain) <= 1e-9 * scale);
    }
  }

  SUBCASE("samples outside the half space are rejected") {
    Eigen::MatrixXd bad(3, 1);
    bad.col(0) = vec3(-1.0, 0.0, 0.0);
    CHECK_THROWS_AS(liapunov_check(prob, v, bad), std::invalid_argument);
  }
}
