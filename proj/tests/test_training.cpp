#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <fstream>
#include <random>

#include "sdfit/common.hpp"
#include "sdfit/training.hpp"

using namespace sdfit;

namespace {

PointCloud circle_cloud(double radius, int n, double cx = 0.0, double cy = 0.0) {
  PointCloud c;
  c.points.resize(2, n);
  c.normals.resize(2, n);
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    c.normals.col(i) = Eigen::Vector2d(std::cos(a), std::sin(a));
    c.points.col(i) = Eigen::Vector2d(cx, cy) + radius * c.normals.col(i);
  }
  return c;
}

NetworkSpec tiny_spec(int d, int latent = 0) {
  NetworkSpec s;
  s.input_dim = d;
  s.latent_dim = latent;
  s.hidden_dims = {24, 24, 24};
  s.skip_layers = {2};
  return s;
}

}  // namespace

TEST_CASE("sampler splits draws half and half") {
  PointCloud c;
  c.points = Eigen::MatrixXd::Zero(3, 1);
  Aabb box;
  box.lo = Eigen::Vector3d(-1, -1, -1);
  box.hi = Eigen::Vector3d(1, 1, 1);
  SamplerD sampler(c, Eigen::VectorXd::Constant(1, 0.1), box, 5);

  const SamplerD::Draw two = sampler.draw(2);
  int g = 0;
  for (auto m : two.gaussian) g += m;
  CHECK(g == 1);

  CHECK_THROWS_AS(sampler.draw(1), std::invalid_argument);
}

TEST_CASE("sampler statistics match the mixture definition") {
  PointCloud c;
  c.points = Eigen::MatrixXd::Zero(3, 1);
  Aabb box;
  box.lo = Eigen::Vector3d(-1, -1, -1);
  box.hi = Eigen::Vector3d(1, 1, 1);
  SamplerD sampler(c, Eigen::VectorXd::Constant(1, 0.1), box, 42);
  const SamplerD::Draw draw = sampler.draw(10000);

  Eigen::Vector3d gmean = Eigen::Vector3d::Zero();
  Eigen::Vector3d gsq = Eigen::Vector3d::Zero();
  Eigen::Vector3d umean = Eigen::Vector3d::Zero();
  int ng = 0, nu = 0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector3d p = draw.points.col(i);
    if (draw.gaussian[i]) {
      gmean += p;
      gsq += p.cwiseProduct(p);
      ++ng;
    } else {
      CHECK(box.contains(p));
      umean += p;
      ++nu;
    }
  }
  CHECK(ng == 5000);
  CHECK(nu == 5000);
  gmean /= ng;
  umean /= nu;
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(gmean[a]) < 0.01);
    const double stddev = std::sqrt(gsq[a] / ng - gmean[a] * gmean[a]);
    CHECK(stddev == doctest::Approx(0.1).epsilon(0.10));
    CHECK(std::abs(umean[a]) < 0.05);
  }
}

TEST_CASE("sampler invariants are enforced") {
  PointCloud c;
  c.points = Eigen::MatrixXd::Zero(2, 1);
  Aabb box;
  box.lo = Eigen::Vector2d(0.5, 0.5);  // does not contain the source point
  box.hi = Eigen::Vector2d(1.0, 1.0);
  CHECK_THROWS_AS(SamplerD(c, Eigen::VectorXd::Constant(1, 0.1), box, 1), std::invalid_argument);

  Aabb ok;
  ok.lo = Eigen::Vector2d(-1, -1);
  ok.hi = Eigen::Vector2d(1, 1);
  CHECK_THROWS_AS(SamplerD(c, Eigen::VectorXd::Constant(1, 0.0), ok, 1), std::invalid_argument);
}

TEST_CASE("loss on the exact plane sdf vanishes with zero gradient") {
  // f(x) = x_1 is the signed distance to the plane x_1 = 0
  const Network net = make_linear_network(Eigen::Vector3d(1, 0, 0), 0.0);
  PointCloud batch;
  batch.points.resize(3, 8);
  batch.normals.resize(3, 8);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 8; ++i) {
    batch.points.col(i) = Eigen::Vector3d(0.0, g(rng), g(rng));
    batch.normals.col(i) = Eigen::Vector3d(1, 0, 0);
  }
  Eigen::MatrixXd global(3, 16);
  for (int i = 0; i < 16; ++i) global.col(i) = Eigen::Vector3d(g(rng), g(rng), g(rng));

  LossParams params;
  params.tau = 1;
  const auto [report, grad] = loss_eval(net, nullptr, batch, global, params);
  CHECK(report.data_term == 0.0);
  CHECK(report.normal_term == 0.0);
  CHECK(report.eikonal_term == 0.0);
  CHECK(report.total == 0.0);
  CHECK(grad.dW[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(grad.db[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eikonal term of a doubled gradient is one") {
  const Network net = make_linear_network(Eigen::Vector3d(2, 0, 0), 0.0);
  PointCloud batch;
  batch.points = Eigen::MatrixXd::Zero(3, 1);
  Eigen::MatrixXd global = Eigen::MatrixXd::Random(3, 5);
  LossParams params;
  params.tau = 0;
  const auto [report, grad] = loss_eval(net, nullptr, batch, global, params);
  CHECK(report.eikonal_term == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("loss gradient matches finite differences") {
  const NetworkSpec spec = tiny_spec(2);
  Network net = geometric_init(spec, 1.0, 5);
  const PointCloud cloud = circle_cloud(0.6, 16);
  Eigen::MatrixXd global = Eigen::MatrixXd::Random(2, 12);
  LossParams params;
  params.tau = 1;
  params.lambda = 0.1;

  auto [report, grad] = loss_eval(net, nullptr, cloud, global, params);
  const double h = 1e-5;
  double err2 = 0.0, ref2 = 0.0;
  for (int j = 0; j < spec.layer_count(); ++j) {
    for (int r = 0; r < net.weights[j].rows(); ++r) {
      for (int c = 0; c < net.weights[j].cols(); ++c) {
        const double save = net.weights[j](r, c);
        net.weights[j](r, c) = save + h;
        const double fp = loss_eval(net, nullptr, cloud, global, params).first.total;
        net.weights[j](r, c) = save - h;
        const double fm = loss_eval(net, nullptr, cloud, global, params).first.total;
        net.weights[j](r, c) = save;
        const double fd = (fp - fm) / (2 * h);
        err2 += (grad.dW[j](r, c) - fd) * (grad.dW[j](r, c) - fd);
        ref2 += fd * fd;
      }
    }
  }
  CHECK(std::sqrt(err2 / ref2) < 1e-4);
}

TEST_CASE("loss total is invariant under batch permutations") {
  const NetworkSpec spec = tiny_spec(2);
  const Network net = geometric_init(spec, 1.0, 6);
  const PointCloud cloud = circle_cloud(0.5, 64);
  Eigen::MatrixXd global = Eigen::MatrixXd::Random(2, 64);
  LossParams params;

  const double base = loss_eval(net, nullptr, cloud, global, params).first.total;

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PointCloud shuffled;
    shuffled.points.resize(2, 64);
    shuffled.normals.resize(2, 64);
    Eigen::MatrixXd gshuf(2, 64);
    for (int i = 0; i < 64; ++i) {
      shuffled.points.col(i) = cloud.points.col(perm[i]);
      shuffled.normals.col(i) = cloud.normals.col(perm[i]);
      gshuf.col(i) = global.col(perm[i]);
    }
    const double permuted = loss_eval(net, nullptr, shuffled, gshuf, params).first.total;
    CHECK(std::abs(permuted - base) <= 1e-12);
  }
}

TEST_CASE("tau = 1 without normals is rejected") {
  const Network net = geometric_init(tiny_spec(2), 1.0, 2);
  PointCloud batch;
  batch.points = Eigen::MatrixXd::Random(2, 4);
  LossParams params;
  params.tau = 1;
  CHECK_THROWS_AS(loss_eval(net, nullptr, batch, Eigen::MatrixXd::Random(2, 4), params),
                  std::invalid_argument);
}

TEST_CASE("latent term and its gradient") {
  const NetworkSpec spec = tiny_spec(2, 4);
  const Network net = geometric_init(spec, 1.0, 8);
  PointCloud batch;
  batch.points = Eigen::MatrixXd::Random(2, 4);
  LossParams params;
  params.tau = 0;
  params.latent_reg = 0.01;
  Eigen::VectorXd z(4);
  z << 0.3, -0.1, 0.2, 0.05;

  const auto [report, grad] = loss_eval(net, &z, batch, Eigen::MatrixXd::Random(2, 4), params);
  CHECK(report.latent_term == doctest::Approx(z.norm()));
  CHECK(report.total == doctest::Approx(report.data_term + params.lambda * report.eikonal_term +
                                        0.01 * z.norm()));
  CHECK(grad.dz.size() == 4);
}

TEST_CASE("adam hand-computed first step and zero-gradient fixed point") {
  AdamParams params;
  params.lr = 0.1;

  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  VectorAdamState st = VectorAdamState::zero(1);
  adam_step(st, p, Eigen::VectorXd::Constant(1, 1.0), params);
  CHECK(p[0] == doctest::Approx(-0.1 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
  CHECK(st.step == 1);

  Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 0.7);
  VectorAdamState st2 = VectorAdamState::zero(1);
  adam_step(st2, q, Eigen::VectorXd::Zero(1), params);
  CHECK(q[0] == 0.7);
  CHECK(st2.m[0] == 0.0);
  CHECK(st2.v[0] == 0.0);
}

TEST_CASE("adam with a constant gradient moves monotonically against its sign") {
  AdamParams params;
  params.lr = 0.01;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  VectorAdamState st = VectorAdamState::zero(1);
  double prev = 0.0;
  for (int it = 0; it < 50; ++it) {
    adam_step(st, p, Eigen::VectorXd::Constant(1, 2.5), params);
    CHECK(p[0] < prev);
    prev = p[0];
  }
}

TEST_CASE("adam rejects non-finite gradients naming the block") {
  Network net = geometric_init(tiny_spec(2), 1.0, 3);
  AdamState st = AdamState::zero(net);
  ParamGradient g = ParamGradient::zero(net);
  g.dW[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamParams params;
  try {
    adam_step(st, net, g, params);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("dW[1]") != std::string::npos);
  }
}

TEST_CASE("zero training iterations return the untouched initialization") {
  const PointCloud cloud = circle_cloud(0.5, 32);
  SingleShapeSchedule sched;
  sched.iterations = 0;
  sched.seed = 12;
  const SingleShapeResult res = train_single_shape(cloud, tiny_spec(2), LossParams{}, sched);
  CHECK(res.trace.empty());

  std::mt19937_64 rng(12);
  const Network init = geometric_init(tiny_spec(2), 1.0, rng());
  for (std::size_t j = 0; j < init.weights.size(); ++j)
    CHECK(res.net.weights[j] == init.weights[j]);
}

TEST_CASE("training is bit-reproducible from the seed") {
  const PointCloud cloud = circle_cloud(0.5, 48);
  SingleShapeSchedule sched;
  sched.iterations = 30;
  sched.batch_size = 16;
  sched.lr = 1e-3;
  sched.seed = 77;
  const SingleShapeResult a = train_single_shape(cloud, tiny_spec(2), LossParams{}, sched);
  const SingleShapeResult b = train_single_shape(cloud, tiny_spec(2), LossParams{}, sched);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].total == b.trace[i].total);
    CHECK(a.trace[i].data_term == b.trace[i].data_term);
  }
  for (std::size_t j = 0; j < a.net.weights.size(); ++j)
    CHECK(a.net.weights[j] == b.net.weights[j]);
}

TEST_CASE("short training run reduces data and eikonal terms") {
  const PointCloud cloud = circle_cloud(0.5, 128);
  SingleShapeSchedule sched;
  sched.iterations = 600;
  sched.batch_size = 64;
  sched.lr = 1e-3;
  sched.seed = 5;
  LossParams params;
  params.tau = 1;
  const SingleShapeResult res = train_single_shape(cloud, tiny_spec(2), params, sched);

  auto window_mean = [&](int from, int to, auto field) {
    double acc = 0.0;
    for (int i = from; i < to; ++i) acc += res.trace[i].*field;
    return acc / (to - from);
  };
  const double data_first = window_mean(0, 100, &LossReport::data_term);
  const double data_last = window_mean(500, 600, &LossReport::data_term);
  const double eik_first = window_mean(0, 100, &LossReport::eikonal_term);
  const double eik_last = window_mean(500, 600, &LossReport::eikonal_term);
  CHECK(data_last < data_first);
  CHECK(data_last < 0.05);
  CHECK(eik_last < std::max(eik_first, 0.05));
}

TEST_CASE("auto-decoder objective is invariant under shape permutation") {
  const std::vector<PointCloud> clouds = {circle_cloud(0.3, 32), circle_cloud(0.5, 32),
                                          circle_cloud(0.7, 32)};
  const NetworkSpec spec = tiny_spec(2, 4);
  const Network net = geometric_init(spec, 1.0, 4);
  LossParams params;
  params.tau = 1;
  params.latent_reg = 0.01;
  Eigen::MatrixXd zs = Eigen::MatrixXd::Random(4, 3) * 0.3;
  Eigen::MatrixXd global = Eigen::MatrixXd::Random(2, 24);

  auto objective = [&](const std::vector<int>& order) {
    KahanSum acc;
    for (int j : order) {
      Eigen::VectorXd zj = zs.col(j);
      acc.add(loss_eval(net, &zj, clouds[j], global, params).first.total);
    }
    return acc.value() / order.size();
  };
  const double base = objective({0, 1, 2});
  CHECK(std::abs(objective({2, 0, 1}) - base) <= 1e-12);
  CHECK(std::abs(objective({1, 2, 0}) - base) <= 1e-12);
}

TEST_CASE("auto-decoder with huge latent penalty keeps latents near zero") {
  const std::vector<PointCloud> clouds = {circle_cloud(0.4, 48), circle_cloud(0.6, 48)};
  NetworkSpec spec = tiny_spec(2, 4);
  LossParams params;
  params.tau = 1;
  params.latent_reg = 1e3;
  AutoDecoderSchedule sched;
  sched.epochs = 120;
  sched.shapes_per_batch = 2;
  sched.points_per_shape = 24;
  sched.lr = 5e-4;
  sched.lr_halving_interval = 500;
  sched.seed = 3;
  const AutoDecoderResult res = train_auto_decoder(clouds, spec, params, sched);
  for (int j = 0; j < res.latents.count(); ++j) CHECK(res.latents.z.col(j).norm() < 0.01);
}

TEST_CASE("identical shapes develop matching latents") {
  const PointCloud circle = circle_cloud(0.5, 64);
  const std::vector<PointCloud> clouds = {circle, circle, circle_cloud(0.8, 64)};
  NetworkSpec spec = tiny_spec(2, 4);
  LossParams params;
  params.tau = 1;
  params.latent_reg = 0.01;
  AutoDecoderSchedule sched;
  sched.epochs = 400;
  sched.shapes_per_batch = 3;
  sched.points_per_shape = 32;
  sched.lr = 2e-3;
  sched.lr_halving_interval = 200;
  sched.seed = 21;
  const AutoDecoderResult res = train_auto_decoder(clouds, spec, params, sched);

  double mean_norm = 0.0;
  for (int j = 0; j < 3; ++j) mean_norm += res.latents.z.col(j).norm();
  mean_norm /= 3.0;
  CHECK((res.latents.z.col(0) - res.latents.z.col(1)).norm() <
        0.1 * mean_norm + 1e-3);
}

TEST_CASE("infer_latent with zero iterations returns the zero vector") {
  const std::vector<PointCloud> clouds = {circle_cloud(0.4, 32), circle_cloud(0.6, 32)};
  NetworkSpec spec = tiny_spec(2, 4);
  AutoDecoderSchedule sched;
  sched.epochs = 5;
  sched.shapes_per_batch = 2;
  sched.points_per_shape = 16;
  sched.seed = 9;
  LossParams params;
  params.tau = 1;
  params.latent_reg = 0.01;
  const AutoDecoderResult trained = train_auto_decoder(clouds, spec, params, sched);
  const Eigen::VectorXd z = infer_latent(trained.net, clouds[0], 0, 1e-3, 4, params);
  CHECK(z.norm() == 0.0);
}

TEST_CASE("average_latents basics and weight validation") {
  Eigen::VectorXd a(3), b(3), c(3);
  a << 1, 2, 3;
  b << -1, -2, -3;
  c << 0.5, 0.5, 0.5;

  CHECK((average_latents({a, b}, {1.0, 0.0}) - a).norm() == 0.0);
  CHECK(average_latents({a, b}, {0.5, 0.5}).norm() == 0.0);
  const Eigen::VectorXd mean = average_latents({a, b, c}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK((mean - (a + b + c) / 3.0).norm() < 1e-15);

  CHECK_THROWS_AS(average_latents({a, b}, {0.6, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(average_latents({a, b}, {1.5, -0.5}), std::invalid_argument);
}

TEST_CASE("loss trace csv format") {
  std::vector<LossReport> trace(2);
  trace[0] = {0.5, 0.25, 0.125, 0.0, 0.7875};
  save_loss_trace(trace, "trace.csv");
  std::ifstream in("trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,data,normal,eikonal,latent,total");
  std::string row;
  std::getline(in, row);
  CHECK(row.substr(0, 2) == "0,");
}

TEST_CASE("latent table csv round trip") {
  LatentTable t;
  t.z = Eigen::MatrixXd::Random(6, 4);
  save_latent_table(t, "latents.csv");
  const LatentTable back = load_latent_table("latents.csv");
  CHECK(back.latent_dim() == 6);
  CHECK(back.count() == 4);
  CHECK(back.z == t.z);
}
