#include "sdfit/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sdfit/common.hpp"
#include "sdfit/parallel.hpp"

namespace sdfit {

void LossParams::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("LossParams: lambda must be positive");
  if (tau != 0 && tau != 1) throw std::invalid_argument("LossParams: tau must be 0 or 1");
  if (latent_reg < 0.0) throw std::invalid_argument("LossParams: negative latent_reg");
}

SamplerD::SamplerD(PointCloud source, Eigen::VectorXd sigmas, Aabb box, std::uint64_t seed)
    : source_(std::move(source)), sigmas_(std::move(sigmas)), box_(std::move(box)), rng_(seed) {
  source_.validate();
  if (sigmas_.size() != source_.size())
    throw std::invalid_argument("SamplerD: sigma count mismatch");
  for (long i = 0; i < sigmas_.size(); ++i)
    if (!(sigmas_[i] > 0.0) || !std::isfinite(sigmas_[i]))
      throw std::invalid_argument("SamplerD: sigmas must be positive and finite");
  for (int i = 0; i < source_.size(); ++i)
    if (!box_.contains(source_.points.col(i), 1e-12))
      throw std::invalid_argument("SamplerD: box does not contain all source points");
}

SamplerD SamplerD::from_cloud(const PointCloud& cloud, int k, double box_margin,
                              std::uint64_t seed) {
  cloud.validate();
  if (cloud.size() < 2) throw std::invalid_argument("SamplerD: need at least 2 points");
  if (k <= 0) k = default_knn_k(cloud.size());
  const std::vector<double> dists = kth_nn_distance(cloud, k);
  const Aabb box = bounding_box(cloud, box_margin);
  const double floor = 1e-9 * std::max(1e-300, box.extent().norm());
  Eigen::VectorXd sigmas(cloud.size());
  for (int i = 0; i < cloud.size(); ++i) sigmas[i] = std::max(dists[i], floor);
  return SamplerD(cloud, std::move(sigmas), box, seed);
}

SamplerD::Draw SamplerD::draw(int n) {
  if (n < 2) throw std::invalid_argument("SamplerD::draw: n >= 2 required");
  const int d = source_.dim();
  const int n_uniform = (n + 1) / 2;
  const int n_gauss = n / 2;

  Eigen::MatrixXd pts(d, n);
  std::vector<std::uint8_t> gaussian(n, 0);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n_uniform; ++i)
    for (int a = 0; a < d; ++a)
      pts(a, i) = box_.lo[a] + (box_.hi[a] - box_.lo[a]) * unif(rng_);

  std::uniform_int_distribution<int> pick(0, source_.size() - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n_gauss; ++i) {
    const int j = pick(rng_);
    for (int a = 0; a < d; ++a)
      pts(a, n_uniform + i) = source_.points(a, j) + sigmas_[j] * gauss(rng_);
    gaussian[n_uniform + i] = 1;
  }

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng_);

  Draw out;
  out.points.resize(d, n);
  out.gaussian.resize(n);
  for (int i = 0; i < n; ++i) {
    out.points.col(i) = pts.col(perm[i]);
    out.gaussian[i] = gaussian[perm[i]];
  }
  return out;
}

AdamState AdamState::zero(const Network& net) {
  AdamState s;
  for (std::size_t j = 0; j < net.weights.size(); ++j) {
    s.mW.emplace_back(Eigen::MatrixXd::Zero(net.weights[j].rows(), net.weights[j].cols()));
    s.vW.emplace_back(Eigen::MatrixXd::Zero(net.weights[j].rows(), net.weights[j].cols()));
    s.mb.emplace_back(Eigen::VectorXd::Zero(net.biases[j].size()));
    s.vb.emplace_back(Eigen::VectorXd::Zero(net.biases[j].size()));
  }
  return s;
}

VectorAdamState VectorAdamState::zero(int n) {
  VectorAdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

namespace {

// m <- b1 m + (1-b1) g ; v <- b2 v + (1-b2) g^2 ;
// p <- p - lr * mhat / (sqrt(vhat) + eps)
template <typename Mat>
void adam_update_block(Mat& p, Mat& m, Mat& v, const Mat& g, const AdamParams& a, long step) {
  m = a.beta1 * m + (1.0 - a.beta1) * g;
  v = (a.beta2 * v.array() + (1.0 - a.beta2) * g.array().square()).matrix();
  const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
  p.array() -= a.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + a.eps);
}

}  // namespace

void adam_step(AdamState& state, Network& net, const ParamGradient& grad,
               const AdamParams& params) {
  const std::string bad = grad.first_non_finite();
  if (!bad.empty()) throw NumericalError("adam_step: non-finite gradient in " + bad);
  ++state.step;
  for (std::size_t j = 0; j < net.weights.size(); ++j) {
    adam_update_block(net.weights[j], state.mW[j], state.vW[j], grad.dW[j], params, state.step);
    adam_update_block(net.biases[j], state.mb[j], state.vb[j], grad.db[j], params, state.step);
  }
}

void adam_step(VectorAdamState& state, Eigen::VectorXd& param, const Eigen::VectorXd& grad,
               const AdamParams& params) {
  if (!grad.allFinite()) throw NumericalError("adam_step: non-finite gradient in dz");
  ++state.step;
  adam_update_block(param, state.m, state.v, grad, params, state.step);
}

std::pair<LossReport, ParamGradient> loss_eval(const Network& net, const Eigen::VectorXd* z,
                                               const PointCloud& batch,
                                               const Eigen::MatrixXd& global_samples,
                                               const LossParams& params) {
  params.validate();
  batch.validate();
  if (global_samples.cols() == 0) throw std::invalid_argument("loss_eval: empty global samples");
  if (global_samples.rows() != batch.dim())
    throw std::invalid_argument("loss_eval: sample dimension mismatch");
  const bool use_normals = params.tau == 1;
  if (use_normals && !batch.has_normals())
    throw std::invalid_argument("loss_eval: tau = 1 requires normals in the batch");

  const int d = batch.dim();
  const long bs = batch.size();
  const long bg = global_samples.cols();
  constexpr std::size_t kChunk = 512;

  const std::size_t surf_chunks = chunk_count(bs, kChunk);
  const std::size_t glob_chunks = chunk_count(bg, kChunk);
  const std::size_t total_chunks = surf_chunks + glob_chunks;

  struct ChunkOut {
    ParamGradient grad;
    double data = 0.0;
    double normal = 0.0;
    double eikonal = 0.0;
  };
  std::vector<ChunkOut> parts(total_chunks);

  parallel_chunks(total_chunks, 1, [&](std::size_t cb, std::size_t, std::size_t) {
    const bool is_surface = cb < surf_chunks;
    const long lo = static_cast<long>((is_surface ? cb : cb - surf_chunks) * kChunk);
    const long hi = std::min<long>(is_surface ? bs : bg, lo + kChunk);
    const long nb = hi - lo;

    ChunkOut& out = parts[cb];
    static thread_local ForwardTrace trace;  // pool threads persist; buffers get reused
    const Eigen::MatrixXd X = is_surface ? batch.points.middleCols(lo, nb)
                                         : global_samples.middleCols(lo, nb);
    const BatchDual dual = forward_dual_batch(net, X, z, &trace);

    Eigen::VectorXd wf = Eigen::VectorXd::Zero(nb);
    Eigen::MatrixXd wg = Eigen::MatrixXd::Zero(d, nb);
    KahanSum data, normal, eikonal;

    if (is_surface) {
      for (long i = 0; i < nb; ++i) {
        const double f = dual.values[i];
        data.add(std::abs(f));
        wf[i] = (f > 0.0 ? 1.0 : (f < 0.0 ? -1.0 : 0.0)) / static_cast<double>(bs);
        if (use_normals) {
          const Eigen::VectorXd r = dual.input_gradients.col(i) - batch.normals.col(lo + i);
          const double nr = r.norm();
          normal.add(nr);
          if (nr > 0.0) wg.col(i) = r / (nr * static_cast<double>(bs));
        }
      }
    } else {
      for (long i = 0; i < nb; ++i) {
        const Eigen::VectorXd g = dual.input_gradients.col(i);
        const double ng = g.norm();
        eikonal.add((ng - 1.0) * (ng - 1.0));
        if (ng > 0.0)
          wg.col(i) = (2.0 * params.lambda * (ng - 1.0) / (ng * static_cast<double>(bg))) * g;
      }
    }
    out.data = data.value();
    out.normal = normal.value();
    out.eikonal = eikonal.value();
    out.grad = backward_from_trace(net, trace, wf, wg);
  });

  ParamGradient grad = ParamGradient::zero(net);
  KahanSum data, normal, eikonal;
  for (const ChunkOut& part : parts) {
    grad += part.grad;
    data.add(part.data);
    normal.add(part.normal);
    eikonal.add(part.eikonal);
  }

  LossReport report;
  report.data_term = data.value() / static_cast<double>(bs);
  report.normal_term = use_normals ? normal.value() / static_cast<double>(bs) : 0.0;
  report.eikonal_term = eikonal.value() / static_cast<double>(bg);
  if (z != nullptr && z->size() > 0) {
    report.latent_term = z->norm();
    if (params.latent_reg > 0.0 && report.latent_term > 0.0)
      grad.dz += params.latent_reg * (*z) / report.latent_term;
  }
  report.total = report.data_term + params.tau * report.normal_term +
                 params.lambda * report.eikonal_term + params.latent_reg * report.latent_term;
  return {report, std::move(grad)};
}

namespace {

PointCloud gather_batch(const PointCloud& cloud, const std::vector<int>& idx) {
  PointCloud out;
  out.points.resize(cloud.dim(), idx.size());
  if (cloud.has_normals()) out.normals.resize(cloud.dim(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.points.col(i) = cloud.points.col(idx[i]);
    if (cloud.has_normals()) out.normals.col(i) = cloud.normals.col(idx[i]);
  }
  return out;
}

}  // namespace

SingleShapeResult train_single_shape(const PointCloud& cloud, const NetworkSpec& spec,
                                     const LossParams& params, const SingleShapeSchedule& sched) {
  cloud.validate();
  params.validate();
  if (sched.iterations < 0) throw std::invalid_argument("train_single_shape: negative iterations");
  if (sched.batch_size < 2) throw std::invalid_argument("train_single_shape: batch_size >= 2");

  std::mt19937_64 rng(sched.seed);
  const std::uint64_t init_seed = rng();
  const std::uint64_t sampler_seed = rng();

  SingleShapeResult result;
  result.net = geometric_init(spec, sched.init_radius, init_seed);
  if (sched.iterations == 0) return result;

  SamplerD sampler = [&]() {
    if (sched.sampler_box.has_value()) {
      const int k = sched.knn_k > 0 ? sched.knn_k : default_knn_k(cloud.size());
      const std::vector<double> dists = kth_nn_distance(cloud, k);
      Eigen::VectorXd sigmas(cloud.size());
      const double floor = 1e-9 * sched.sampler_box->extent().norm();
      for (int i = 0; i < cloud.size(); ++i) sigmas[i] = std::max(dists[i], floor);
      return SamplerD(cloud, sigmas, *sched.sampler_box, sampler_seed);
    }
    return SamplerD::from_cloud(cloud, sched.knn_k, sched.sampler_margin, sampler_seed);
  }();

  AdamState adam = AdamState::zero(result.net);
  AdamParams aparams;
  aparams.lr = sched.lr;

  std::uniform_int_distribution<int> pick(0, cloud.size() - 1);
  std::vector<int> idx(sched.batch_size);
  result.trace.reserve(sched.iterations);

  for (int it = 0; it < sched.iterations; ++it) {
    for (int& i : idx) i = pick(rng);
    const PointCloud batch = gather_batch(cloud, idx);
    const SamplerD::Draw global = sampler.draw(sched.batch_size);
    auto [report, grad] = loss_eval(result.net, nullptr, batch, global.points, params);
    adam_step(adam, result.net, grad, aparams);
    result.trace.push_back(report);
  }
  return result;
}

SingleShapeResult train_fresh_sampled(const SurfaceSampler& surface, const NetworkSpec& spec,
                                      const LossParams& params, const SingleShapeSchedule& sched,
                                      const Aabb& sampler_box) {
  params.validate();
  if (sched.batch_size < 2) throw std::invalid_argument("train_fresh_sampled: batch_size >= 2");

  std::mt19937_64 rng(sched.seed);
  const std::uint64_t init_seed = rng();

  SingleShapeResult result;
  result.net = geometric_init(spec, sched.init_radius, init_seed);

  AdamState adam = AdamState::zero(result.net);
  AdamParams aparams;
  aparams.lr = sched.lr;

  LossParams no_normals = params;
  no_normals.tau = 0;

  result.trace.reserve(std::max(0, sched.iterations));
  for (int it = 0; it < sched.iterations; ++it) {
    PointCloud batch;
    batch.points = surface(sched.batch_size, rng);
    const int k = sched.knn_k > 0 ? std::min(sched.knn_k, batch.size() - 1)
                                  : default_knn_k(batch.size());
    const std::vector<double> dists = kth_nn_distance(batch, k);
    Eigen::VectorXd sigmas(batch.size());
    const double floor = 1e-9 * sampler_box.extent().norm();
    for (int i = 0; i < batch.size(); ++i) sigmas[i] = std::max(dists[i], floor);
    SamplerD sampler(batch, sigmas, sampler_box, rng());
    const SamplerD::Draw global = sampler.draw(sched.batch_size);

    auto [report, grad] = loss_eval(result.net, nullptr, batch, global.points, no_normals);
    adam_step(adam, result.net, grad, aparams);
    result.trace.push_back(report);
  }
  return result;
}

AutoDecoderResult train_auto_decoder(const std::vector<PointCloud>& clouds,
                                     const NetworkSpec& spec, const LossParams& params,
                                     const AutoDecoderSchedule& sched) {
  params.validate();
  if (clouds.size() < 2) throw std::invalid_argument("train_auto_decoder: need >= 2 shapes");
  if (spec.latent_dim < 1) throw std::invalid_argument("train_auto_decoder: latent_dim >= 1");
  if (sched.shapes_per_batch < 1 || sched.points_per_shape < 2 || sched.epochs < 0)
    throw std::invalid_argument("train_auto_decoder: bad schedule");
  for (const PointCloud& c : clouds) c.validate();

  const int S = static_cast<int>(clouds.size());
  const int L = spec.latent_dim;

  std::mt19937_64 rng(sched.seed);
  const std::uint64_t init_seed = rng();

  AutoDecoderResult result;
  result.net = geometric_init(spec, sched.init_radius, init_seed);
  result.latents.z = Eigen::MatrixXd::Zero(L, S);

  std::vector<SamplerD> samplers;
  samplers.reserve(S);
  for (const PointCloud& c : clouds)
    samplers.emplace_back(SamplerD::from_cloud(c, sched.knn_k, sched.sampler_margin, rng()));

  AdamState adam_net = AdamState::zero(result.net);
  std::vector<VectorAdamState> adam_z(S, VectorAdamState::zero(L));

  std::vector<int> order(S);
  std::iota(order.begin(), order.end(), 0);

  result.trace.reserve(sched.epochs);
  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    AdamParams aparams;
    aparams.lr = sched.lr * std::pow(0.5, epoch / std::max(1, sched.lr_halving_interval));

    std::shuffle(order.begin(), order.end(), rng);
    KahanSum edata, enormal, eeik, elat, etotal;
    int reports = 0;

    for (int pos = 0; pos < S; pos += sched.shapes_per_batch) {
      const int group = std::min(sched.shapes_per_batch, S - pos);
      ParamGradient net_grad = ParamGradient::zero(result.net);
      std::vector<Eigen::VectorXd> z_grads(group);

      for (int g = 0; g < group; ++g) {
        const int j = order[pos + g];
        std::uniform_int_distribution<int> pick(0, clouds[j].size() - 1);
        std::vector<int> idx(sched.points_per_shape);
        for (int& i : idx) i = pick(rng);
        const PointCloud batch = gather_batch(clouds[j], idx);
        const SamplerD::Draw global = samplers[j].draw(sched.points_per_shape);

        Eigen::VectorXd zj = result.latents.z.col(j);
        auto [report, grad] = loss_eval(result.net, &zj, batch, global.points, params);
        z_grads[g] = grad.dz / static_cast<double>(group);
        grad.dz.setZero();
        grad *= 1.0 / static_cast<double>(group);
        net_grad += grad;

        edata.add(report.data_term);
        enormal.add(report.normal_term);
        eeik.add(report.eikonal_term);
        elat.add(report.latent_term);
        etotal.add(report.total);
        ++reports;
      }

      adam_step(adam_net, result.net, net_grad, aparams);
      for (int g = 0; g < group; ++g) {
        const int j = order[pos + g];
        Eigen::VectorXd zj = result.latents.z.col(j);
        adam_step(adam_z[j], zj, z_grads[g], aparams);
        result.latents.z.col(j) = zj;
      }
    }

    LossReport mean;
    mean.data_term = edata.value() / reports;
    mean.normal_term = enormal.value() / reports;
    mean.eikonal_term = eeik.value() / reports;
    mean.latent_term = elat.value() / reports;
    mean.total = etotal.value() / reports;
    result.trace.push_back(mean);
  }
  return result;
}

Eigen::VectorXd infer_latent(const Network& net, const PointCloud& cloud, int iters, double lr,
                             std::uint64_t seed, const LossParams& params, int batch_size,
                             LossReport* final_report) {
  cloud.validate();
  params.validate();
  if (net.spec.latent_dim < 1) throw std::invalid_argument("infer_latent: network has no latent");
  if (iters < 0) throw std::invalid_argument("infer_latent: negative iterations");
  if (batch_size < 2) throw std::invalid_argument("infer_latent: batch_size >= 2");

  std::mt19937_64 rng(seed);
  Eigen::VectorXd zv = Eigen::VectorXd::Zero(net.spec.latent_dim);
  SamplerD sampler = SamplerD::from_cloud(cloud, 0, 0.2, rng());
  VectorAdamState adam = VectorAdamState::zero(net.spec.latent_dim);
  AdamParams aparams;
  aparams.lr = lr;

  std::uniform_int_distribution<int> pick(0, cloud.size() - 1);
  std::vector<int> idx(batch_size);
  LossReport last;

  const int evals = std::max(iters, final_report != nullptr ? 1 : 0);
  for (int it = 0; it < evals; ++it) {
    for (int& i : idx) i = pick(rng);
    const PointCloud batch = gather_batch(cloud, idx);
    const SamplerD::Draw global = sampler.draw(batch_size);
    auto [report, grad] = loss_eval(net, &zv, batch, global.points, params);
    last = report;
    if (it < iters) adam_step(adam, zv, grad.dz, aparams);
  }
  if (final_report != nullptr) *final_report = last;
  return zv;
}

Eigen::VectorXd average_latents(const std::vector<Eigen::VectorXd>& latents,
                                const std::vector<double>& weights) {
  if (latents.empty() || latents.size() != weights.size())
    throw std::invalid_argument("average_latents: count mismatch");
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("average_latents: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("average_latents: weights must sum to 1 within 1e-9");

  Eigen::VectorXd out = Eigen::VectorXd::Zero(latents[0].size());
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].size() != out.size())
      throw std::invalid_argument("average_latents: latent size mismatch");
    out += weights[i] * latents[i];
  }
  return out;
}

void save_loss_trace(const std::vector<LossReport>& trace, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);
  std::fprintf(f, "iter,data,normal,eikonal,latent,total\n");
  for (std::size_t i = 0; i < trace.size(); ++i)
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, trace[i].data_term,
                 trace[i].normal_term, trace[i].eikonal_term, trace[i].latent_term,
                 trace[i].total);
  std::fclose(f);
}

void save_latent_table(const LatentTable& table, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);
  std::fprintf(f, "shape_id");
  for (int a = 0; a < table.latent_dim(); ++a) std::fprintf(f, ",z%d", a + 1);
  std::fputc('\n', f);
  for (int j = 0; j < table.count(); ++j) {
    std::fprintf(f, "%d", j);
    for (int a = 0; a < table.latent_dim(); ++a) std::fprintf(f, ",%.17g", table.z(a, j));
    std::fputc('\n', f);
  }
  std::fclose(f);
}

LatentTable load_latent_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open latent table: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": empty latent table");

  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 2)
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) + ": too few columns");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no latent rows");

  LatentTable table;
  const int L = static_cast<int>(rows[0].size()) - 1;
  table.z.resize(L, static_cast<int>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (static_cast<int>(rows[j].size()) - 1 != L)
      throw std::invalid_argument(path + ": inconsistent latent width");
    const int id = static_cast<int>(rows[j][0]);
    if (id != static_cast<int>(j))
      throw std::invalid_argument(path + ": shape ids must be 0..n-1 in order");
    for (int a = 0; a < L; ++a) table.z(a, j) = rows[j][a + 1];
  }
  return table;
}

}  // namespace sdfit
