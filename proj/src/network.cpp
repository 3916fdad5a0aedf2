#include "sdfit/network.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sdfit/parallel.hpp"

namespace sdfit {

int NetworkSpec::layer_out(int j) const {
  const int n = hidden_count();
  if (j == n) return 1;
  return hidden_dims[j] - (has_skip(j + 1) ? aug_input_dim() : 0);
}

int NetworkSpec::layer_in(int j) const {
  if (j == 0) return aug_input_dim();
  return hidden_dims[j - 1];
}

void NetworkSpec::validate() const {
  if (input_dim != 2 && input_dim != 3)
    throw std::invalid_argument("NetworkSpec: input_dim must be 2 or 3");
  if (latent_dim < 0) throw std::invalid_argument("NetworkSpec: negative latent_dim");
  if (!(softplus_beta > 0.0)) throw std::invalid_argument("NetworkSpec: softplus_beta must be > 0");
  const int n = hidden_count();
  for (int j = 0; j < n; ++j)
    if (hidden_dims[j] < 1) throw std::invalid_argument("NetworkSpec: hidden width must be >= 1");
  for (int s : skip_layers) {
    if (s < 1 || s >= n)
      throw std::invalid_argument("NetworkSpec: skip layer index out of range");
    if (hidden_dims[s - 1] - aug_input_dim() < 1)
      throw std::invalid_argument(
          "NetworkSpec: skip layer " + std::to_string(s) +
          " leaves no width for the preceding layer after concatenation");
  }
}

NetworkSpec NetworkSpec::full_profile(int input_dim, int latent_dim) {
  NetworkSpec s;
  s.input_dim = input_dim;
  s.latent_dim = latent_dim;
  s.hidden_dims.assign(8, 512);
  s.skip_layers = {4};
  return s;
}

NetworkSpec NetworkSpec::reduced_profile(int input_dim, int latent_dim) {
  NetworkSpec s;
  s.input_dim = input_dim;
  s.latent_dim = latent_dim;
  s.hidden_dims.assign(4, 128);
  s.skip_layers = {2};
  return s;
}

void Network::validate() const {
  spec.validate();
  const int layers = spec.layer_count();
  if (static_cast<int>(weights.size()) != layers || static_cast<int>(biases.size()) != layers)
    throw std::invalid_argument("Network: layer count mismatch");
  for (int j = 0; j < layers; ++j) {
    if (weights[j].rows() != spec.layer_out(j) || weights[j].cols() != spec.layer_in(j))
      throw std::invalid_argument("Network: weight shape mismatch at layer " + std::to_string(j));
    if (biases[j].size() != spec.layer_out(j))
      throw std::invalid_argument("Network: bias shape mismatch at layer " + std::to_string(j));
    if (!weights[j].allFinite() || !biases[j].allFinite())
      throw std::invalid_argument("Network: non-finite parameter at layer " + std::to_string(j));
  }
}

ParamGradient ParamGradient::zero(const Network& net) {
  ParamGradient g;
  const int layers = net.spec.layer_count();
  g.dW.reserve(layers);
  g.db.reserve(layers);
  for (int j = 0; j < layers; ++j) {
    g.dW.emplace_back(Eigen::MatrixXd::Zero(net.weights[j].rows(), net.weights[j].cols()));
    g.db.emplace_back(Eigen::VectorXd::Zero(net.biases[j].size()));
  }
  if (net.spec.latent_dim > 0) g.dz = Eigen::VectorXd::Zero(net.spec.latent_dim);
  return g;
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& o) {
  for (std::size_t j = 0; j < dW.size(); ++j) {
    dW[j] += o.dW[j];
    db[j] += o.db[j];
  }
  if (dz.size() > 0) dz += o.dz;
  return *this;
}

ParamGradient& ParamGradient::operator*=(double sc) {
  for (std::size_t j = 0; j < dW.size(); ++j) {
    dW[j] *= sc;
    db[j] *= sc;
  }
  if (dz.size() > 0) dz *= sc;
  return *this;
}

bool ParamGradient::all_finite() const { return first_non_finite().empty(); }

std::string ParamGradient::first_non_finite() const {
  for (std::size_t j = 0; j < dW.size(); ++j) {
    if (!dW[j].allFinite()) return "dW[" + std::to_string(j) + "]";
    if (!db[j].allFinite()) return "db[" + std::to_string(j) + "]";
  }
  if (dz.size() > 0 && !dz.allFinite()) return "dz";
  return {};
}

Network geometric_init(const NetworkSpec& spec, double radius, std::uint64_t seed) {
  spec.validate();
  if (!(radius > 0.0)) throw std::invalid_argument("geometric_init: radius must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Network net;
  net.spec = spec;
  const int layers = spec.layer_count();
  const int n = spec.hidden_count();
  net.weights.resize(layers);
  net.biases.resize(layers);

  for (int j = 0; j < n; ++j) {
    const int rows = spec.layer_out(j), cols = spec.layer_in(j);
    const double stddev = std::sqrt(2.0 / rows);
    net.weights[j].resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) net.weights[j](r, c) = stddev * gauss(rng);
    net.biases[j] = Eigen::VectorXd::Zero(rows);
  }

  const int fan_in = spec.layer_in(n);
  const double w0 = std::sqrt(M_PI) / std::sqrt(static_cast<double>(fan_in));
  net.weights[n] = Eigen::MatrixXd::Constant(1, fan_in, w0);
  net.biases[n] = Eigen::VectorXd::Zero(1);

  // The closed-form constant assumes exact ReLU statistics; at finite width
  // the softplus floor inflates activations a few percent per layer, which
  // would push the zero crossing well inside the target sphere. Calibrate the
  // final scale against a seeded probe of the sphere so the mean response at
  // |x| = radius vanishes.
  if (n > 0) {
    const int probes = 512;
    double mean = 0.0;
    for (int i = 0; i < probes; ++i) {
      Eigen::VectorXd dir(spec.input_dim);
      do {
        for (int a = 0; a < spec.input_dim; ++a) dir[a] = gauss(rng);
      } while (dir.norm() < 1e-12);
      dir *= radius / dir.norm();
      Eigen::VectorXd zero_latent = Eigen::VectorXd::Zero(spec.latent_dim);
      mean += forward(net, dir, spec.latent_dim > 0 ? &zero_latent : nullptr);
    }
    mean /= probes;
    if (mean > 0.1 * radius) net.weights[n] *= radius / mean;
  }

  for (int c = 0; c < fan_in; ++c) net.weights[n](0, c) += 1e-5 * gauss(rng);
  net.biases[n] = Eigen::VectorXd::Constant(1, -radius);
  return net;
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

Eigen::VectorXd augmented_input(const NetworkSpec& spec, const Eigen::VectorXd& x,
                                const Eigen::VectorXd* z) {
  if (x.size() != spec.input_dim) throw std::invalid_argument("network input dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("network input not finite");
  if (spec.latent_dim > 0) {
    if (z == nullptr || z->size() != spec.latent_dim)
      throw std::invalid_argument("latent vector missing or of wrong size");
  } else if (z != nullptr && z->size() != 0) {
    throw std::invalid_argument("latent vector supplied to a network without latent input");
  }
  Eigen::VectorXd h0(spec.aug_input_dim());
  h0.head(spec.input_dim) = x;
  if (spec.latent_dim > 0) h0.tail(spec.latent_dim) = *z;
  return h0;
}

Eigen::MatrixXd augmented_batch(const NetworkSpec& spec, const Eigen::MatrixXd& X,
                                const Eigen::VectorXd* z) {
  if (X.rows() != spec.input_dim)
    throw std::invalid_argument("network batch input dimension mismatch");
  if (spec.latent_dim > 0 && (z == nullptr || z->size() != spec.latent_dim))
    throw std::invalid_argument("latent vector missing or of wrong size");
  Eigen::MatrixXd h0(spec.aug_input_dim(), X.cols());
  h0.topRows(spec.input_dim) = X;
  if (spec.latent_dim > 0) h0.bottomRows(spec.latent_dim).colwise() = *z;
  return h0;
}

// m0 x (B*d) Jacobian of the augmented input: per-sample blocks [I_d ; 0].
Eigen::MatrixXd input_jacobian_blocks(int m0, int d, long batch) {
  Eigen::MatrixXd v0 = Eigen::MatrixXd::Zero(m0, batch * d);
  for (long i = 0; i < batch; ++i)
    for (int c = 0; c < d; ++c) v0(c, i * d + c) = 1.0;
  return v0;
}

// view of every d-th column (offset c) of an (rows x B*d) Jacobian block
// matrix, one column per sample; `ld` is the storage height of the matrix
using JacView = Eigen::Map<Eigen::MatrixXd, Eigen::Unaligned, Eigen::OuterStride<>>;
using ConstJacView = Eigen::Map<const Eigen::MatrixXd, Eigen::Unaligned, Eigen::OuterStride<>>;

JacView jac_view(Eigen::MatrixXd& m, long rows, int c, int d, long batch) {
  return JacView(m.data() + static_cast<long>(c) * m.rows(), rows, batch,
                 Eigen::OuterStride<>(m.rows() * d));
}

ConstJacView jac_view(const Eigen::MatrixXd& m, long rows, int c, int d, long batch) {
  return ConstJacView(m.data() + static_cast<long>(c) * m.rows(), rows, batch,
                      Eigen::OuterStride<>(m.rows() * d));
}

// overflow-safe softplus value and derivative over a whole block:
// writes scale * sigma(p) into `value` and sigma'(p) into s
template <typename PIn, typename Target>
void softplus_block(const PIn& p, double beta, double scale, Target&& value,
                    Eigen::MatrixXd& s) {
  s = (-(beta * p.array()).abs()).exp().matrix();  // e^{-|beta p|}
  value = (scale * (p.array().max(0.0) + s.array().log1p() / beta)).matrix();
  s = ((p.array() >= 0.0).select(1.0 / (1.0 + s.array()), s.array() / (1.0 + s.array()))).matrix();
}

}  // namespace

double forward(const Network& net, const Eigen::VectorXd& x, const Eigen::VectorXd* z) {
  const NetworkSpec& spec = net.spec;
  const Eigen::VectorXd h0 = augmented_input(spec, x, z);
  const int n = spec.hidden_count();

  Eigen::VectorXd u = h0;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd p = net.weights[j] * u + net.biases[j];
    Eigen::VectorXd h(p.size());
    for (long r = 0; r < p.size(); ++r) h[r] = softplus(p[r], spec.softplus_beta);
    if (spec.has_skip(j + 1)) {
      u.resize(h.size() + h0.size());
      u << h, h0;
      u *= kInvSqrt2;
    } else {
      u = std::move(h);
    }
  }
  return (net.weights[n] * u)(0) + net.biases[n](0);
}

DualEval forward_dual(const Network& net, const Eigen::VectorXd& x, const Eigen::VectorXd* z) {
  const NetworkSpec& spec = net.spec;
  const Eigen::VectorXd h0 = augmented_input(spec, x, z);
  const int n = spec.hidden_count();
  const int m0 = spec.aug_input_dim();

  Eigen::VectorXd u = h0;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(m0, m0);  // du / d(x,z)
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd p = net.weights[j] * u + net.biases[j];
    Eigen::MatrixXd q = net.weights[j] * v;
    Eigen::VectorXd h(p.size());
    Eigen::VectorXd s(p.size());
    for (long r = 0; r < p.size(); ++r) {
      h[r] = softplus(p[r], spec.softplus_beta);
      s[r] = softplus_d1(p[r], spec.softplus_beta);
    }
    Eigen::MatrixXd dv = s.asDiagonal() * q;
    if (spec.has_skip(j + 1)) {
      u.resize(h.size() + m0);
      u << h, h0;
      u *= kInvSqrt2;
      Eigen::MatrixXd stacked(dv.rows() + m0, m0);
      stacked << dv, Eigen::MatrixXd::Identity(m0, m0);
      v = kInvSqrt2 * stacked;
    } else {
      u = std::move(h);
      v = std::move(dv);
    }
  }

  DualEval out;
  out.value = (net.weights[n] * u)(0) + net.biases[n](0);
  const Eigen::RowVectorXd g = net.weights[n] * v;
  out.input_gradient = g.head(spec.input_dim).transpose();
  if (spec.latent_dim > 0) out.latent_gradient = g.tail(spec.latent_dim).transpose();
  return out;
}

Eigen::VectorXd forward_values_batch(const Network& net, const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd* z) {
  const NetworkSpec& spec = net.spec;
  const int n = spec.hidden_count();
  const long B = X.cols();
  Eigen::VectorXd out(B);
  if (B == 0) return out;

  parallel_chunks(static_cast<std::size_t>(B), 1024,
                  [&](std::size_t cb, std::size_t ce, std::size_t) {
    const long nb = static_cast<long>(ce - cb);
    const Eigen::MatrixXd h0 = augmented_batch(spec, X.middleCols(cb, nb), z);
    Eigen::MatrixXd u = h0, p, s;
    for (int j = 0; j < n; ++j) {
      p.noalias() = net.weights[j] * u;
      p.colwise() += net.biases[j];
      if (spec.has_skip(j + 1)) {
        Eigen::MatrixXd next(p.rows() + h0.rows(), nb);
        softplus_block(p, spec.softplus_beta, kInvSqrt2, next.topRows(p.rows()), s);
        next.bottomRows(h0.rows()) = kInvSqrt2 * h0;
        u = std::move(next);
      } else {
        softplus_block(p, spec.softplus_beta, 1.0, u, s);
      }
    }
    out.segment(cb, nb) = ((net.weights[n] * u).row(0).array() + net.biases[n](0)).transpose();
  });
  return out;
}

BatchDual forward_dual_batch(const Network& net, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd* z, ForwardTrace* trace) {
  const NetworkSpec& spec = net.spec;
  const int n = spec.hidden_count();
  const int d = spec.input_dim;
  const int m0 = spec.aug_input_dim();
  const long B = X.cols();
  const double beta = spec.softplus_beta;

  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  tr.batch = static_cast<int>(B);
  tr.u.resize(n + 1);  // per layer: [values | jacobian blocks], in x (B + B*d)
  tr.s.resize(n);
  tr.p.resize(n);
  tr.v.clear();
  tr.q.clear();

  tr.u[0].resize(m0, B + B * d);
  tr.u[0].leftCols(B) = augmented_batch(spec, X, z);
  tr.u[0].rightCols(B * d) = input_jacobian_blocks(m0, d, B);

  for (int j = 0; j < n; ++j) {
    const long rows = spec.layer_out(j);
    Eigen::MatrixXd& pq = tr.p[j];
    pq.noalias() = net.weights[j] * tr.u[j];
    pq.leftCols(B).colwise() += net.biases[j];

    const bool skip = spec.has_skip(j + 1);
    const double scale = skip ? kInvSqrt2 : 1.0;
    Eigen::MatrixXd& un = tr.u[j + 1];
    un.resize(rows + (skip ? m0 : 0), B + B * d);

    softplus_block(pq.leftCols(B), beta, scale, un.topLeftCorner(rows, B), tr.s[j]);
    for (int c = 0; c < d; ++c)
      jac_view(un, rows, B + c, d, B) =
          (scale * tr.s[j].array() * jac_view(pq, rows, B + c, d, B).array()).matrix();
    if (skip) {
      un.bottomLeftCorner(m0, B) = kInvSqrt2 * tr.u[0].leftCols(B);
      un.bottomRightCorner(m0, B * d) = kInvSqrt2 * tr.u[0].rightCols(B * d);
    }
  }

  BatchDual out;
  const Eigen::RowVectorXd fg = net.weights[n] * tr.u[n];
  out.values = (fg.head(B).array() + net.biases[n](0)).transpose();
  out.input_gradients.resize(d, B);
  for (long i = 0; i < B; ++i)
    for (int c = 0; c < d; ++c) out.input_gradients(c, i) = fg(B + i * d + c);
  return out;
}

ParamGradient backward_from_trace(const Network& net, const ForwardTrace& trace,
                                  const Eigen::VectorXd& value_weights,
                                  const Eigen::MatrixXd& grad_weights) {
  const NetworkSpec& spec = net.spec;
  const int n = spec.hidden_count();
  const int d = spec.input_dim;
  const int m0 = spec.aug_input_dim();
  const long B = trace.batch;
  const double beta = spec.softplus_beta;

  if (value_weights.size() != B || grad_weights.rows() != d || grad_weights.cols() != B)
    throw std::invalid_argument("backward: upstream weight shape mismatch");
  if (!value_weights.allFinite() || !grad_weights.allFinite())
    throw std::invalid_argument("backward: non-finite upstream weights");

  ParamGradient g = ParamGradient::zero(net);

  // upstream row [wf | wg-flat] matching the [values | jacobian] layout
  Eigen::RowVectorXd fgbar(B + B * d);
  fgbar.head(B) = value_weights.transpose();
  for (long i = 0; i < B; ++i)
    for (int c = 0; c < d; ++c) fgbar(B + i * d + c) = grad_weights(c, i);

  // output layer: objective = fgbar . (W_n uv_n + bias on the value part)
  g.dW[n].noalias() = fgbar * trace.u[n].transpose();
  g.db[n](0) = fgbar.head(B).sum();

  Eigen::MatrixXd uvbar, hdbar, pqbar, sbar;
  uvbar.noalias() = net.weights[n].transpose() * fgbar;  // in x (B + B*d)
  Eigen::MatrixXd h0bar = Eigen::MatrixXd::Zero(m0, B);

  for (int j = n - 1; j >= 0; --j) {
    const long rows = spec.layer_out(j);
    if (spec.has_skip(j + 1)) {
      hdbar = kInvSqrt2 * uvbar.topRows(rows);
      h0bar.noalias() += kInvSqrt2 * uvbar.block(rows, 0, m0, B);
      // the dropped jacobian rows belong to the constant input Jacobian
    } else {
      hdbar.swap(uvbar);
    }

    const Eigen::MatrixXd& s = trace.s[j];
    const Eigen::MatrixXd& pq = trace.p[j];

    // forward: h = softplus(p) (value part), dv(c) = s .* q(c) (jacobian part)
    //   sbar = h-bar .* softplus'' contribution + sum_c dbar(c) .* q(c)
    //   pqbar = [pbar | s .* dbar(c) ...]
    sbar.resize(rows, B);
    sbar = (jac_view(hdbar, rows, B + 0, d, B).array() *
            jac_view(pq, rows, B + 0, d, B).array()).matrix();
    for (int c = 1; c < d; ++c)
      sbar.array() +=
          jac_view(hdbar, rows, B + c, d, B).array() * jac_view(pq, rows, B + c, d, B).array();

    pqbar.resize(rows, B + B * d);
    // value part: h-bar .* s + sbar .* beta s (1 - s)
    pqbar.leftCols(B) = hdbar.leftCols(B).cwiseProduct(s);
    pqbar.leftCols(B).array() += sbar.array() * (beta * s.array() * (1.0 - s.array()));
    for (int c = 0; c < d; ++c)
      jac_view(pqbar, rows, B + c, d, B) =
          (s.array() * jac_view(hdbar, rows, B + c, d, B).array()).matrix();

    g.dW[j].noalias() = pqbar * trace.u[j].transpose();
    g.db[j] = pqbar.leftCols(B).rowwise().sum();

    uvbar.noalias() = net.weights[j].transpose() * pqbar;
  }

  h0bar += uvbar.leftCols(B);  // u_0 value part is the augmented input
  if (spec.latent_dim > 0) g.dz = h0bar.bottomRows(spec.latent_dim).rowwise().sum();
  return g;
}

ParamGradient backward(const Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd* z,
                       const Eigen::VectorXd& value_weights, const Eigen::MatrixXd& grad_weights) {
  if (X.cols() == 0) throw std::invalid_argument("backward: empty batch");
  ForwardTrace trace;
  forward_dual_batch(net, X, z, &trace);
  return backward_from_trace(net, trace, value_weights, grad_weights);
}

Network make_linear_network(const Eigen::VectorXd& w, double b) {
  Network net;
  net.spec.input_dim = static_cast<int>(w.size());
  net.spec.latent_dim = 0;
  net.spec.hidden_dims = {};
  net.weights.push_back(w.transpose());
  net.biases.push_back(Eigen::VectorXd::Constant(1, b));
  net.validate();
  return net;
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

void write_hex(std::FILE* f, double v) { std::fprintf(f, " %a", v); }

double parse_hex(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == nullptr || *end != '\0')
    throw std::invalid_argument("checkpoint: bad float token '" + tok + "'");
  return v;
}

}  // namespace

void save_network(const Network& net, const std::string& path,
                  const NormalizationTransform* transform) {
  net.validate();
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);

  std::fprintf(f, "sdfit-network v1\n");
  std::fprintf(f, "input_dim %d\n", net.spec.input_dim);
  std::fprintf(f, "latent_dim %d\n", net.spec.latent_dim);
  std::fprintf(f, "softplus_beta %a\n", net.spec.softplus_beta);
  std::fprintf(f, "hidden %d", net.spec.hidden_count());
  for (int w : net.spec.hidden_dims) std::fprintf(f, " %d", w);
  std::fputc('\n', f);
  std::fprintf(f, "skip %zu", net.spec.skip_layers.size());
  for (int s : net.spec.skip_layers) std::fprintf(f, " %d", s);
  std::fputc('\n', f);
  if (transform != nullptr && transform->valid()) {
    std::fprintf(f, "transform %a", transform->scale);
    for (long a = 0; a < transform->center.size(); ++a) write_hex(f, transform->center[a]);
    std::fputc('\n', f);
  }
  std::fprintf(f, "layers %d\n", net.spec.layer_count());
  for (int j = 0; j < net.spec.layer_count(); ++j) {
    const auto& W = net.weights[j];
    std::fprintf(f, "layer %d %ld %ld\n", j, W.rows(), W.cols());
    std::fprintf(f, "W");
    for (long r = 0; r < W.rows(); ++r)
      for (long c = 0; c < W.cols(); ++c) write_hex(f, W(r, c));
    std::fputc('\n', f);
    std::fprintf(f, "b");
    for (long r = 0; r < net.biases[j].size(); ++r) write_hex(f, net.biases[j][r]);
    std::fputc('\n', f);
  }
  std::fprintf(f, "end\n");
  std::fclose(f);
}

LoadedNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint: " + path);

  auto expect = [&](const std::string& what) {
    std::string tok;
    if (!(in >> tok) || tok != what)
      throw std::invalid_argument("checkpoint " + path + ": expected '" + what + "'");
  };
  auto next = [&]() {
    std::string tok;
    if (!(in >> tok)) throw std::invalid_argument("checkpoint " + path + ": truncated");
    return tok;
  };

  expect("sdfit-network");
  const std::string version = next();
  if (version != "v1")
    throw std::invalid_argument("checkpoint " + path + ": unsupported version " + version);

  LoadedNetwork out;
  NetworkSpec& spec = out.net.spec;
  expect("input_dim");
  spec.input_dim = std::stoi(next());
  expect("latent_dim");
  spec.latent_dim = std::stoi(next());
  expect("softplus_beta");
  spec.softplus_beta = parse_hex(next());
  expect("hidden");
  const int nh = std::stoi(next());
  spec.hidden_dims.resize(nh);
  for (int j = 0; j < nh; ++j) spec.hidden_dims[j] = std::stoi(next());
  expect("skip");
  const int ns = std::stoi(next());
  for (int j = 0; j < ns; ++j) spec.skip_layers.insert(std::stoi(next()));

  std::string tok = next();
  if (tok == "transform") {
    out.transform.scale = parse_hex(next());
    out.transform.center.resize(spec.input_dim);
    for (int a = 0; a < spec.input_dim; ++a) out.transform.center[a] = parse_hex(next());
    tok = next();
  }
  if (tok != "layers") throw std::invalid_argument("checkpoint " + path + ": expected 'layers'");
  const int layers = std::stoi(next());
  if (layers != spec.layer_count())
    throw std::invalid_argument("checkpoint " + path + ": layer count mismatch");

  out.net.weights.resize(layers);
  out.net.biases.resize(layers);
  for (int j = 0; j < layers; ++j) {
    expect("layer");
    if (std::stoi(next()) != j)
      throw std::invalid_argument("checkpoint " + path + ": layer index mismatch");
    const long rows = std::stol(next());
    const long cols = std::stol(next());
    expect("W");
    out.net.weights[j].resize(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) out.net.weights[j](r, c) = parse_hex(next());
    expect("b");
    out.net.biases[j].resize(rows);
    for (long r = 0; r < rows; ++r) out.net.biases[j][r] = parse_hex(next());
  }
  expect("end");
  out.net.validate();
  return out;
}

}  // namespace sdfit
