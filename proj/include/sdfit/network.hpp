#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace sdfit {

/// Softplus with sharpness beta: ln(1 + exp(beta t)) / beta, overflow-safe.
inline double softplus(double t, double beta) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(beta * t))) / beta;
}

/// First derivative: the logistic function of beta t.
inline double softplus_d1(double t, double beta) {
  const double bt = beta * t;
  if (bt >= 0.0) return 1.0 / (1.0 + std::exp(-bt));
  const double e = std::exp(bt);
  return e / (1.0 + e);
}

/// Second derivative in terms of the first: beta s (1 - s).
inline double softplus_d2_from_d1(double s, double beta) { return beta * s * (1.0 - s); }

/// Architecture of the scalar-output MLP f(x; theta, z). hidden_dims holds the
/// nominal width of each hidden layer. A skip layer s (1 <= s < #hidden)
/// receives [previous activation ; x ; z] / sqrt(2) as input; the preceding
/// layer's actual output width is reduced by input_dim + latent_dim so the
/// concatenation restores the nominal width.
struct NetworkSpec {
  int input_dim = 3;
  int latent_dim = 0;
  std::vector<int> hidden_dims;
  std::set<int> skip_layers;
  double softplus_beta = 100.0;

  int aug_input_dim() const { return input_dim + latent_dim; }
  int hidden_count() const { return static_cast<int>(hidden_dims.size()); }
  int layer_count() const { return hidden_count() + 1; }
  bool has_skip(int layer) const { return skip_layers.count(layer) > 0; }

  /// Actual output width of linear layer j (reduced before a skip layer).
  int layer_out(int j) const;
  /// Input width of linear layer j (after any concatenation).
  int layer_in(int j) const;

  void validate() const;

  /// 8 x 512 with a middle skip, the full-scale profile for 3D runs.
  static NetworkSpec full_profile(int input_dim, int latent_dim = 0);
  /// 4 x 128 with a middle skip, the reduced profile used by tests.
  static NetworkSpec reduced_profile(int input_dim, int latent_dim = 0);
};

struct Network {
  NetworkSpec spec;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void validate() const;
};

/// Result of the augmented forward pass at one point.
struct DualEval {
  double value = 0.0;
  Eigen::VectorXd input_gradient;   // d
  Eigen::VectorXd latent_gradient;  // L (empty when latent_dim == 0)
};

/// Gradients of a scalar objective with respect to every network parameter,
/// plus the shared latent vector of the batch when one was supplied.
struct ParamGradient {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
  Eigen::VectorXd dz;

  static ParamGradient zero(const Network& net);
  ParamGradient& operator+=(const ParamGradient& o);
  ParamGradient& operator*=(double s);
  bool all_finite() const;
  /// Name of the first non-finite block ("dW[2]", "db[0]", "dz"), or empty.
  std::string first_non_finite() const;
};

/// Values and input gradients for a batch (columns of X).
struct BatchDual {
  Eigen::VectorXd values;           // B
  Eigen::MatrixXd input_gradients;  // d x B
};

/// Sphere-like start: f(x; theta0) is approximately |x| - radius. Hidden
/// weights are N(0, 2/fan_out) with zero bias; the final layer is the
/// constant sqrt(pi/fan_in) plus N(0, 1e-5) noise with bias -radius.
Network geometric_init(const NetworkSpec& spec, double radius, std::uint64_t seed);

/// Plain forward pass. z must be supplied iff latent_dim > 0.
double forward(const Network& net, const Eigen::VectorXd& x, const Eigen::VectorXd* z = nullptr);

/// Forward pass with the exact analytic input gradient, obtained by
/// propagating Jacobians layer by layer alongside the values. The value path
/// performs the same arithmetic as forward().
DualEval forward_dual(const Network& net, const Eigen::VectorXd& x,
                      const Eigen::VectorXd* z = nullptr);

/// Batched value-only evaluation (used for grids).
Eigen::VectorXd forward_values_batch(const Network& net, const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd* z = nullptr);

/// Per-chunk forward state kept for the reverse pass. Reusing one trace
/// across calls of identical batch shape avoids reallocation.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> u;  // input to each linear layer
  std::vector<Eigen::MatrixXd> v;  // Jacobian blocks of u, d columns per sample
  std::vector<Eigen::MatrixXd> s;  // softplus' at each hidden preactivation
  std::vector<Eigen::MatrixXd> q;  // W_j * v_j before the activation scaling
  std::vector<Eigen::MatrixXd> p;  // preactivation scratch
  int batch = 0;
};

/// Forward over one batch, optionally recording the trace for backward.
BatchDual forward_dual_batch(const Network& net, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd* z = nullptr, ForwardTrace* trace = nullptr);

/// Reverse pass for sum_i (value_weights[i] f(x_i) + grad_weights.col(i) .
/// grad f(x_i)) given the trace of forward_dual_batch over the same batch.
ParamGradient backward_from_trace(const Network& net, const ForwardTrace& trace,
                                  const Eigen::VectorXd& value_weights,
                                  const Eigen::MatrixXd& grad_weights);

/// One-call reverse pass: gradient of
///   sum_i value_weights[i] * f(x_i) + grad_weights.col(i) . grad_x f(x_i)
/// with respect to all parameters (and z, when present). Exact to rounding.
ParamGradient backward(const Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd* z,
                       const Eigen::VectorXd& value_weights, const Eigen::MatrixXd& grad_weights);

/// Exactly linear network f(x) = w.x + b (no hidden layers); test fixture and
/// degenerate-case helper.
Network make_linear_network(const Eigen::VectorXd& w, double b);

/// Rigid normalization applied to inputs before training:
/// model = (world - center) * scale.
struct NormalizationTransform {
  double scale = 1.0;
  Eigen::VectorXd center;

  bool valid() const { return center.size() > 0 && scale > 0.0; }
  Eigen::VectorXd to_model(const Eigen::VectorXd& w) const { return (w - center) * scale; }
  Eigen::VectorXd to_world(const Eigen::VectorXd& m) const { return m / scale + center; }
};

/// Checkpoint container: versioned text with hexfloat payload, so a
/// save/load round trip is bit-exact.
void save_network(const Network& net, const std::string& path,
                  const NormalizationTransform* transform = nullptr);

struct LoadedNetwork {
  Network net;
  NormalizationTransform transform;  // valid() tells whether one was stored
};

LoadedNetwork load_network(const std::string& path);

}  // namespace sdfit
