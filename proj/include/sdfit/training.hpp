#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sdfit/geometry.hpp"
#include "sdfit/network.hpp"

namespace sdfit {

/// Loss weights: eikonal weight lambda, normal-term switch tau (0 or 1) and
/// latent regularization alpha.
struct LossParams {
  double lambda = 0.1;
  int tau = 1;
  double latent_reg = 0.0;

  void validate() const;
};

/// Per-evaluation loss breakdown. total = data + tau * normal +
/// lambda * eikonal + alpha * latent.
struct LossReport {
  double data_term = 0.0;
  double normal_term = 0.0;
  double eikonal_term = 0.0;
  double latent_term = 0.0;
  double total = 0.0;
};

/// Sampling distribution for the eikonal expectation: half the draws uniform
/// in a box, half Gaussians centered at source points with per-point
/// bandwidth sigma_i (the k-th nearest neighbor distance by default).
class SamplerD {
 public:
  SamplerD(PointCloud source, Eigen::VectorXd sigmas, Aabb box, std::uint64_t seed);

  /// Bandwidths from kth_nn_distance(cloud, k) (k <= 0 picks min(50, n-1))
  /// and box from bounding_box(cloud, box_margin). Duplicate points get a
  /// tiny positive floor instead of a zero bandwidth.
  static SamplerD from_cloud(const PointCloud& cloud, int k, double box_margin,
                             std::uint64_t seed);

  struct Draw {
    Eigen::MatrixXd points;             // d x n, shuffled
    std::vector<std::uint8_t> gaussian; // 1 where the sample came from the Gaussian half
  };

  /// ceil(n/2) uniform + floor(n/2) Gaussian samples, shuffled. n >= 2.
  Draw draw(int n);

  const Aabb& box() const { return box_; }
  const Eigen::VectorXd& sigmas() const { return sigmas_; }

 private:
  PointCloud source_;
  Eigen::VectorXd sigmas_;
  Aabb box_;
  std::mt19937_64 rng_;
};

/// Adam constants; beta1/beta2/eps fixed at the usual values by default.
struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for a Network's parameters.
struct AdamState {
  long step = 0;
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;

  static AdamState zero(const Network& net);
};

/// Moment accumulators for one flat vector (latent codes).
struct VectorAdamState {
  long step = 0;
  Eigen::VectorXd m, v;

  static VectorAdamState zero(int n);
};

/// Standard Adam update with bias correction. Throws NumericalError naming
/// the offending block when the gradient is not finite.
void adam_step(AdamState& state, Network& net, const ParamGradient& grad, const AdamParams& params);
void adam_step(VectorAdamState& state, Eigen::VectorXd& param, const Eigen::VectorXd& grad,
               const AdamParams& params);

/// Loss and its exact parameter gradient over one batch:
///   data    = mean_i |f(x_i)|
///   normal  = mean_i |grad f(x_i) - n_i|        (0 when tau = 0)
///   eikonal = mean_j (|grad f(y_j)| - 1)^2      over global_samples
///   latent  = |z|
/// Norm subgradients at zero are taken as zero. tau = 1 with absent normals
/// is an error. Reductions are compensated and chunk-ordered, so totals are
/// independent of the thread count and stable under batch permutation.
std::pair<LossReport, ParamGradient> loss_eval(const Network& net, const Eigen::VectorXd* z,
                                               const PointCloud& batch,
                                               const Eigen::MatrixXd& global_samples,
                                               const LossParams& params);

struct SingleShapeSchedule {
  int iterations = 5000;
  int batch_size = 256;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  double init_radius = 1.0;
  int knn_k = 0;                    // <= 0: min(50, n-1)
  double sampler_margin = 0.2;      // box inflation for the uniform half
  std::optional<Aabb> sampler_box;  // overrides the inflated bounding box
};

struct SingleShapeResult {
  Network net;
  std::vector<LossReport> trace;  // one entry per iteration
};

/// Fits one shape from a fixed point cloud: geometric init, then per
/// iteration a uniform-with-replacement surface batch plus a fresh draw from
/// the sampling distribution, one Adam step each. Bit-reproducible from the
/// seed.
SingleShapeResult train_single_shape(const PointCloud& cloud, const NetworkSpec& spec,
                                     const LossParams& params, const SingleShapeSchedule& sched);

/// Surface generator for infinite-data training: returns batch_size fresh
/// surface points each call.
using SurfaceSampler = std::function<Eigen::MatrixXd(int, std::mt19937_64&)>;

/// Variant that redraws the surface sample every iteration (no fixed cloud);
/// bandwidths are recomputed per batch and the uniform half uses the given
/// box. Normals are never used (tau is ignored and treated as 0).
SingleShapeResult train_fresh_sampled(const SurfaceSampler& surface, const NetworkSpec& spec,
                                      const LossParams& params, const SingleShapeSchedule& sched,
                                      const Aabb& sampler_box);

/// Latent codes for a shape family, column j for shape j.
struct LatentTable {
  Eigen::MatrixXd z;  // L x count

  int latent_dim() const { return static_cast<int>(z.rows()); }
  int count() const { return static_cast<int>(z.cols()); }
};

struct AutoDecoderSchedule {
  int epochs = 1000;
  int shapes_per_batch = 32;
  int points_per_shape = 128;
  double lr = 5e-4;
  int lr_halving_interval = 500;
  std::uint64_t seed = 0;
  double init_radius = 1.0;
  int knn_k = 0;
  double sampler_margin = 0.2;
};

struct AutoDecoderResult {
  Network net;
  LatentTable latents;
  std::vector<LossReport> trace;  // mean per epoch
};

/// Joint training of shared weights and one latent code per shape. Latents
/// start at zero; every step averages per-shape losses over the shape batch
/// and applies one Adam update to theta and to the batch latents. The
/// learning rate halves every lr_halving_interval epochs.
AutoDecoderResult train_auto_decoder(const std::vector<PointCloud>& clouds,
                                     const NetworkSpec& spec, const LossParams& params,
                                     const AutoDecoderSchedule& sched);

/// Optimizes a fresh latent for a new cloud against frozen weights (Adam on z
/// only, z starts at zero). Returns the final z; final_report (optional)
/// receives the last evaluation.
Eigen::VectorXd infer_latent(const Network& net, const PointCloud& cloud, int iters, double lr,
                             std::uint64_t seed, const LossParams& params, int batch_size = 128,
                             LossReport* final_report = nullptr);

/// Convex combination of latent codes; weights must be nonnegative and sum
/// to 1 within 1e-9.
Eigen::VectorXd average_latents(const std::vector<Eigen::VectorXd>& latents,
                                const std::vector<double>& weights);

/// CSV writers/readers. Loss trace header: iter,data,normal,eikonal,latent,total.
void save_loss_trace(const std::vector<LossReport>& trace, const std::string& path);
void save_latent_table(const LatentTable& table, const std::string& path);
LatentTable load_latent_table(const std::string& path);

}  // namespace sdfit
