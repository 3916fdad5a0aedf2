#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdfit::cli {

/// Options shared by every subcommand. Commands throw std::invalid_argument
/// for usage/config/parse problems (exit 2) and NumericalError for numerical
/// failures (exit 3); the binary maps exceptions to exit codes.
struct CommonOptions {
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 0;  // 0 keeps the hardware default
};

struct ReconstructOptions {
  std::string input;
  std::string profile = "auto";  // auto | reduced | full
  int iterations = 5000;
  int batch_size = 256;
  double lr = 1e-3;
  double lambda = 0.1;
  int tau = -1;  // -1: use normals when the file has them
  int knn_k = 0;
  double sampler_margin = 0.2;
  int grid_resolution = 64;
  double init_radius = 1.0;
  bool normalize = true;
  bool svg = false;
  int metric_samples = 10000;
};

struct SdfProbeOptions {
  std::string shape = "sphere";  // plane | sphere
  double sphere_radius = 0.5;
  int dim = 3;
  std::string profile = "reduced";
  int iterations = 10000;
  int batch_size = 512;
  double lr = 1e-3;
  double lambda = 0.1;
  int probe_samples = 100000;
  double exclusion_band = 0.1;
  double probe_half_extent = 1.0;
  double sampler_margin = 0.2;  // probe box inflation for the eikonal draw
  double init_radius = 1.0;
};

struct ShapeSpaceOptions {
  std::vector<std::string> inputs;
  std::string profile = "reduced";
  int latent_dim = 8;
  int epochs = 2000;
  int shapes_per_batch = 0;  // 0: all shapes every step
  int points_per_shape = 128;
  double lr = 5e-4;
  int lr_halving_interval = 500;
  double lambda = 0.1;
  int tau = -1;
  double alpha = 0.01;
  int knn_k = 0;
  int grid_resolution = 128;
  double init_radius = 1.0;
  bool normalize = true;
};

struct InferOptions {
  std::string checkpoint;
  std::string input;
  int iterations = 800;
  int batch_size = 128;
  double lr = 1e-3;
  double lambda = 0.1;
  int tau = -1;
  double alpha = 0.01;
  int grid_resolution = 128;
};

struct InterpolateOptions {
  std::string checkpoint;
  std::string latents;
  std::vector<int> ids;
  std::vector<double> weights;
  int grid_resolution = 128;
};

struct TheoryVerifyOptions {
  int dim = 3;
  double lambda = 0.1;
  double epsilon = 0.0;
  int points = 500;
  int runs = 100;
  double step_size = 0.0;  // 0: 0.5 / smoothness bound per start
  double tol = 1e-8;
  int max_iters = 500000;
  int liapunov_samples = 1000;
  std::vector<double> eps_sweep;
};

int cmd_reconstruct(const ReconstructOptions& opt, const CommonOptions& common);
int cmd_sdf_probe(const SdfProbeOptions& opt, const CommonOptions& common);
int cmd_shape_space(const ShapeSpaceOptions& opt, const CommonOptions& common);
int cmd_infer(const InferOptions& opt, const CommonOptions& common);
int cmd_interpolate(const InterpolateOptions& opt, const CommonOptions& common);
int cmd_theory_verify(const TheoryVerifyOptions& opt, const CommonOptions& common);

}  // namespace sdfit::cli
