// sdfit: fits signed distance function networks to raw point clouds and
// verifies the linear-model theory behind the eikonal-regularized loss.
#include <CLI11.hpp>

#include <cstdio>
#include <stdexcept>

#include "sdfit/common.hpp"
#include "../src/cli/commands.hpp"

using namespace sdfit::cli;

int main(int argc, char** argv) {
  CLI::App app{"sdfit: eikonal-regularized signed distance function learning"};
  app.require_subcommand(1);
  app.fallthrough(true);
  app.set_config("--config", "", "Read options from a key/value config file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  CommonOptions common;
  app.add_option("--seed", common.seed, "Master RNG seed")->capture_default_str();
  app.add_option("--out", common.out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads (0: hardware default)")
      ->check(CLI::Range(0, 64))
      ->capture_default_str();

  // ---- reconstruct ----
  ReconstructOptions rec;
  CLI::App* c_rec = app.add_subcommand("reconstruct", "Fit a network to one point cloud file");
  c_rec->add_option("--input", rec.input, "Point cloud text file")->required();
  c_rec->add_option("--profile", rec.profile, "Network profile: auto | reduced | full")
      ->capture_default_str();
  c_rec->add_option("--iters", rec.iterations, "Training iterations")
      ->check(CLI::Range(0, 1000000))
      ->capture_default_str();
  c_rec->add_option("--batch", rec.batch_size, "Surface/eikonal batch size")
      ->check(CLI::Range(2, 65536))
      ->capture_default_str();
  c_rec->add_option("--lr", rec.lr, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rec->add_option("--lambda", rec.lambda, "Eikonal weight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rec->add_option("--tau", rec.tau, "Normal term switch (-1: auto, 0, 1)")
      ->check(CLI::Range(-1, 1))
      ->capture_default_str();
  c_rec->add_option("--k", rec.knn_k, "Neighbor count for sampling bandwidths (0: min(50,n-1))")
      ->check(CLI::Range(0, 1000))
      ->capture_default_str();
  c_rec->add_option("--margin", rec.sampler_margin, "Bounding box inflation fraction")
      ->check(CLI::Range(0.0, 10.0))
      ->capture_default_str();
  c_rec->add_option("--grid", rec.grid_resolution, "Extraction grid resolution")
      ->check(CLI::Range(2, 512))
      ->capture_default_str();
  c_rec->add_option("--init-radius", rec.init_radius, "Geometric initialization radius")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rec->add_flag("--svg", rec.svg, "Write an SVG of 2D contours");
  c_rec->add_flag("!--no-normalize", rec.normalize, "Skip input normalization");
  c_rec->add_option("--metric-samples", rec.metric_samples,
                    "Points sampled on the reconstruction for metrics")
      ->check(CLI::Range(16, 1000000))
      ->capture_default_str();

  // ---- sdf-probe ----
  SdfProbeOptions probe;
  CLI::App* c_probe = app.add_subcommand(
      "sdf-probe", "Train against an analytic shape with fresh samples and report SDF error");
  c_probe->add_option("--shape", probe.shape, "plane | sphere")->capture_default_str();
  c_probe->add_option("--radius", probe.sphere_radius, "Sphere radius")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_probe->add_option("--dim", probe.dim, "Ambient dimension")
      ->check(CLI::Range(2, 3))
      ->capture_default_str();
  c_probe->add_option("--profile", probe.profile, "Network profile")->capture_default_str();
  c_probe->add_option("--iters", probe.iterations, "Training iterations")
      ->check(CLI::Range(0, 1000000))
      ->capture_default_str();
  c_probe->add_option("--batch", probe.batch_size, "Batch size")
      ->check(CLI::Range(2, 65536))
      ->capture_default_str();
  c_probe->add_option("--lr", probe.lr, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_probe->add_option("--lambda", probe.lambda, "Eikonal weight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_probe->add_option("--probe-n", probe.probe_samples, "Probe sample count")
      ->check(CLI::Range(1, 10000000))
      ->capture_default_str();
  c_probe->add_option("--band", probe.exclusion_band, "Exclusion band around the surface")
      ->check(CLI::Range(0.0, 10.0))
      ->capture_default_str();
  c_probe->add_option("--box", probe.probe_half_extent, "Probe box half extent")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // ---- shape-space ----
  ShapeSpaceOptions space;
  CLI::App* c_space =
      app.add_subcommand("shape-space", "Train an auto-decoder over a family of clouds");
  c_space->add_option("--inputs", space.inputs, "Point cloud files (two or more)")
      ->required()
      ->expected(-2);
  c_space->add_option("--profile", space.profile, "Network profile")->capture_default_str();
  c_space->add_option("--latent-dim", space.latent_dim, "Latent code width")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();
  c_space->add_option("--epochs", space.epochs, "Training epochs")
      ->check(CLI::Range(0, 1000000))
      ->capture_default_str();
  c_space->add_option("--shapes-per-batch", space.shapes_per_batch, "Shapes per step (0: all)")
      ->check(CLI::Range(0, 4096))
      ->capture_default_str();
  c_space->add_option("--points-per-shape", space.points_per_shape, "Samples per shape per step")
      ->check(CLI::Range(2, 65536))
      ->capture_default_str();
  c_space->add_option("--lr", space.lr, "Initial Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_space->add_option("--lr-halve-every", space.lr_halving_interval,
                      "Epoch interval for halving the learning rate")
      ->check(CLI::Range(1, 1000000))
      ->capture_default_str();
  c_space->add_option("--lambda", space.lambda, "Eikonal weight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_space->add_option("--tau", space.tau, "Normal term switch (-1: auto, 0, 1)")
      ->check(CLI::Range(-1, 1))
      ->capture_default_str();
  c_space->add_option("--alpha", space.alpha, "Latent regularization weight")
      ->check(CLI::Range(0.0, 1e6))
      ->capture_default_str();
  c_space->add_option("--grid", space.grid_resolution, "Extraction grid resolution")
      ->check(CLI::Range(2, 512))
      ->capture_default_str();
  c_space->add_flag("!--no-normalize", space.normalize, "Skip input normalization");

  // ---- infer ----
  InferOptions infer;
  CLI::App* c_infer =
      app.add_subcommand("infer", "Optimize a latent code for a new cloud against a checkpoint");
  c_infer->add_option("--checkpoint", infer.checkpoint, "Trained checkpoint")->required();
  c_infer->add_option("--input", infer.input, "Point cloud file")->required();
  c_infer->add_option("--iters", infer.iterations, "Latent optimization iterations")
      ->check(CLI::Range(0, 1000000))
      ->capture_default_str();
  c_infer->add_option("--batch", infer.batch_size, "Batch size")
      ->check(CLI::Range(2, 65536))
      ->capture_default_str();
  c_infer->add_option("--lr", infer.lr, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_infer->add_option("--lambda", infer.lambda, "Eikonal weight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_infer->add_option("--tau", infer.tau, "Normal term switch (-1: auto, 0, 1)")
      ->check(CLI::Range(-1, 1))
      ->capture_default_str();
  c_infer->add_option("--alpha", infer.alpha, "Latent regularization weight")
      ->check(CLI::Range(0.0, 1e6))
      ->capture_default_str();
  c_infer->add_option("--grid", infer.grid_resolution, "Extraction grid resolution")
      ->check(CLI::Range(2, 512))
      ->capture_default_str();

  // ---- interpolate ----
  InterpolateOptions interp;
  CLI::App* c_interp =
      app.add_subcommand("interpolate", "Extract the shape of a latent average");
  c_interp->add_option("--checkpoint", interp.checkpoint, "Trained checkpoint")->required();
  c_interp->add_option("--latents", interp.latents, "Latent table CSV")->required();
  c_interp->add_option("--ids", interp.ids, "Shape ids to blend")->required()->expected(-1);
  c_interp->add_option("--weights", interp.weights, "Simplex weights, summing to 1")
      ->required()
      ->expected(-1);
  c_interp->add_option("--grid", interp.grid_resolution, "Extraction grid resolution")
      ->check(CLI::Range(2, 512))
      ->capture_default_str();

  // ---- theory-verify ----
  TheoryVerifyOptions theory;
  CLI::App* c_theory = app.add_subcommand(
      "theory-verify", "Numerically verify the linear-model critical point and descent theory");
  c_theory->add_option("--dim", theory.dim, "Ambient dimension")
      ->check(CLI::Range(2, 16))
      ->capture_default_str();
  c_theory->add_option("--lambda", theory.lambda, "Unit-norm penalty weight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_theory->add_option("--epsilon", theory.epsilon, "Planar deviation bound")
      ->check(CLI::Range(0.0, 10.0))
      ->capture_default_str();
  c_theory->add_option("--points", theory.points, "Planar sample size")
      ->check(CLI::Range(1, 1000000))
      ->capture_default_str();
  c_theory->add_option("--runs", theory.runs, "Gradient descent runs")
      ->check(CLI::Range(0, 100000))
      ->capture_default_str();
  c_theory->add_option("--alpha", theory.step_size, "Step size (0: 0.5/L)")
      ->check(CLI::Range(0.0, 100.0))
      ->capture_default_str();
  c_theory->add_option("--tol", theory.tol, "Gradient norm stopping tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_theory->add_option("--max-iters", theory.max_iters, "Iteration cap per run")
      ->check(CLI::Range(1, 100000000))
      ->capture_default_str();
  c_theory->add_option("--liapunov-samples", theory.liapunov_samples, "Certificate sample count")
      ->check(CLI::Range(0, 10000000))
      ->capture_default_str();
  c_theory->add_option("--eps-sweep", theory.eps_sweep, "Deviation sweep values")->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (c_rec->parsed()) return cmd_reconstruct(rec, common);
    if (c_probe->parsed()) return cmd_sdf_probe(probe, common);
    if (c_space->parsed()) return cmd_shape_space(space, common);
    if (c_infer->parsed()) return cmd_infer(infer, common);
    if (c_interp->parsed()) return cmd_interpolate(interp, common);
    if (c_theory->parsed()) return cmd_theory_verify(theory, common);
  } catch (const sdfit::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
