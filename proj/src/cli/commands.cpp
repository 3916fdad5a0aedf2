#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "sdfit/common.hpp"
#include "sdfit/geometry.hpp"
#include "sdfit/levelset.hpp"
#include "sdfit/linear_theory.hpp"
#include "sdfit/network.hpp"
#include "sdfit/parallel.hpp"
#include "sdfit/training.hpp"

namespace fs = std::filesystem;

namespace sdfit::cli {

namespace {

// Exclusive .lock file in the output directory, removed on scope exit.
class OutputLock {
 public:
  explicit OutputLock(const std::string& out_dir) {
    fs::create_directories(out_dir);
    path_ = fs::path(out_dir) / ".lock";
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr)
      throw std::invalid_argument("output directory '" + out_dir +
                                  "' is locked by another run (remove " + path_.string() + ")");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

void apply_common(const CommonOptions& common) {
  if (common.threads > 0) set_thread_count(common.threads);
}

std::string out_path(const CommonOptions& common, const std::string& name) {
  return (fs::path(common.out_dir) / name).string();
}

NetworkSpec pick_profile(const std::string& profile, int dim, int latent_dim) {
  if (profile == "reduced") return NetworkSpec::reduced_profile(dim, latent_dim);
  if (profile == "full") return NetworkSpec::full_profile(dim, latent_dim);
  if (profile == "auto")
    return dim == 2 ? NetworkSpec::reduced_profile(dim, latent_dim)
                    : NetworkSpec::full_profile(dim, latent_dim);
  throw std::invalid_argument("unknown profile '" + profile + "' (auto, reduced, full)");
}

int resolve_tau(int requested, const PointCloud& cloud) {
  if (requested == -1) return cloud.has_normals() ? 1 : 0;
  if (requested == 1 && !cloud.has_normals())
    throw std::invalid_argument("tau = 1 requires normals, but the input has none");
  return requested;
}

NormalizationTransform centering_transform(const Eigen::MatrixXd& points) {
  NormalizationTransform tf;
  tf.center = points.rowwise().mean();
  const Eigen::VectorXd side = points.rowwise().maxCoeff() - points.rowwise().minCoeff();
  const double longest = side.maxCoeff();
  tf.scale = longest > 0.0 ? 2.0 / longest : 1.0;
  return tf;
}

PointCloud apply_transform(const PointCloud& cloud, const NormalizationTransform& tf) {
  PointCloud out = cloud;
  out.points = (cloud.points.colwise() - tf.center) * tf.scale;
  return out;  // normals are direction-only, unchanged by scale + shift
}

Mesh mesh_to_world(Mesh mesh, const NormalizationTransform& tf) {
  for (auto& v : mesh.vertices) v = tf.to_world(v);
  return mesh;
}

Polyline2D contour_to_world(Polyline2D poly, const NormalizationTransform& tf) {
  for (auto& s : poly.segments) {
    s[0] = tf.to_world(s[0]);
    s[1] = tf.to_world(s[1]);
  }
  return poly;
}

void write_metrics_csv(const std::string& path, const MetricReport& r) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);
  std::fprintf(f, "chamfer,hausdorff,chamfer_ab,chamfer_ba,hausdorff_ab,hausdorff_ba\n");
  std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.chamfer, r.hausdorff,
               r.chamfer_one_sided_ab, r.chamfer_one_sided_ba, r.hausdorff_one_sided_ab,
               r.hausdorff_one_sided_ba);
  std::fclose(f);
}

// Extracts the zero set, writes it (world coordinates), and returns a sampled
// point set of the extraction for metric computation.
Eigen::MatrixXd extract_and_save(const Network& net, const Eigen::VectorXd* z,
                                 const Aabb& box_model, int resolution,
                                 const NormalizationTransform& tf, const std::string& stem,
                                 const CommonOptions& common, bool svg, int metric_samples,
                                 std::uint64_t sample_seed) {
  GridSpec grid;
  grid.box = box_model;
  grid.resolution = resolution;
  const GridField field = evaluate_grid(net, z, grid);

  if (net.spec.input_dim == 2) {
    const Polyline2D contour = contour_to_world(marching_squares(field, 0.0), tf);
    save_contour_csv(contour, out_path(common, stem + ".csv"));
    if (svg) save_contour_svg(contour, out_path(common, stem + ".svg"));
    if (contour.segments.empty()) return Eigen::MatrixXd(2, 0);
    return sample_polyline(contour, metric_samples, sample_seed);
  }
  const Mesh mesh = mesh_to_world(marching_cubes(field, 0.0), tf);
  save_obj(mesh, out_path(common, stem + ".obj"));
  if (mesh.triangles.empty()) return Eigen::MatrixXd(3, 0);
  return sample_mesh(mesh, metric_samples, sample_seed);
}

}  // namespace

int cmd_reconstruct(const ReconstructOptions& opt, const CommonOptions& common) {
  apply_common(common);
  OutputLock lock(common.out_dir);

  const PointCloud cloud = load_point_cloud(opt.input);
  const int tau = resolve_tau(opt.tau, cloud);

  NormalizationTransform tf;
  tf.center = Eigen::VectorXd::Zero(cloud.dim());
  tf.scale = 1.0;
  if (opt.normalize) tf = centering_transform(cloud.points);
  const PointCloud model_cloud = apply_transform(cloud, tf);

  LossParams params;
  params.lambda = opt.lambda;
  params.tau = tau;

  SingleShapeSchedule sched;
  sched.iterations = opt.iterations;
  sched.batch_size = opt.batch_size;
  sched.lr = opt.lr;
  sched.seed = common.seed;
  sched.init_radius = opt.init_radius;
  sched.knn_k = opt.knn_k;
  sched.sampler_margin = opt.sampler_margin;

  const NetworkSpec spec = pick_profile(opt.profile, cloud.dim(), 0);
  const SingleShapeResult result = train_single_shape(model_cloud, spec, params, sched);

  save_loss_trace(result.trace, out_path(common, "loss.csv"));
  save_network(result.net, out_path(common, "checkpoint.txt"), &tf);

  const Aabb box = bounding_box(model_cloud, opt.sampler_margin);
  const Eigen::MatrixXd recon_pts =
      extract_and_save(result.net, nullptr, box, opt.grid_resolution, tf,
                       cloud.dim() == 2 ? "contour" : "mesh", common, opt.svg,
                       opt.metric_samples, common.seed + 1);
  if (recon_pts.cols() > 0)
    write_metrics_csv(out_path(common, "metrics.csv"), set_distances(cloud.points, recon_pts));
  return 0;
}

int cmd_sdf_probe(const SdfProbeOptions& opt, const CommonOptions& common) {
  apply_common(common);
  OutputLock lock(common.out_dir);
  if (opt.dim != 2 && opt.dim != 3) throw std::invalid_argument("sdf-probe: dim must be 2 or 3");

  const int d = opt.dim;
  std::function<double(const Eigen::VectorXd&)> gt;
  SurfaceSampler surface;

  if (opt.shape == "plane") {
    // hyperplane x_d = 0 through the origin, sampled inside the probe box
    const double half = opt.probe_half_extent;
    gt = [d](const Eigen::VectorXd& p) { return p[d - 1]; };
    surface = [d, half](int n, std::mt19937_64& rng) {
      std::uniform_real_distribution<double> u(-half, half);
      Eigen::MatrixXd X = Eigen::MatrixXd::Zero(d, n);
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < d - 1; ++a) X(a, i) = u(rng);
      return X;
    };
  } else if (opt.shape == "sphere") {
    const double r = opt.sphere_radius;
    if (!(r > 0.0)) throw std::invalid_argument("sdf-probe: sphere radius must be positive");
    gt = [r](const Eigen::VectorXd& p) { return p.norm() - r; };
    surface = [d, r](int n, std::mt19937_64& rng) {
      std::normal_distribution<double> g(0.0, 1.0);
      Eigen::MatrixXd X(d, n);
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd dir(d);
        do {
          for (int a = 0; a < d; ++a) dir[a] = g(rng);
        } while (dir.norm() < 1e-12);
        X.col(i) = r * dir / dir.norm();
      }
      return X;
    };
  } else {
    throw std::invalid_argument("sdf-probe: unknown shape '" + opt.shape + "' (plane, sphere)");
  }

  Aabb probe_box;
  probe_box.lo = Eigen::VectorXd::Constant(d, -opt.probe_half_extent);
  probe_box.hi = Eigen::VectorXd::Constant(d, opt.probe_half_extent);

  // the eikonal draw must cover the probe region, so the uniform half uses
  // the inflated probe box rather than the per-batch bounding box
  Aabb sampler_box = probe_box;
  const double pad = opt.sampler_margin * 2.0 * opt.probe_half_extent;
  sampler_box.lo.array() -= pad;
  sampler_box.hi.array() += pad;

  LossParams params;
  params.lambda = opt.lambda;
  params.tau = 0;

  SingleShapeSchedule sched;
  sched.iterations = opt.iterations;
  sched.batch_size = opt.batch_size;
  sched.lr = opt.lr;
  sched.seed = common.seed;
  sched.init_radius = opt.init_radius;

  const NetworkSpec spec = pick_profile(opt.profile, d, 0);
  const SingleShapeResult result = train_fresh_sampled(surface, spec, params, sched, sampler_box);

  save_loss_trace(result.trace, out_path(common, "loss.csv"));
  save_network(result.net, out_path(common, "checkpoint.txt"));

  const auto [mean, stddev] = sdf_relative_error(result.net, gt, probe_box, opt.probe_samples,
                                                 common.seed + 1, opt.exclusion_band);
  std::FILE* f = std::fopen(out_path(common, "sdf_error.csv").c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open sdf_error.csv for writing");
  std::fprintf(f, "shape,mean,std,samples,exclusion_band\n");
  std::fprintf(f, "%s,%.17g,%.17g,%d,%.17g\n", opt.shape.c_str(), mean, stddev,
               opt.probe_samples, opt.exclusion_band);
  std::fclose(f);
  std::printf("sdf-probe %s: relative error %.6f +- %.6f\n", opt.shape.c_str(), mean, stddev);
  return 0;
}

int cmd_shape_space(const ShapeSpaceOptions& opt, const CommonOptions& common) {
  apply_common(common);
  OutputLock lock(common.out_dir);
  if (opt.inputs.size() < 2)
    throw std::invalid_argument("shape-space: at least two input clouds required");

  std::vector<PointCloud> clouds;
  clouds.reserve(opt.inputs.size());
  for (const std::string& path : opt.inputs) clouds.push_back(load_point_cloud(path));
  const int d = clouds[0].dim();
  for (const PointCloud& c : clouds)
    if (c.dim() != d) throw std::invalid_argument("shape-space: mixed input dimensions");

  int tau = opt.tau;
  for (const PointCloud& c : clouds) tau = resolve_tau(tau, c);

  // one shared frame for the family: per-shape normalization would destroy
  // relative scale, so the transform comes from the union of all clouds
  NormalizationTransform tf;
  tf.center = Eigen::VectorXd::Zero(d);
  tf.scale = 1.0;
  if (opt.normalize) {
    long total = 0;
    for (const PointCloud& c : clouds) total += c.size();
    Eigen::MatrixXd all(d, total);
    long at = 0;
    for (const PointCloud& c : clouds) {
      all.middleCols(at, c.size()) = c.points;
      at += c.size();
    }
    tf = centering_transform(all);
  }
  std::vector<PointCloud> model_clouds;
  model_clouds.reserve(clouds.size());
  for (const PointCloud& c : clouds) model_clouds.push_back(apply_transform(c, tf));

  LossParams params;
  params.lambda = opt.lambda;
  params.tau = tau;
  params.latent_reg = opt.alpha;

  AutoDecoderSchedule sched;
  sched.epochs = opt.epochs;
  sched.shapes_per_batch =
      opt.shapes_per_batch > 0 ? opt.shapes_per_batch : static_cast<int>(clouds.size());
  sched.points_per_shape = opt.points_per_shape;
  sched.lr = opt.lr;
  sched.lr_halving_interval = opt.lr_halving_interval;
  sched.seed = common.seed;
  sched.init_radius = opt.init_radius;
  sched.knn_k = opt.knn_k;

  const NetworkSpec spec = pick_profile(opt.profile, d, opt.latent_dim);
  const AutoDecoderResult result = train_auto_decoder(model_clouds, spec, params, sched);

  save_loss_trace(result.trace, out_path(common, "loss.csv"));
  save_network(result.net, out_path(common, "checkpoint.txt"), &tf);
  save_latent_table(result.latents, out_path(common, "latents.csv"));

  // shared extraction box covering the whole family
  Aabb box = bounding_box(model_clouds[0], 0.2);
  for (std::size_t j = 1; j < model_clouds.size(); ++j) {
    const Aabb b = bounding_box(model_clouds[j], 0.2);
    box.lo = box.lo.cwiseMin(b.lo);
    box.hi = box.hi.cwiseMax(b.hi);
  }

  for (int j = 0; j < result.latents.count(); ++j) {
    const Eigen::VectorXd zj = result.latents.z.col(j);
    extract_and_save(result.net, &zj, box, opt.grid_resolution, tf,
                     "shape_" + std::to_string(j), common, false, 1024, common.seed + 2 + j);
  }
  return 0;
}

int cmd_infer(const InferOptions& opt, const CommonOptions& common) {
  apply_common(common);
  OutputLock lock(common.out_dir);

  const LoadedNetwork loaded = load_network(opt.checkpoint);
  if (loaded.net.spec.latent_dim < 1)
    throw std::invalid_argument("infer: checkpoint has no latent input");

  const PointCloud cloud = load_point_cloud(opt.input);
  if (cloud.dim() != loaded.net.spec.input_dim)
    throw std::invalid_argument("infer: cloud dimension does not match the checkpoint");
  const int tau = resolve_tau(opt.tau, cloud);

  NormalizationTransform tf = loaded.transform;
  if (!tf.valid()) {
    tf.center = Eigen::VectorXd::Zero(cloud.dim());
    tf.scale = 1.0;
  }
  const PointCloud model_cloud = apply_transform(cloud, tf);

  LossParams params;
  params.lambda = opt.lambda;
  params.tau = tau;
  params.latent_reg = opt.alpha;

  LossReport final_report;
  const Eigen::VectorXd z = infer_latent(loaded.net, model_cloud, opt.iterations, opt.lr,
                                         common.seed, params, opt.batch_size, &final_report);

  LatentTable table;
  table.z = z;
  save_latent_table(table, out_path(common, "latent.csv"));
  save_loss_trace({final_report}, out_path(common, "loss.csv"));

  const Aabb box = bounding_box(model_cloud, 0.2);
  extract_and_save(loaded.net, &z, box, opt.grid_resolution, tf,
                   cloud.dim() == 2 ? "contour" : "mesh", common, false, 1024, common.seed + 1);
  return 0;
}

int cmd_interpolate(const InterpolateOptions& opt, const CommonOptions& common) {
  apply_common(common);
  OutputLock lock(common.out_dir);

  const LoadedNetwork loaded = load_network(opt.checkpoint);
  const LatentTable table = load_latent_table(opt.latents);
  if (table.latent_dim() != loaded.net.spec.latent_dim)
    throw std::invalid_argument("interpolate: latent dimension mismatch between checkpoint (" +
                                std::to_string(loaded.net.spec.latent_dim) + ") and table (" +
                                std::to_string(table.latent_dim()) + ")");
  if (opt.ids.size() != opt.weights.size() || opt.ids.empty())
    throw std::invalid_argument("interpolate: ids and weights must align and be non-empty");

  std::vector<Eigen::VectorXd> latents;
  for (int id : opt.ids) {
    if (id < 0 || id >= table.count())
      throw std::invalid_argument("interpolate: shape id " + std::to_string(id) +
                                  " outside the table");
    latents.push_back(table.z.col(id));
  }
  const Eigen::VectorXd z = average_latents(latents, opt.weights);

  LatentTable blended;
  blended.z = z;
  save_latent_table(blended, out_path(common, "latent.csv"));

  NormalizationTransform tf = loaded.transform;
  if (!tf.valid()) {
    tf.center = Eigen::VectorXd::Zero(loaded.net.spec.input_dim);
    tf.scale = 1.0;
  }
  Aabb box;
  box.lo = Eigen::VectorXd::Constant(loaded.net.spec.input_dim, -1.4);
  box.hi = Eigen::VectorXd::Constant(loaded.net.spec.input_dim, 1.4);
  extract_and_save(loaded.net, &z, box, opt.grid_resolution, tf,
                   loaded.net.spec.input_dim == 2 ? "contour" : "mesh", common, false, 1024,
                   common.seed + 1);
  return 0;
}

int cmd_theory_verify(const TheoryVerifyOptions& opt, const CommonOptions& common) {
  apply_common(common);
  OutputLock lock(common.out_dir);
  if (opt.dim < 2) throw std::invalid_argument("theory-verify: dim >= 2 required");
  if (!(opt.lambda > 0.0)) throw std::invalid_argument("theory-verify: lambda must be positive");
  if (opt.points < 1 || opt.runs < 0)
    throw std::invalid_argument("theory-verify: bad points/runs");

  std::mt19937_64 rng(common.seed);
  const std::uint64_t sample_seed = rng();

  const PlanarSample sample = make_planar_sample(opt.dim, opt.points, opt.epsilon, sample_seed);
  const LinearProblem prob = diagonalize(sample.points(), opt.lambda);
  const CriticalPointSet cps = critical_points(prob);

  if (cps.warned_small_lambda)
    std::printf("warning: lambda <= lambda1/2, the global-minimum guarantee does not apply\n");
  if (cps.degenerate)
    std::printf("warning: degenerate spectrum (lambda1 = lambda2), classification is nominal\n");

  {
    std::FILE* f = std::fopen(out_path(common, "critical_points.csv").c_str(), "w");
    if (!f) throw std::invalid_argument("cannot open critical_points.csv for writing");
    std::fprintf(f, "index,kind,grad_norm");
    for (int a = 0; a < opt.dim; ++a) std::fprintf(f, ",q%d", a + 1);
    for (int a = 0; a < opt.dim; ++a) std::fprintf(f, ",hess%d", a + 1);
    std::fputc('\n', f);
    for (std::size_t i = 0; i < cps.points.size(); ++i) {
      const CriticalPoint& cp = cps.points[i];
      const double gn = linear_loss_grad_hess(cp.location, prob).gradient.norm();
      std::fprintf(f, "%zu,%s,%.17g", i, to_string(cp.kind).c_str(), gn);
      for (int a = 0; a < opt.dim; ++a) std::fprintf(f, ",%.17g", cp.location[a]);
      for (int a = 0; a < opt.dim; ++a) std::fprintf(f, ",%.17g", cp.hessian_eigs[a]);
      std::fputc('\n', f);
    }
    std::fclose(f);
  }

  // gradient descent from random starts
  std::normal_distribution<double> gauss(0.0, 1.0);
  int reached = 0;
  {
    std::FILE* f = std::fopen(out_path(common, "runs.csv").c_str(), "w");
    if (!f) throw std::invalid_argument("cannot open runs.csv for writing");
    std::fprintf(f, "seed,label,iterations,final_loss\n");
    for (int run = 0; run < opt.runs; ++run) {
      Eigen::VectorXd q0(opt.dim);
      for (int a = 0; a < opt.dim; ++a) q0[a] = gauss(rng);
      const double alpha =
          opt.step_size > 0.0 ? opt.step_size : 0.5 / descent_smoothness_bound(prob, q0);
      const DescentResult res = gradient_descent(prob, q0, alpha, opt.max_iters, opt.tol);
      if (res.label == "global-min") ++reached;
      std::fprintf(f, "%d,%s,%d,%.17g\n", run, res.label.c_str(), res.iterations, res.final_loss);
    }
    std::fclose(f);
  }

  // Liapunov certificate in the half space of the positive global minimum
  {
    Eigen::VectorXd v;
    for (const CriticalPoint& cp : cps.points)
      if (cp.kind == CriticalKind::GlobalMin && cp.location.sum() > 0.0) v = cp.location;
    std::FILE* f = std::fopen(out_path(common, "liapunov.csv").c_str(), "w");
    if (!f) throw std::invalid_argument("cannot open liapunov.csv for writing");
    for (int a = 0; a < opt.dim; ++a) std::fprintf(f, "%sq%d", a ? "," : "", a + 1);
    std::fprintf(f, ",h,dhdt_closed,dhdt_chain\n");
    if (v.size() > 0 && opt.liapunov_samples > 0) {
      Eigen::MatrixXd samples(opt.dim, opt.liapunov_samples);
      int got = 0;
      while (got < opt.liapunov_samples) {
        Eigen::VectorXd q(opt.dim);
        for (int a = 0; a < opt.dim; ++a) q[a] = gauss(rng);
        if (v.dot(q) < 0.0) q = -q;
        // keep clear of the half-space boundary where both derivatives vanish
        if (v.dot(q) < 1e-3 * v.norm()) continue;
        samples.col(got++) = q;
      }
      const auto out = liapunov_check(prob, v, samples);
      for (int i = 0; i < opt.liapunov_samples; ++i) {
        for (int a = 0; a < opt.dim; ++a) std::fprintf(f, "%s%.17g", a ? "," : "", samples(a, i));
        std::fprintf(f, ",%.17g,%.17g,%.17g\n", out[i].h, out[i].dhdt_closed, out[i].dhdt_chain);
      }
    }
    std::fclose(f);
  }

  // deviation sweep with the same in-plane points and deviation directions
  if (!opt.eps_sweep.empty()) {
    std::FILE* f = std::fopen(out_path(common, "sweep.csv").c_str(), "w");
    if (!f) throw std::invalid_argument("cannot open sweep.csv for writing");
    std::fprintf(f, "epsilon,lambda1,u1_mismatch,ratio_lambda1_over_eps\n");
    for (double eps : opt.eps_sweep) {
      const PlanarSample s = make_planar_sample(opt.dim, opt.points, eps, sample_seed);
      const LinearProblem p = diagonalize(s.points(), opt.lambda);
      const double mis = std::min((p.eigvecs.col(0) - s.normal).norm(),
                                  (p.eigvecs.col(0) + s.normal).norm());
      std::fprintf(f, "%.17g,%.17g,%.17g,%.17g\n", eps, p.eigvals[0], mis,
                   eps > 0.0 ? p.eigvals[0] / eps : 0.0);
    }
    std::fclose(f);
  }

  {
    std::FILE* f = std::fopen(out_path(common, "summary.txt").c_str(), "w");
    if (!f) throw std::invalid_argument("cannot open summary.txt for writing");
    std::fprintf(f, "%d/%d runs reached a global minimum\n", reached, opt.runs);
    std::fprintf(f, "warn_small_lambda %d\n", cps.warned_small_lambda ? 1 : 0);
    std::fprintf(f, "degenerate %d\n", cps.degenerate ? 1 : 0);
    std::fclose(f);
  }
  std::printf("%d/%d runs reached a global minimum\n", reached, opt.runs);
  return 0;
}

}  // namespace sdfit::cli
