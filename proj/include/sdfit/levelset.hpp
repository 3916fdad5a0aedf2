#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sdfit/geometry.hpp"
#include "sdfit/network.hpp"

namespace sdfit {

/// Regular lattice of resolution^d nodes spanning the box, corners included.
struct GridSpec {
  Aabb box;
  int resolution = 64;

  int dim() const { return box.dim(); }
  void validate() const;
  /// Node coordinate along one axis, i in [0, resolution).
  double coord(int axis, int i) const;
  /// Largest node spacing over the axes.
  double cell_size() const;
};

/// Scalar samples on a grid, row-major with the x index slowest:
/// 2D index = ix * l + iy, 3D index = (ix * l + iy) * l + iz.
struct GridField {
  GridSpec spec;
  std::vector<double> values;

  double at2(int ix, int iy) const { return values[static_cast<std::size_t>(ix) * spec.resolution + iy]; }
  double at3(int ix, int iy, int iz) const {
    const std::size_t l = spec.resolution;
    return values[(static_cast<std::size_t>(ix) * l + iy) * l + iz];
  }
  void validate() const;
};

/// Triangle mesh with shared vertices.
struct Mesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
};

/// Line segments of an iso-contour, optionally chainable into polylines.
struct Polyline2D {
  std::vector<std::array<Eigen::Vector2d, 2>> segments;

  /// Joins segments sharing endpoints into polylines (closed loops repeat the
  /// first point at the end). Exact endpoint matches only, which extraction
  /// guarantees for shared cell edges.
  std::vector<std::vector<Eigen::Vector2d>> chains() const;
};

/// Samples the network on every grid node.
GridField evaluate_grid(const Network& net, const Eigen::VectorXd* z, const GridSpec& spec);

/// Samples an arbitrary scalar field (analytic fixtures, tests).
GridField evaluate_grid(const std::function<double(const Eigen::VectorXd&)>& field,
                        const GridSpec& spec);

/// Iso-contour by a 16-case cell lookup with linear interpolation along cell
/// edges. Cells without a sign change emit nothing; a node counts as inside
/// when its value exceeds iso. Segments are oriented with the f > iso region
/// on their left.
Polyline2D marching_squares(const GridField& field, double iso);

/// Iso-surface by a 256-case cell lookup with linear interpolation along cell
/// edges and vertices welded across cells. The case table is generated once
/// from a fixed face-pairing convention (ambiguous faces join the f > iso
/// corners), so adjacent cells always agree and closed level sets produce
/// watertight meshes. Triangles are wound with normals toward f > iso.
Mesh marching_cubes(const GridField& field, double iso);

/// V - E + F over the shared-vertex mesh.
long euler_characteristic(const Mesh& mesh);

/// Relative error |f - s| / |s| of the network against a ground-truth signed
/// distance callback at n uniform samples of the box, discarding samples with
/// |s| <= exclusion_band. Returns (mean, std). Throws std::invalid_argument
/// when fewer than n/2 samples survive the rejection.
std::pair<double, double> sdf_relative_error(const Network& net,
                                             const std::function<double(const Eigen::VectorXd&)>& gt,
                                             const Aabb& box, int n, std::uint64_t seed,
                                             double exclusion_band, const Eigen::VectorXd* z = nullptr);

/// Distance from a point to the nearest contour segment.
double distance_to_polyline(const Eigen::Vector2d& p, const Polyline2D& contour);

/// Length-weighted deterministic sampling of contour segments.
Eigen::MatrixXd sample_polyline(const Polyline2D& contour, int n, std::uint64_t seed);

/// Area-weighted deterministic sampling of mesh triangles.
Eigen::MatrixXd sample_mesh(const Mesh& mesh, int n, std::uint64_t seed);

/// Wavefront OBJ ("v x y z" / "f i j k", 1-based), full precision.
void save_obj(const Mesh& mesh, const std::string& path);

/// Segment CSV with header "x0,y0,x1,y1", full precision.
void save_contour_csv(const Polyline2D& contour, const std::string& path);

/// Minimal SVG rendering of the chained contour.
void save_contour_svg(const Polyline2D& contour, const std::string& path);

}  // namespace sdfit
