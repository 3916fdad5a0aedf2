#include "sdfit/levelset.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "sdfit/parallel.hpp"

namespace sdfit {

void GridSpec::validate() const {
  const int d = dim();
  if (d != 2 && d != 3) throw std::invalid_argument("GridSpec: dimension must be 2 or 3");
  if (resolution < 2) throw std::invalid_argument("GridSpec: resolution must be >= 2");
  if (box.hi.size() != d) throw std::invalid_argument("GridSpec: box corner size mismatch");
  for (int a = 0; a < d; ++a)
    if (!(box.hi[a] > box.lo[a])) throw std::invalid_argument("GridSpec: degenerate box");
}

double GridSpec::coord(int axis, int i) const {
  return box.lo[axis] + (box.hi[axis] - box.lo[axis]) *
                            (static_cast<double>(i) / static_cast<double>(resolution - 1));
}

double GridSpec::cell_size() const {
  double h = 0.0;
  for (int a = 0; a < dim(); ++a) h = std::max(h, (box.hi[a] - box.lo[a]) / (resolution - 1));
  return h;
}

void GridField::validate() const {
  spec.validate();
  std::size_t expect = 1;
  for (int a = 0; a < spec.dim(); ++a) expect *= static_cast<std::size_t>(spec.resolution);
  if (values.size() != expect) throw std::invalid_argument("GridField: value count mismatch");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("GridField: non-finite value");
}

namespace {

// Crossing point on a grid edge, always interpolated from the low-index node
// so adjacent cells produce bitwise identical vertices. Both values within
// 1e-12 of iso snap to the midpoint.
double edge_param(double v_lo, double v_hi, double iso) {
  if (std::abs(v_lo - iso) < 1e-12 && std::abs(v_hi - iso) < 1e-12) return 0.5;
  return (iso - v_lo) / (v_hi - v_lo);
}

// ---- case-table generation -------------------------------------------------
//
// A corner counts as inside when its value exceeds iso. On every cell face
// the crossed edges are paired by walking the face boundary counterclockwise
// as seen from outside the cell: each (+ -> -) crossing connects to the next
// (- -> +) crossing. On an ambiguous face (4 crossings) this convention joins
// the two positive corners; it depends only on the face's own sign pattern,
// so the two cells sharing a face always agree and meshes of interior level
// sets close up watertight. Chaining the directed pairs yields the polygon
// loops of each case, which are fan-triangulated in loop order (normals point
// toward the positive side).

struct CrossPair {
  int from;
  int to;
};

// Pairs +->- crossings with the cyclically next -->+ crossing.
// walk: (edge id, +1 for -->+, -1 for +->-) in boundary order.
void pair_crossings(const std::vector<std::pair<int, int>>& walk, std::vector<CrossPair>& out) {
  const int m = static_cast<int>(walk.size());
  for (int i = 0; i < m; ++i) {
    if (walk[i].second != -1) continue;
    for (int step = 1; step <= m; ++step) {
      const auto& cand = walk[(i + step) % m];
      if (cand.second == +1) {
        out.push_back({walk[i].first, cand.first});
        break;
      }
    }
  }
}

struct SquareTable {
  // per mask: directed segments as (from edge, to edge)
  std::vector<CrossPair> cases[16];
};

// 2D cell: corners 0..3 counterclockwise, edge k joins corners k and (k+1)%4.
const SquareTable& square_table() {
  static const SquareTable table = []() {
    SquareTable t;
    for (int mask = 1; mask < 15; ++mask) {
      std::vector<std::pair<int, int>> walk;
      for (int k = 0; k < 4; ++k) {
        const bool p0 = (mask >> k) & 1;
        const bool p1 = (mask >> ((k + 1) % 4)) & 1;
        if (p0 && !p1) walk.push_back({k, -1});
        if (!p0 && p1) walk.push_back({k, +1});
      }
      pair_crossings(walk, t.cases[mask]);
    }
    return t;
  }();
  return table;
}

struct CubeTable {
  // per mask: triangles as triples of cell edge ids (0..11)
  std::vector<std::array<int, 3>> cases[256];
};

// 3D cell: corner c sits at offsets ((c>>a)&1); edge id a*4+k joins the k-th
// corner with bit a clear (ascending) to its partner across axis a.
const CubeTable& cube_table() {
  static const CubeTable table = []() {
    int edge_of[8][8];
    for (auto& row : edge_of) std::fill(row, row + 8, -1);
    int edge_id = 0;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 8; ++c)
        if (!((c >> a) & 1)) {
          edge_of[c][c | (1 << a)] = edge_id;
          edge_of[c | (1 << a)][c] = edge_id;
          ++edge_id;
        }

    // face corner cycles, counterclockwise seen from outside the cell
    std::array<std::array<int, 4>, 6> faces;
    int fi = 0;
    for (int a = 0; a < 3; ++a) {
      const int u = (a + 1) % 3, v = (a + 2) % 3;
      for (int s = 0; s < 2; ++s) {
        const int seq1[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};  // outward +a
        const int seq0[4][2] = {{0, 0}, {0, 1}, {1, 1}, {1, 0}};  // outward -a
        for (int k = 0; k < 4; ++k) {
          const int uu = s ? seq1[k][0] : seq0[k][0];
          const int vv = s ? seq1[k][1] : seq0[k][1];
          faces[fi][k] = (s << a) | (uu << u) | (vv << v);
        }
        ++fi;
      }
    }

    CubeTable t;
    for (int mask = 1; mask < 255; ++mask) {
      int next[12];
      std::fill(next, next + 12, -1);
      for (const auto& face : faces) {
        std::vector<std::pair<int, int>> walk;
        for (int k = 0; k < 4; ++k) {
          const int c0 = face[k], c1 = face[(k + 1) % 4];
          const bool p0 = (mask >> c0) & 1, p1 = (mask >> c1) & 1;
          if (p0 && !p1) walk.push_back({edge_of[c0][c1], -1});
          if (!p0 && p1) walk.push_back({edge_of[c0][c1], +1});
        }
        std::vector<CrossPair> chords;
        pair_crossings(walk, chords);
        for (const auto& ch : chords) next[ch.from] = ch.to;
      }

      bool used[12] = {};
      for (int e = 0; e < 12; ++e) {
        if (next[e] < 0 || used[e]) continue;
        std::vector<int> loop;
        int cur = e;
        do {
          loop.push_back(cur);
          used[cur] = true;
          cur = next[cur];
        } while (cur != e);
        for (std::size_t k = 1; k + 1 < loop.size(); ++k)
          t.cases[mask].push_back({loop[0], loop[k], loop[k + 1]});
      }
    }
    return t;
  }();
  return table;
}

}  // namespace

GridField evaluate_grid(const std::function<double(const Eigen::VectorXd&)>& field,
                        const GridSpec& spec) {
  spec.validate();
  const int d = spec.dim();
  const std::size_t l = spec.resolution;
  const std::size_t total = d == 2 ? l * l : l * l * l;

  GridField out;
  out.spec = spec;
  out.values.resize(total);
  parallel_chunks(total, 4096, [&](std::size_t b, std::size_t e, std::size_t) {
    Eigen::VectorXd p(d);
    for (std::size_t i = b; i < e; ++i) {
      std::size_t rem = i;
      if (d == 3) {
        p[2] = spec.coord(2, static_cast<int>(rem % l));
        rem /= l;
      }
      p[1] = spec.coord(1, static_cast<int>(rem % l));
      p[0] = spec.coord(0, static_cast<int>(rem / l));
      out.values[i] = field(p);
    }
  });
  out.validate();
  return out;
}

GridField evaluate_grid(const Network& net, const Eigen::VectorXd* z, const GridSpec& spec) {
  spec.validate();
  const int d = spec.dim();
  if (d != net.spec.input_dim)
    throw std::invalid_argument("evaluate_grid: grid and network dimensions differ");
  const std::size_t l = spec.resolution;
  const std::size_t total = d == 2 ? l * l : l * l * l;

  GridField out;
  out.spec = spec;
  out.values.resize(total);

  const std::size_t slab = 1 << 16;
  for (std::size_t b = 0; b < total; b += slab) {
    const std::size_t e = std::min(total, b + slab);
    Eigen::MatrixXd X(d, e - b);
    for (std::size_t i = b; i < e; ++i) {
      std::size_t rem = i;
      if (d == 3) {
        X(2, i - b) = spec.coord(2, static_cast<int>(rem % l));
        rem /= l;
      }
      X(1, i - b) = spec.coord(1, static_cast<int>(rem % l));
      X(0, i - b) = spec.coord(0, static_cast<int>(rem / l));
    }
    const Eigen::VectorXd vals = forward_values_batch(net, X, z);
    for (std::size_t i = b; i < e; ++i) out.values[i] = vals[i - b];
  }
  out.validate();
  return out;
}

Polyline2D marching_squares(const GridField& field, double iso) {
  field.validate();
  if (field.spec.dim() != 2) throw std::invalid_argument("marching_squares: 2D field required");
  const int l = field.spec.resolution;
  const SquareTable& table = square_table();

  // corner k of a cell -> node offsets, matching the table's corner order
  const int off[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  // edge k -> its two corners
  const int edge_corner[4][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};

  Polyline2D out;
  for (int ix = 0; ix + 1 < l; ++ix) {
    for (int iy = 0; iy + 1 < l; ++iy) {
      double v[4];
      int mask = 0;
      for (int k = 0; k < 4; ++k) {
        v[k] = field.at2(ix + off[k][0], iy + off[k][1]);
        if (v[k] > iso) mask |= 1 << k;
      }
      if (mask == 0 || mask == 15) continue;

      auto edge_point = [&](int e) {
        int ca = edge_corner[e][0], cb = edge_corner[e][1];
        // canonical low-node-first interpolation, shared with the next cell
        const int na[2] = {ix + off[ca][0], iy + off[ca][1]};
        const int nb[2] = {ix + off[cb][0], iy + off[cb][1]};
        bool swap = (nb[0] < na[0]) || (nb[0] == na[0] && nb[1] < na[1]);
        if (swap) std::swap(ca, cb);
        const double t = edge_param(v[ca], v[cb], iso);
        Eigen::Vector2d pa(field.spec.coord(0, ix + off[ca][0]),
                           field.spec.coord(1, iy + off[ca][1]));
        Eigen::Vector2d pb(field.spec.coord(0, ix + off[cb][0]),
                           field.spec.coord(1, iy + off[cb][1]));
        return Eigen::Vector2d(pa + t * (pb - pa));
      };

      for (const CrossPair& ch : table.cases[mask])
        out.segments.push_back({edge_point(ch.from), edge_point(ch.to)});
    }
  }
  return out;
}

Mesh marching_cubes(const GridField& field, double iso) {
  field.validate();
  if (field.spec.dim() != 3) throw std::invalid_argument("marching_cubes: 3D field required");
  const int l = field.spec.resolution;
  const CubeTable& table = cube_table();

  Mesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  edge_vertex.reserve(1 << 16);

  auto node_linear = [&](int x, int y, int z) {
    return (static_cast<std::uint64_t>(x) * l + y) * l + z;
  };

  for (int ix = 0; ix + 1 < l; ++ix) {
    for (int iy = 0; iy + 1 < l; ++iy) {
      for (int iz = 0; iz + 1 < l; ++iz) {
        double v[8];
        int mask = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = field.at3(ix + (c & 1), iy + ((c >> 1) & 1), iz + ((c >> 2) & 1));
          if (v[c] > iso) mask |= 1 << c;
        }
        if (mask == 0 || mask == 255) continue;
        const auto& tris = table.cases[mask];
        if (tris.empty()) continue;

        int cell_vertex[12];
        std::fill(cell_vertex, cell_vertex + 12, -1);
        auto vertex_on_edge = [&](int e) {
          if (cell_vertex[e] >= 0) return cell_vertex[e];
          const int axis = e / 4;
          int k = e % 4, c_lo = -1;
          for (int c = 0; c < 8 && c_lo < 0; ++c)
            if (!((c >> axis) & 1) && k-- == 0) c_lo = c;
          const int c_hi = c_lo | (1 << axis);
          const int nx = ix + (c_lo & 1), ny = iy + ((c_lo >> 1) & 1), nz = iz + ((c_lo >> 2) & 1);
          const std::uint64_t key = node_linear(nx, ny, nz) * 3 + axis;
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) {
            cell_vertex[e] = it->second;
            return it->second;
          }
          const double t = edge_param(v[c_lo], v[c_hi], iso);
          Eigen::Vector3d p(field.spec.coord(0, nx), field.spec.coord(1, ny),
                            field.spec.coord(2, nz));
          p[axis] += t * (field.spec.coord(axis, axis == 0 ? nx + 1 : (axis == 1 ? ny + 1 : nz + 1)) -
                          p[axis]);
          const int idx = static_cast<int>(mesh.vertices.size());
          mesh.vertices.push_back(p);
          edge_vertex.emplace(key, idx);
          cell_vertex[e] = idx;
          return idx;
        };

        for (const auto& tri : tris) {
          const int a = vertex_on_edge(tri[0]);
          const int b = vertex_on_edge(tri[1]);
          const int c = vertex_on_edge(tri[2]);
          if (a == b || b == c || a == c) continue;  // snapped-out sliver
          mesh.triangles.push_back({a, b, c});
        }
      }
    }
  }
  return mesh;
}

long euler_characteristic(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
         static_cast<long>(mesh.triangles.size());
}

std::vector<std::vector<Eigen::Vector2d>> Polyline2D::chains() const {
  auto key = [](const Eigen::Vector2d& p) {
    std::uint64_t kx, ky;
    std::memcpy(&kx, &p[0], 8);
    std::memcpy(&ky, &p[1], 8);
    return std::pair<std::uint64_t, std::uint64_t>(kx, ky);
  };

  // endpoint -> (segment index, end index) incidence
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::vector<std::pair<int, int>>> incident;
  for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
    incident[key(segments[i][0])].push_back({i, 0});
    incident[key(segments[i][1])].push_back({i, 1});
  }

  std::vector<bool> used(segments.size(), false);
  std::vector<std::vector<Eigen::Vector2d>> out;

  auto walk = [&](int seg, int start_end, std::vector<Eigen::Vector2d>& chain) {
    int cur = seg, from_end = start_end;
    for (;;) {
      used[cur] = true;
      const Eigen::Vector2d tail = segments[cur][1 - from_end];
      chain.push_back(tail);
      const auto& inc = incident[key(tail)];
      int nxt = -1, nxt_end = 0;
      for (const auto& [si, ei] : inc) {
        if (!used[si]) {
          nxt = si;
          nxt_end = ei;
          break;
        }
      }
      if (nxt < 0) return;
      cur = nxt;
      from_end = nxt_end;
    }
  };

  for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
    if (used[i]) continue;
    std::vector<Eigen::Vector2d> chain;
    chain.push_back(segments[i][0]);
    walk(i, 0, chain);
    // extend from the original head if the chain was open
    if ((chain.front() - chain.back()).norm() > 0.0) {
      const auto& inc = incident[key(chain.front())];
      for (const auto& [si, ei] : inc) {
        if (!used[si]) {
          std::vector<Eigen::Vector2d> head;
          head.push_back(chain.front());
          walk(si, ei, head);
          std::reverse(head.begin(), head.end());
          head.insert(head.end(), chain.begin() + 1, chain.end());
          chain = std::move(head);
          break;
        }
      }
    }
    out.push_back(std::move(chain));
  }
  return out;
}

std::pair<double, double> sdf_relative_error(const Network& net,
                                             const std::function<double(const Eigen::VectorXd&)>& gt,
                                             const Aabb& box, int n, std::uint64_t seed,
                                             double exclusion_band, const Eigen::VectorXd* z) {
  if (n < 1) throw std::invalid_argument("sdf_relative_error: n >= 1 required");
  if (exclusion_band < 0.0) throw std::invalid_argument("sdf_relative_error: negative band");
  const int d = box.dim();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Eigen::MatrixXd keep(d, n);
  Eigen::VectorXd s_vals(n);
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd p(d);
    for (int a = 0; a < d; ++a) p[a] = box.lo[a] + (box.hi[a] - box.lo[a]) * unif(rng);
    const double s = gt(p);
    if (std::abs(s) > exclusion_band) {
      keep.col(kept) = p;
      s_vals[kept] = s;
      ++kept;
    }
  }
  if (kept < n / 2)
    throw std::invalid_argument(
        "sdf_relative_error: fewer than n/2 samples outside the exclusion band; "
        "box too tight around the surface");

  const Eigen::VectorXd f_vals = forward_values_batch(net, keep.leftCols(kept), z);
  double mean = 0.0;
  for (int i = 0; i < kept; ++i) mean += std::abs(f_vals[i] - s_vals[i]) / std::abs(s_vals[i]);
  mean /= kept;
  double var = 0.0;
  for (int i = 0; i < kept; ++i) {
    const double e = std::abs(f_vals[i] - s_vals[i]) / std::abs(s_vals[i]) - mean;
    var += e * e;
  }
  return {mean, std::sqrt(var / kept)};
}

double distance_to_polyline(const Eigen::Vector2d& p, const Polyline2D& contour) {
  if (contour.segments.empty())
    throw std::invalid_argument("distance_to_polyline: empty contour");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& seg : contour.segments) {
    const Eigen::Vector2d ab = seg[1] - seg[0];
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? (p - seg[0]).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, (seg[0] + t * ab - p).norm());
  }
  return best;
}

Eigen::MatrixXd sample_polyline(const Polyline2D& contour, int n, std::uint64_t seed) {
  if (contour.segments.empty()) throw std::invalid_argument("sample_polyline: empty contour");
  std::vector<double> cum(contour.segments.size());
  double total = 0.0;
  for (std::size_t i = 0; i < contour.segments.size(); ++i) {
    total += (contour.segments[i][1] - contour.segments[i][0]).norm();
    cum[i] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd out(2, n);
  for (int i = 0; i < n; ++i) {
    const double r = unif(rng) * total;
    const std::size_t k = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
    const auto& seg = contour.segments[std::min(k, contour.segments.size() - 1)];
    out.col(i) = seg[0] + unif(rng) * (seg[1] - seg[0]);
  }
  return out;
}

Eigen::MatrixXd sample_mesh(const Mesh& mesh, int n, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw std::invalid_argument("sample_mesh: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const Eigen::Vector3d e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
    const Eigen::Vector3d e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
    total += 0.5 * e1.cross(e2).norm();
    cum[i] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd out(3, n);
  for (int i = 0; i < n; ++i) {
    const double r = unif(rng) * total;
    const std::size_t k =
        std::min<std::size_t>(std::lower_bound(cum.begin(), cum.end(), r) - cum.begin(),
                              mesh.triangles.size() - 1);
    const auto& t = mesh.triangles[k];
    const double su = std::sqrt(unif(rng));
    const double sv = unif(rng);
    out.col(i) = (1.0 - su) * mesh.vertices[t[0]] + su * (1.0 - sv) * mesh.vertices[t[1]] +
                 su * sv * mesh.vertices[t[2]];
  }
  return out;
}

void save_obj(const Mesh& mesh, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);
  for (const auto& v : mesh.vertices)
    std::fprintf(f, "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
  for (const auto& t : mesh.triangles)
    std::fprintf(f, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
  std::fclose(f);
}

void save_contour_csv(const Polyline2D& contour, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);
  std::fprintf(f, "x0,y0,x1,y1\n");
  for (const auto& s : contour.segments)
    std::fprintf(f, "%.17g,%.17g,%.17g,%.17g\n", s[0][0], s[0][1], s[1][0], s[1][1]);
  std::fclose(f);
}

void save_contour_svg(const Polyline2D& contour, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot open for writing: " + path);

  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const auto& s : contour.segments) {
    for (const auto& p : s) {
      if (first) {
        xmin = xmax = p[0];
        ymin = ymax = p[1];
        first = false;
      }
      xmin = std::min(xmin, p[0]);
      xmax = std::max(xmax, p[0]);
      ymin = std::min(ymin, p[1]);
      ymax = std::max(ymax, p[1]);
    }
  }
  const double pad = 0.05 * std::max(xmax - xmin, ymax - ymin) + 1e-9;
  const double flip = ymin + ymax;  // svg y axis points down
  std::fprintf(f,
               "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.6g %.6g %.6g %.6g\">\n",
               xmin - pad, ymin - pad, (xmax - xmin) + 2 * pad, (ymax - ymin) + 2 * pad);
  const double stroke = 0.004 * std::max(xmax - xmin, ymax - ymin);
  for (const auto& chain : contour.chains()) {
    std::fprintf(f, "<path fill=\"none\" stroke=\"black\" stroke-width=\"%.6g\" d=\"", stroke);
    for (std::size_t i = 0; i < chain.size(); ++i)
      std::fprintf(f, "%s%.8g %.8g", i == 0 ? "M" : " L", chain[i][0], flip - chain[i][1]);
    std::fprintf(f, "\"/>\n");
  }
  std::fprintf(f, "</svg>\n");
  std::fclose(f);
}

}  // namespace sdfit
