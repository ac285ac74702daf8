#include "cpwloss/participation.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "cpwloss/error.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss {

namespace {

constexpr double kLayerRatio = 100.0;  // layers must be this much thinner than w

std::size_t idx(Region r) { return static_cast<std::size_t>(r); }

// Cells are graded geometrically away from every breakpoint: the target size
// at distance d from a breakpoint with size h is h + (growth - 1) d. Each
// interval is divided evenly in the coordinate phi(x) = int dx / size(x), so
// level L + 1 bisects every level-L cell in phi and the meshes nest.
std::vector<double> graded_axis(const std::vector<double>& points, const std::vector<double>& sizes,
                                double growth, double h_max, int level) {
  std::vector<double> out{points.front()};
  const double slope = growth - 1.0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double a = points[k];
    const double b = points[k + 1];
    const double ha = sizes[k];
    const double hb = sizes[k + 1];
    const auto size = [&](double x) {
      return std::min({ha + slope * (x - a), hb + slope * (b - x), h_max});
    };
    std::vector<double> xs{a};
    std::vector<double> phi{0.0};
    double x = a;
    while (x < b) {
      const double step = std::min(size(x) / 8.0, b - x);
      const double next = x + step;
      phi.push_back(phi.back() + 0.5 * step * (1.0 / size(x) + 1.0 / size(next)));
      xs.push_back(next);
      x = next;
      if (b - x < 1e-12 * (b - a)) break;
    }
    xs.back() = b;
    const double total = phi.back();
    const long cells = std::max(1L, static_cast<long>(std::ceil(total - 1e-9))) << level;
    std::size_t cursor = 0;
    for (long c = 1; c < cells; ++c) {
      const double target = total * static_cast<double>(c) / static_cast<double>(cells);
      while (phi[cursor + 1] < target) ++cursor;
      const double t = (target - phi[cursor]) / (phi[cursor + 1] - phi[cursor]);
      out.push_back(xs[cursor] + t * (xs[cursor + 1] - xs[cursor]));
    }
    out.push_back(b);
  }
  return out;
}

struct AxisSpec {
  std::vector<double> points;
  std::vector<bool> feature;
};

void add_point(AxisSpec& spec, double p, bool feature) {
  spec.points.push_back(p);
  spec.feature.push_back(feature);
}

std::vector<double> build_axis(AxisSpec spec, double feature_size, double growth, double h_max,
                               int level) {
  std::vector<std::size_t> order(spec.points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return spec.points[a] < spec.points[b]; });
  std::vector<double> pts;
  std::vector<bool> feat;
  for (auto o : order) {
    if (!pts.empty() && spec.points[o] - pts.back() <= 1e-15 * std::abs(spec.points[o])) {
      feat.back() = feat.back() || spec.feature[o];
      continue;
    }
    pts.push_back(spec.points[o]);
    feat.push_back(spec.feature[o]);
  }
  std::vector<double> sizes(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    double adjacent = std::numeric_limits<double>::infinity();
    if (k > 0) adjacent = std::min(adjacent, pts[k] - pts[k - 1]);
    if (k + 1 < pts.size()) adjacent = std::min(adjacent, pts[k + 1] - pts[k]);
    sizes[k] = std::min(feat[k] ? feature_size : h_max, 0.5 * adjacent);
  }
  return graded_axis(pts, sizes, growth, h_max, level);
}

struct Layout {
  double metal_top = 0.0;
  double center_edge = 0.0;  // |x| of the centre-conductor edge
  double ground_edge = 0.0;  // |x| of the ground-plane inner edge
};

Layout layout_of(const CpwGeometry& g) {
  Layout l;
  l.metal_top = g.t_metal;
  l.center_edge = 0.5 * g.w;
  l.ground_edge = 0.5 * g.w + g.gap;
  return l;
}

FieldSolution::Cell classify(double cx, double cy, const CpwGeometry& g, const Layout& l,
                             bool layers) {
  const double ax = std::abs(cx);
  const bool under_conductor = ax < l.center_edge || ax > l.ground_edge;
  if (cy < 0.0) {
    if (layers && under_conductor && cy > -g.t_sm) {
      const bool near_edge = (ax > l.center_edge - g.corner_extent && ax < l.center_edge) ||
                             (ax > l.ground_edge && ax < l.ground_edge + g.corner_extent);
      return {near_edge ? Region::kCorner : Region::kSM, false};
    }
    return {Region::kSubstrate, false};
  }
  if (under_conductor && cy < l.metal_top) return {Region::kAir, true};
  if (!layers) return {Region::kAir, false};
  if (!under_conductor && cy < g.t_sa) return {Region::kSA, false};
  if (under_conductor && cy > l.metal_top && cy < l.metal_top + g.t_ma) return {Region::kMA, false};
  const bool beside_wall = (ax > l.center_edge && ax < l.center_edge + g.t_ma) ||
                           (ax < l.ground_edge && ax > l.ground_edge - g.t_ma);
  if (beside_wall && cy < l.metal_top + g.t_ma) return {Region::kMA, false};
  return {Region::kAir, false};
}

// Local node numbers of the two triangles in a cell. Corners are numbered
// 0 = (i, j), 1 = (i+1, j), 2 = (i, j+1), 3 = (i+1, j+1). Cells right of the
// axis use the 0-3 diagonal, cells left of it the mirrored 1-2 diagonal.
using Tri = std::array<int, 3>;
std::array<Tri, 2> cell_triangles(bool right_half) {
  if (right_half) return {Tri{0, 1, 3}, Tri{0, 3, 2}};
  return {Tri{0, 1, 2}, Tri{1, 3, 2}};
}

struct TriGeom {
  std::array<double, 3> b;
  std::array<double, 3> c;
  double area;
};

TriGeom tri_geom(const std::array<double, 3>& px, const std::array<double, 3>& py) {
  TriGeom t;
  for (int k = 0; k < 3; ++k) {
    const int j = (k + 1) % 3;
    const int m = (k + 2) % 3;
    t.b[k] = py[j] - py[m];
    t.c[k] = px[m] - px[j];
  }
  t.area = 0.5 * std::abs((px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0]));
  return t;
}

}  // namespace

std::string region_name(Region region) {
  switch (region) {
    case Region::kSubstrate: return "substrate";
    case Region::kAir: return "air";
    case Region::kSM: return "SM";
    case Region::kMA: return "MA";
    case Region::kSA: return "SA";
    case Region::kCorner: return "corner";
  }
  return "unknown";
}

Region region_from_name(const std::string& name) {
  for (auto r : kAllRegions) {
    if (region_name(r) == name) return r;
  }
  throw ValidationError("unknown region: " + name);
}

void check_invariants(const CpwGeometry& g) {
  const std::pair<const char*, double> fields[] = {
      {"w", g.w}, {"gap", g.gap}, {"t_metal", g.t_metal}, {"t_substrate", g.t_substrate},
      {"air_height", g.air_height}, {"t_sm", g.t_sm}, {"t_ma", g.t_ma}, {"t_sa", g.t_sa},
      {"corner_extent", g.corner_extent}, {"domain_width", g.domain_width}};
  for (const auto& [name, value] : fields) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw ValidationError(std::string("geometry: ") + name + " must be positive");
    }
  }
  for (const auto& [name, value] : {std::pair{"t_sm", g.t_sm}, {"t_ma", g.t_ma}, {"t_sa", g.t_sa}}) {
    if (value * kLayerRatio > g.w) {
      throw ValidationError(std::string("geometry: ") + name + " must be at least 100x thinner than w");
    }
  }
  if (g.domain_width < 10.0 * (g.w + 2.0 * g.gap)) {
    throw ValidationError("geometry: domain_width must be >= 10 (w + 2 gap)");
  }
  if (g.corner_extent >= 0.5 * g.w) {
    throw ValidationError("geometry: corner_extent must be smaller than w/2");
  }
}

void check_invariants(const MaterialTable& mats) {
  for (auto r : kAllRegions) {
    if (!(mats[r].eps_r >= 1.0)) throw ValidationError("materials: eps_r < 1 for " + region_name(r));
    if (!(mats[r].tan_delta >= 0.0)) {
      throw ValidationError("materials: tan_delta < 0 for " + region_name(r));
    }
  }
}

std::optional<double> q_tls_from_participation(const ParticipationMap& p, const MaterialTable& mats) {
  double loss = 0.0;
  for (auto r : kAllRegions) loss += p[idx(r)] * mats[r].tan_delta;
  if (!(loss > 0.0)) return std::nullopt;
  return 1.0 / loss;
}

double FieldSolution::energy_sum() const {
  return std::accumulate(energy_.begin(), energy_.end(), 0.0);
}

std::array<double, 2> FieldSolution::cell_triangle_field(std::size_t i, std::size_t j, double px,
                                                         double py) const {
  const std::size_t nx = x_.size();
  const std::array<std::size_t, 4> nodes{j * nx + i, j * nx + i + 1, (j + 1) * nx + i,
                                         (j + 1) * nx + i + 1};
  const std::array<double, 4> cx{x_[i], x_[i + 1], x_[i], x_[i + 1]};
  const std::array<double, 4> cy{y_[j], y_[j], y_[j + 1], y_[j + 1]};
  const bool right = 0.5 * (x_[i] + x_[i + 1]) >= 0.0;
  const auto tris = cell_triangles(right);
  // Which side of the diagonal the point lies on.
  const double u = (px - x_[i]) / (x_[i + 1] - x_[i]);
  const double v = (py - y_[j]) / (y_[j + 1] - y_[j]);
  const Tri& tri = right ? (v <= u ? tris[0] : tris[1]) : (u + v <= 1.0 ? tris[0] : tris[1]);
  std::array<double, 3> tx, ty, tp;
  for (int k = 0; k < 3; ++k) {
    tx[k] = cx[tri[k]];
    ty[k] = cy[tri[k]];
    tp[k] = phi_[nodes[tri[k]]];
  }
  const auto g = tri_geom(tx, ty);
  double gx = 0.0;
  double gy = 0.0;
  for (int k = 0; k < 3; ++k) {
    gx += g.b[k] * tp[k];
    gy += g.c[k] * tp[k];
  }
  return {-gx / (2.0 * g.area), -gy / (2.0 * g.area)};
}

std::array<double, 2> FieldSolution::field_at(double px, double py) const {
  const auto locate = [](const std::vector<double>& axis, double v) {
    auto it = std::upper_bound(axis.begin(), axis.end(), v);
    auto k = static_cast<std::size_t>(std::distance(axis.begin(), it));
    return std::clamp<std::size_t>(k, 1, axis.size() - 1) - 1;
  };
  return cell_triangle_field(locate(x_, px), locate(y_, py), px, py);
}

double FieldSolution::energy_in_box(double x0, double x1, double y0, double y1) const {
  const std::size_t nx = x_.size();
  const std::size_t ny = y_.size();
  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    const double cy = 0.5 * (y_[j] + y_[j + 1]);
    if (cy < y0 || cy > y1) continue;
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const double cx = 0.5 * (x_[i] + x_[i + 1]);
      if (cx < x0 || cx > x1) continue;
      const auto& cell = cells_[j * (nx - 1) + i];
      if (cell.metal) continue;
      const double eps = mats_[cell.region].eps_r;
      const double area = 0.5 * (x_[i + 1] - x_[i]) * (y_[j + 1] - y_[j]);
      const bool right = cx >= 0.0;
      const auto tris = cell_triangles(right);
      for (const auto& tri : tris) {
        // Sample each triangle at its centroid to pick it out.
        const std::array<double, 4> px{x_[i], x_[i + 1], x_[i], x_[i + 1]};
        const std::array<double, 4> py{y_[j], y_[j], y_[j + 1], y_[j + 1]};
        const double mx = (px[tri[0]] + px[tri[1]] + px[tri[2]]) / 3.0;
        const double my = (py[tri[0]] + py[tri[1]] + py[tri[2]]) / 3.0;
        const auto e = cell_triangle_field(i, j, mx, my);
        sum += eps * area * (e[0] * e[0] + e[1] * e[1]);
      }
    }
  }
  return sum;
}

FieldSolution solve_field(const CpwGeometry& geom, const MaterialTable& mats, int level,
                          bool mesh_layers, const MeshOptions& options) {
  check_invariants(geom);
  check_invariants(mats);
  if (level < 0 || level > 8) throw ValidationError("refinement level must lie in [0, 8]");
  const Layout l = layout_of(geom);

  FieldSolution sol;
  sol.geom_ = geom;
  sol.mats_ = mats;
  sol.layers_ = mesh_layers;

  // Horizontal axis: built on x >= 0 and mirrored so the mesh is symmetric.
  const double half = 0.5 * geom.domain_width;
  AxisSpec xs;
  add_point(xs, 0.0, false);
  add_point(xs, l.center_edge, true);
  add_point(xs, l.ground_edge, true);
  add_point(xs, half, false);
  if (mesh_layers) {
    add_point(xs, l.center_edge - geom.corner_extent, true);
    add_point(xs, l.ground_edge + geom.corner_extent, true);
    add_point(xs, l.center_edge + geom.t_ma, true);
    add_point(xs, l.ground_edge - geom.t_ma, true);
  }
  const double h_max_x = 0.05 * half;
  const auto right = build_axis(xs, options.feature_size, options.growth, h_max_x, level);
  for (auto it = right.rbegin(); it + 1 != right.rend(); ++it) sol.x_.push_back(-*it);
  sol.x_.insert(sol.x_.end(), right.begin(), right.end());

  AxisSpec ys;
  add_point(ys, -geom.t_substrate, false);
  add_point(ys, 0.0, true);
  add_point(ys, l.metal_top, true);
  add_point(ys, geom.air_height, false);
  if (mesh_layers) {
    add_point(ys, -geom.t_sm, true);
    add_point(ys, geom.t_sa, true);
    add_point(ys, l.metal_top + geom.t_ma, true);
  }
  const double h_max_y = 0.05 * std::max(geom.t_substrate, geom.air_height);
  sol.y_ = build_axis(ys, options.feature_size, options.growth, h_max_y, level);

  const std::size_t nx = sol.x_.size();
  const std::size_t ny = sol.y_.size();
  const std::size_t n = nx * ny;
  sol.cells_.resize((nx - 1) * (ny - 1));
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    const double cy = 0.5 * (sol.y_[j] + sol.y_[j + 1]);
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const double cx = 0.5 * (sol.x_[i] + sol.x_[i + 1]);
      sol.cells_[j * (nx - 1) + i] = classify(cx, cy, geom, l, mesh_layers);
    }
  }

  // Dirichlet data: metal nodes and the outer boundary.
  std::vector<char> fixed(n, 0);
  std::vector<double> value(n, 0.0);
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      if (!sol.cells_[j * (nx - 1) + i].metal) continue;
      const double cx = 0.5 * (sol.x_[i] + sol.x_[i + 1]);
      const double v = std::abs(cx) < l.center_edge ? 1.0 : 0.0;
      for (std::size_t node : {j * nx + i, j * nx + i + 1, (j + 1) * nx + i, (j + 1) * nx + i + 1}) {
        fixed[node] = 1;
        value[node] = v;
      }
    }
  }
  for (std::size_t i = 0; i < nx; ++i) {
    fixed[i] = fixed[(ny - 1) * nx + i] = 1;
    value[i] = value[(ny - 1) * nx + i] = 0.0;
  }
  for (std::size_t j = 0; j < ny; ++j) {
    fixed[j * nx] = fixed[j * nx + nx - 1] = 1;
    value[j * nx] = value[j * nx + nx - 1] = 0.0;
  }

  std::vector<Eigen::Index> free_index(n, -1);
  Eigen::Index num_free = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!fixed[k]) free_index[k] = num_free++;
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(num_free) * 7);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(num_free);
  std::size_t elements = 0;
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const auto& cell = sol.cells_[j * (nx - 1) + i];
      if (cell.metal) continue;
      const double eps = mats[cell.region].eps_r;
      const std::array<std::size_t, 4> nodes{j * nx + i, j * nx + i + 1, (j + 1) * nx + i,
                                             (j + 1) * nx + i + 1};
      const std::array<double, 4> cx{sol.x_[i], sol.x_[i + 1], sol.x_[i], sol.x_[i + 1]};
      const std::array<double, 4> cy{sol.y_[j], sol.y_[j], sol.y_[j + 1], sol.y_[j + 1]};
      for (const auto& tri : cell_triangles(0.5 * (cx[0] + cx[1]) >= 0.0)) {
        ++elements;
        const auto g = tri_geom({cx[tri[0]], cx[tri[1]], cx[tri[2]]},
                                {cy[tri[0]], cy[tri[1]], cy[tri[2]]});
        for (int a = 0; a < 3; ++a) {
          const std::size_t na = nodes[tri[a]];
          if (fixed[na]) continue;
          for (int b = 0; b < 3; ++b) {
            const std::size_t nb = nodes[tri[b]];
            const double k = eps * (g.b[a] * g.b[b] + g.c[a] * g.c[b]) / (4.0 * g.area);
            if (fixed[nb]) {
              rhs[free_index[na]] -= k * value[nb];
            } else {
              triplets.emplace_back(free_index[na], free_index[nb], k);
            }
          }
        }
      }
    }
  }
  Eigen::SparseMatrix<double> stiffness(num_free, num_free);
  stiffness.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(stiffness);
  if (solver.info() != Eigen::Success) throw SolverError("factorisation of the stiffness matrix failed");
  const Eigen::VectorXd u = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !u.allFinite()) throw SolverError("linear solve failed");
  sol.residual_ = (stiffness * u - rhs).norm() / rhs.norm();
  if (!(sol.residual_ <= 1e-10)) {
    std::ostringstream msg;
    msg << "linear solve residual " << sol.residual_ << " exceeds 1e-10";
    throw SolverError(msg.str());
  }

  sol.phi_ = value;
  for (std::size_t k = 0; k < n; ++k) {
    if (!fixed[k]) sol.phi_[k] = u[free_index[k]];
  }
  sol.elements_ = elements;

  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const auto& cell = sol.cells_[j * (nx - 1) + i];
      if (cell.metal) continue;
      const double eps = mats[cell.region].eps_r;
      const double area = 0.5 * (sol.x_[i + 1] - sol.x_[i]) * (sol.y_[j + 1] - sol.y_[j]);
      // Centroids of the two triangles in the local (u, v) square.
      const bool right_half = 0.5 * (sol.x_[i] + sol.x_[i + 1]) >= 0.0;
      const std::array<std::array<double, 2>, 2> centroids =
          right_half ? std::array<std::array<double, 2>, 2>{{{2.0 / 3, 1.0 / 3}, {1.0 / 3, 2.0 / 3}}}
                     : std::array<std::array<double, 2>, 2>{{{1.0 / 3, 1.0 / 3}, {2.0 / 3, 2.0 / 3}}};
      for (const auto& c : centroids) {
        const double px = sol.x_[i] + c[0] * (sol.x_[i + 1] - sol.x_[i]);
        const double py = sol.y_[j] + c[1] * (sol.y_[j + 1] - sol.y_[j]);
        const auto e = sol.cell_triangle_field(i, j, px, py);
        sol.energy_[idx(cell.region)] += eps * area * (e[0] * e[0] + e[1] * e[1]);
      }
    }
  }
  return sol;
}

double thin_layer_participation(const FieldSolution& sol, Region layer, double t,
                                const MaterialTable& mats) {
  if (sol.layers_meshed()) {
    throw ValidationError("thin_layer_participation needs a solution without meshed layers");
  }
  if (layer == Region::kSubstrate || layer == Region::kAir) {
    throw ValidationError("thin_layer_participation: " + region_name(layer) + " is not a thin layer");
  }
  if (!(t >= 0.0)) throw ValidationError("thin_layer_participation: t must be >= 0");
  const auto& g = sol.geometry();
  if (t * kLayerRatio > g.w) {
    throw ValidationError("thin_layer_participation: layer not thin relative to w");
  }
  if (t == 0.0) return 0.0;

  const auto& x = sol.x();
  const auto& y = sol.y();
  const Layout l = layout_of(g);
  const double eps_l = mats[layer].eps_r;
  const double eps_sub = mats[Region::kSubstrate].eps_r;
  const double eps_air = mats[Region::kAir].eps_r;
  const auto j_of = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(y.begin(), y.end(), v) - y.begin());
  };
  const std::size_t j0 = j_of(0.0);
  const std::size_t jt = j_of(l.metal_top);
  // Tiny offsets select the cell on the wanted side of an interface.
  const double dy0 = 1e-6 * (y[j0 + 1] - y[j0]);
  const double dyb = 1e-6 * (y[j0] - y[j0 - 1]);

  double integral = 0.0;
  const auto under_conductor = [&](double ax) { return ax < l.center_edge || ax > l.ground_edge; };
  const auto near_edge = [&](double ax) {
    return (ax > l.center_edge - g.corner_extent && ax < l.center_edge) ||
           (ax > l.ground_edge && ax < l.ground_edge + g.corner_extent);
  };

  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double cx = 0.5 * (x[i] + x[i + 1]);
    const double dx = x[i + 1] - x[i];
    const double ax = std::abs(cx);
    if (layer == Region::kSM || layer == Region::kCorner) {
      if (!under_conductor(ax) || near_edge(ax) != (layer == Region::kCorner)) continue;
      const auto e = sol.field_at(cx, -dyb);
      const double d_perp = eps_sub * e[1];
      integral += dx * (eps_l * e[0] * e[0] + d_perp * d_perp / eps_l);
    } else if (layer == Region::kSA) {
      if (under_conductor(ax)) continue;
      const auto below = sol.field_at(cx, -dyb);
      const auto above = sol.field_at(cx, dy0);
      const double e_par = 0.5 * (below[0] + above[0]);
      const double d_perp = 0.5 * (eps_sub * below[1] + eps_air * above[1]);
      integral += dx * (eps_l * e_par * e_par + d_perp * d_perp / eps_l);
    } else if (layer == Region::kMA && under_conductor(ax)) {
      const double dyt = 1e-6 * (y[jt + 1] - y[jt]);
      const auto e = sol.field_at(cx, l.metal_top + dyt);
      const double d_perp = eps_air * e[1];
      integral += dx * (eps_l * e[0] * e[0] + d_perp * d_perp / eps_l);
    }
  }
  if (layer == Region::kMA) {
    // Sidewalls: the four vertical metal faces facing the gaps.
    for (std::size_t j = j0; j < jt; ++j) {
      const double cy = 0.5 * (y[j] + y[j + 1]);
      const double dy = y[j + 1] - y[j];
      for (const double wall : {l.center_edge, l.ground_edge, -l.center_edge, -l.ground_edge}) {
        // Step from the wall into the gap.
        const double into_gap = (std::abs(wall) == l.center_edge ? 1.0 : -1.0) * (wall > 0 ? 1.0 : -1.0);
        const auto k = static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), wall) - x.begin());
        const double h = into_gap > 0 ? x[k + 1] - x[k] : x[k] - x[k - 1];
        const auto e = sol.field_at(wall + into_gap * 1e-6 * h, cy);
        const double d_perp = eps_air * e[0];
        integral += dy * (eps_l * e[1] * e[1] + d_perp * d_perp / eps_l);
      }
    }
  }
  return t * integral / sol.energy_sum();
}

namespace {

ParticipationResult evaluate_level(const CpwGeometry& geom, const MaterialTable& mats,
                                   ThinLayerMethod method, int level, const MeshOptions& options) {
  ParticipationResult r;
  r.method = method;
  const bool direct = method == ThinLayerMethod::kDirect;
  const auto sol = solve_field(geom, mats, level, direct, options);
  const double total = sol.energy_sum();
  if (!(total > 0.0)) throw SolverError("zero field energy: degenerate mesh");
  for (auto reg : kAllRegions) r.p[idx(reg)] = sol.region_energy()[idx(reg)] / total;
  if (!direct) {
    double layers = 0.0;
    const std::pair<Region, double> thin[] = {{Region::kSM, geom.t_sm},
                                              {Region::kCorner, geom.t_sm},
                                              {Region::kMA, geom.t_ma},
                                              {Region::kSA, geom.t_sa}};
    for (const auto& [reg, t] : thin) {
      r.p[idx(reg)] = thin_layer_participation(sol, reg, t, mats);
      layers += r.p[idx(reg)];
    }
    // The bulk keeps its unperturbed split of the remaining energy.
    r.p[idx(Region::kSubstrate)] *= 1.0 - layers;
    r.p[idx(Region::kAir)] *= 1.0 - layers;
  }
  r.q_tls = q_tls_from_participation(r.p, mats);
  r.energy_total = 0.5 * units::kEpsilon0 * total;
  r.mesh_stats.nodes = sol.num_nodes();
  r.mesh_stats.elements = sol.num_elements();
  r.mesh_stats.refinement_level = level;
  return r;
}

}  // namespace

ParticipationResult solve_cross_section(const CpwGeometry& geom, const MaterialTable& mats,
                                        ThinLayerMethod method, const MeshOptions& options) {
  if (options.fixed_level) return evaluate_level(geom, mats, method, *options.fixed_level, options);
  std::optional<ParticipationResult> previous;
  for (int level = options.min_level; level <= options.max_level; ++level) {
    auto current = evaluate_level(geom, mats, method, level, options);
    if (method == ThinLayerMethod::kPerturbative) {
      current.mesh_stats.unconverged = {Region::kMA, Region::kSA, Region::kCorner};
    }
    if (previous) {
      double change = 0.0;
      for (auto reg : kAllRegions) {
        const auto& skip = current.mesh_stats.unconverged;
        if (std::find(skip.begin(), skip.end(), reg) != skip.end()) continue;
        const double a = previous->p[idx(reg)];
        const double b = current.p[idx(reg)];
        if (std::max(a, b) > options.significant) {
          change = std::max(change, std::abs(b - a) / std::max(a, b));
        }
      }
      current.mesh_stats.last_relative_change = change;
      if (change < options.convergence_tol) return current;
    }
    previous = std::move(current);
  }
  std::ostringstream msg;
  msg << "participation ratios did not converge by refinement level " << options.max_level
      << " (last relative change " << previous->mesh_stats.last_relative_change.value_or(1.0)
      << ")";
  throw SolverError(msg.str());
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit_line needs >= 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("fit_line: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

std::array<double, 3> fit_quadratic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) throw ValidationError("fit_quadratic needs >= 3 points");
  // Scale x for conditioning.
  const double s = std::max(std::abs(*std::max_element(x.begin(), x.end())),
                            std::abs(*std::min_element(x.begin(), x.end())));
  Eigen::MatrixXd a(static_cast<Eigen::Index>(x.size()), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = x[i] / s;
    a.row(static_cast<Eigen::Index>(i)) << 1.0, u, u * u;
    b[static_cast<Eigen::Index>(i)] = y[i];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  return {c[0], c[1] / s, c[2] / (s * s)};
}

namespace {

template <typename Fn>
std::vector<ParticipationResult> run_all(std::size_t count, unsigned jobs, Fn&& solve_one) {
  std::vector<std::optional<ParticipationResult>> slots(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        slots[k] = solve_one(k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  std::vector<ParticipationResult> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

double variation(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0.0 ? *hi / *lo - 1.0 : (*hi > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
}

}  // namespace

SmSweep sweep_sm_thickness(const CpwGeometry& geom, const MaterialTable& mats,
                           std::span<const double> t_values, ThinLayerMethod method,
                           const MeshOptions& options, unsigned jobs) {
  if (t_values.empty()) throw ValidationError("sweep_sm_thickness: no thickness values");
  for (double t : t_values) {
    if (t < 0.1e-9 * (1 - 1e-9) || t > 2e-9 * (1 + 1e-9)) {
      throw ValidationError("sweep_sm_thickness: t_sm values must lie in [0.1, 2] nm");
    }
  }
  SmSweep sweep;
  sweep.t_values.assign(t_values.begin(), t_values.end());
  sweep.results = run_all(t_values.size(), jobs, [&](std::size_t k) {
    CpwGeometry g = geom;
    g.t_sm = t_values[k];
    return solve_cross_section(g, mats, method, options);
  });

  std::vector<double> tw, sm, corner_t, corner, ma, sa;
  for (std::size_t k = 0; k < t_values.size(); ++k) {
    const auto& r = sweep.results[k];
    ma.push_back(r[Region::kMA]);
    sa.push_back(r[Region::kSA]);
    corner_t.push_back(t_values[k]);
    corner.push_back(r[Region::kCorner]);
    if (t_values[k] >= sweep.fit_window_lo * (1 - 1e-9) &&
        t_values[k] <= sweep.fit_window_hi * (1 + 1e-9)) {
      tw.push_back(t_values[k]);
      sm.push_back(r[Region::kSM]);
    }
  }
  if (tw.size() >= 2) sweep.sm_fit = fit_line(tw, sm);
  if (corner_t.size() >= 3) sweep.corner_fit = fit_quadratic(corner_t, corner);
  sweep.ma_variation = variation(ma);
  sweep.sa_variation = variation(sa);

  const auto crossover = [&](const std::vector<double>& other, Region reg)
      -> std::optional<double> {
    const double mean = std::accumulate(other.begin(), other.end(), 0.0) / other.size();
    const double target = mean * mats[reg].tan_delta / mats[Region::kSM].tan_delta;
    if (!(sweep.sm_fit.slope > 0.0)) return std::nullopt;
    const double t = (target - sweep.sm_fit.intercept) / sweep.sm_fit.slope;
    if (!(t > 0.0)) return std::nullopt;
    return t;
  };
  if (tw.size() >= 2) {
    sweep.crossover_ma = crossover(ma, Region::kMA);
    sweep.crossover_sa = crossover(sa, Region::kSA);
  }
  return sweep;
}

MetalSweep sweep_metal_thickness(const CpwGeometry& geom, const MaterialTable& mats,
                                 std::span<const double> t_metal_values, ThinLayerMethod method,
                                 const MeshOptions& options, unsigned jobs) {
  if (t_metal_values.empty()) throw ValidationError("sweep_metal_thickness: no thickness values");
  for (double t : t_metal_values) {
    if (t < 50e-9 * (1 - 1e-9) || t > 500e-9 * (1 + 1e-9)) {
      throw ValidationError("sweep_metal_thickness: t_metal values must lie in [50, 500] nm");
    }
  }
  MetalSweep sweep;
  sweep.t_values.assign(t_metal_values.begin(), t_metal_values.end());
  sweep.results = run_all(t_metal_values.size(), jobs, [&](std::size_t k) {
    CpwGeometry g = geom;
    g.t_metal = t_metal_values[k];
    return solve_cross_section(g, mats, method, options);
  });
  for (auto reg : kAllRegions) {
    std::vector<double> v;
    for (const auto& r : sweep.results) v.push_back(r[reg]);
    sweep.variation[idx(reg)] = variation(v);
  }
  std::vector<double> q;
  for (const auto& r : sweep.results) {
    if (r.q_tls) q.push_back(*r.q_tls);
  }
  sweep.q_tls_variation = q.size() == sweep.results.size() ? variation(q) : 0.0;
  return sweep;
}

}  // namespace cpwloss
