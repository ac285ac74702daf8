#pragma once

// Electrostatic energy participation ratios of a coplanar-waveguide cross
// section, and the TLS-limited Q they imply:
//
//   p_i = int_i eps |grad phi|^2 dA / int eps |grad phi|^2 dA
//   1/Q_TLS = sum_i p_i tan(delta_i)
//
// The cross section (y up, substrate below y = 0):
//
//        air                     MA (top, sidewalls)
//    ground  |  gap  |  center  |  gap  |  ground
//    ========        ==========         ========   metal, t_metal
//    ----------------------------------------------  y = 0
//    SM sheet under the metal  SA on the exposed substrate in the gaps
//        substrate (t_substrate), grounded at the bottom
//
// The SM sheet replaces the top t_sm of substrate under each conductor, so
// the metal and the other layers stay put as t_sm changes. Corner regions
// are the parts of the SM sheet within corner_extent of each of the four
// conductor bottom edges.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cpwloss {

enum class Region { kSubstrate = 0, kAir, kSM, kMA, kSA, kCorner };
inline constexpr std::size_t kNumRegions = 6;
inline constexpr std::array<Region, kNumRegions> kAllRegions{
    Region::kSubstrate, Region::kAir, Region::kSM, Region::kMA, Region::kSA, Region::kCorner};

std::string region_name(Region region);
Region region_from_name(const std::string& name);

struct CpwGeometry {
  double w = 20e-6;
  double gap = 10e-6;
  double t_metal = 150e-9;
  double t_substrate = 280e-6;
  double air_height = 2e-3;
  double t_sm = 0.5e-9;
  double t_ma = 5e-9;
  double t_sa = 2e-9;
  double corner_extent = 100e-9;
  double domain_width = 2e-3;
};

/// Throws ValidationError on a violated geometry invariant.
void check_invariants(const CpwGeometry& geom);

struct Material {
  double eps_r = 1.0;
  double tan_delta = 0.0;
};

struct MaterialTable {
  std::array<Material, kNumRegions> entries{{
      {11.7, 1e-7},  // substrate
      {1.0, 0.0},    // air
      {4.0, 1e-3},   // SM
      {7.0, 1e-3},   // MA
      {4.0, 1e-3},   // SA
      {4.0, 1e-3},   // corner
  }};

  Material& operator[](Region r) { return entries[static_cast<std::size_t>(r)]; }
  const Material& operator[](Region r) const { return entries[static_cast<std::size_t>(r)]; }
};

void check_invariants(const MaterialTable& mats);

using ParticipationMap = std::array<double, kNumRegions>;

/// 1/sum(p_i tan_delta_i); absent when the weighted loss is zero.
std::optional<double> q_tls_from_participation(const ParticipationMap& p, const MaterialTable& mats);

struct MeshOptions {
  /// Growth ratio of neighbouring cells away from a feature at level 0.
  double growth = 1.5;
  /// Finest cell size allowed at a feature (metal edge, layer interface).
  double feature_size = 0.25e-9;
  int min_level = 0;
  int max_level = 3;
  /// Stop refining once every p_i above `significant` changes by less than
  /// this between successive levels.
  double convergence_tol = 0.02;
  double significant = 1e-9;
  /// Evaluate one fixed level only, skipping the convergence loop.
  std::optional<int> fixed_level;
};

struct MeshStats {
  std::size_t nodes = 0;
  std::size_t elements = 0;
  int refinement_level = 0;
  /// Largest relative change of a significant p_i between the last two
  /// levels; absent when a single level was solved.
  std::optional<double> last_relative_change;
  /// Regions left out of the convergence test. The perturbative path lists
  /// the layers whose surface integrals touch a conductor bottom edge, where
  /// the field is close to 1/sqrt(r) and the integral grows with every level.
  std::vector<Region> unconverged;
};

enum class ThinLayerMethod { kDirect, kPerturbative };

struct ParticipationResult {
  ParticipationMap p{};
  std::optional<double> q_tls;  // absent when lossless
  MeshStats mesh_stats;
  double energy_total = 0.0;  // J/m at 1 V on the centre conductor
  ThinLayerMethod method = ThinLayerMethod::kDirect;

  double operator[](Region r) const { return p[static_cast<std::size_t>(r)]; }
};

/// Potential solution on one mesh, kept for surface integrals and checks.
class FieldSolution {
 public:
  struct Cell {
    Region region;
    bool metal;
  };

  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  const std::vector<double>& potential() const { return phi_; }
  const CpwGeometry& geometry() const { return geom_; }
  bool layers_meshed() const { return layers_; }
  std::size_t num_nodes() const { return x_.size() * y_.size(); }
  std::size_t num_elements() const { return elements_; }
  double relative_residual() const { return residual_; }

  /// int eps_r |grad phi|^2 dA per region, in V^2 (multiply by eps0/2 for J/m).
  const ParticipationMap& region_energy() const { return energy_; }
  double energy_sum() const;

  /// Same integral restricted to cells whose centres fall in the box.
  double energy_in_box(double x0, double x1, double y0, double y1) const;

  /// Electric field (-grad phi) of the triangle that owns the point, V/m.
  std::array<double, 2> field_at(double px, double py) const;

  friend FieldSolution solve_field(const CpwGeometry&, const MaterialTable&, int, bool,
                                   const MeshOptions&);

 private:
  CpwGeometry geom_;
  MaterialTable mats_;
  bool layers_ = true;
  std::vector<double> x_, y_;
  std::vector<Cell> cells_;  // (nx-1)*(ny-1), row-major in y
  std::vector<double> phi_;  // nx*ny, row-major in y
  ParticipationMap energy_{};
  std::size_t elements_ = 0;
  double residual_ = 0.0;

  std::array<double, 2> cell_triangle_field(std::size_t i, std::size_t j, double px,
                                            double py) const;
};

/// One finite-element solve at a given refinement level. With
/// `mesh_layers` false the thin dielectric layers are left out of the mesh.
FieldSolution solve_field(const CpwGeometry& geom, const MaterialTable& mats, int level,
                          bool mesh_layers, const MeshOptions& options = {});

/// Energy fraction of a thin layer from the fields of a layer-free
/// solution: t int [eps_l |E_par|^2 + |D_perp|^2/eps_l] dl / int eps |E|^2 dA,
/// with D in units of eps0. Exactly linear in t.
double thin_layer_participation(const FieldSolution& solution, Region layer, double t,
                                const MaterialTable& mats);

/// Direct meshing (authoritative) or the perturbative surface path.
/// Refines until the participations converge; throws SolverError when they
/// do not by max_level.
ParticipationResult solve_cross_section(const CpwGeometry& geom, const MaterialTable& mats,
                                        ThinLayerMethod method = ThinLayerMethod::kDirect,
                                        const MeshOptions& options = {});

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Least-squares c0 + c1 x + c2 x^2.
std::array<double, 3> fit_quadratic(std::span<const double> x, std::span<const double> y);

struct SmSweep {
  std::vector<double> t_values;  // m
  std::vector<ParticipationResult> results;
  LinearFit sm_fit;                       // p_SM vs t over the fit window
  std::array<double, 3> corner_fit{};     // quadratic p_corner vs t
  double fit_window_lo = 0.4e-9;
  double fit_window_hi = 2e-9;
  /// t where p_SM tan_SM equals p_X tan_X along the fitted line, using the
  /// sweep mean of p_X; absent when the line never reaches it.
  std::optional<double> crossover_ma;
  std::optional<double> crossover_sa;
  /// max/min - 1 across the sweep.
  double ma_variation = 0.0;
  double sa_variation = 0.0;
};

/// Solves at every t_sm (0.1-2 nm). `jobs` > 1 runs solves concurrently;
/// results do not depend on it.
SmSweep sweep_sm_thickness(const CpwGeometry& geom, const MaterialTable& mats,
                           std::span<const double> t_values,
                           ThinLayerMethod method = ThinLayerMethod::kDirect,
                           const MeshOptions& options = {}, unsigned jobs = 1);

struct MetalSweep {
  std::vector<double> t_values;  // m
  std::vector<ParticipationResult> results;
  /// max/min - 1 across the sweep per region, and for Q_TLS.
  ParticipationMap variation{};
  double q_tls_variation = 0.0;
};

MetalSweep sweep_metal_thickness(const CpwGeometry& geom, const MaterialTable& mats,
                                 std::span<const double> t_metal_values,
                                 ThinLayerMethod method = ThinLayerMethod::kDirect,
                                 const MeshOptions& options = {}, unsigned jobs = 1);

}  // namespace cpwloss
