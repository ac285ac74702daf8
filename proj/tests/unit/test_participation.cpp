#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cpwloss/error.hpp"
#include "cpwloss/participation.hpp"

namespace cpwloss {
namespace {

const ParticipationResult& baseline() {
  static const ParticipationResult r = solve_cross_section(CpwGeometry{}, MaterialTable{});
  return r;
}

double sum(const ParticipationMap& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

MeshOptions at_level(int level) {
  MeshOptions o;
  o.fixed_level = level;
  return o;
}

TEST(QTlsFromParticipation, Examples) {
  MaterialTable mats;
  ParticipationMap p{};
  p[static_cast<std::size_t>(Region::kMA)] = 1.0;
  EXPECT_DOUBLE_EQ(*q_tls_from_participation(p, mats), 1000.0);
  for (auto& m : mats.entries) m.tan_delta = 0.0;
  EXPECT_FALSE(q_tls_from_participation(p, mats).has_value());
}

TEST(Regions, NamesRoundTrip) {
  for (auto r : kAllRegions) EXPECT_EQ(region_from_name(region_name(r)), r);
  EXPECT_THROW(region_from_name("bulk"), ValidationError);
}

TEST(Geometry, Invariants) {
  EXPECT_NO_THROW(check_invariants(CpwGeometry{}));
  CpwGeometry g;
  g.t_ma = 0.5e-6;  // w/40
  EXPECT_THROW(check_invariants(g), ValidationError);
  g = CpwGeometry{};
  g.domain_width = 100e-6;
  EXPECT_THROW(check_invariants(g), ValidationError);
  g = CpwGeometry{};
  g.gap = 0.0;
  EXPECT_THROW(check_invariants(g), ValidationError);
  MaterialTable m;
  m[Region::kSA].eps_r = 0.5;
  EXPECT_THROW(check_invariants(m), ValidationError);
}

TEST(SolveCrossSection, BaselineInvariants) {
  const auto& r = baseline();
  EXPECT_NEAR(sum(r.p), 1.0, 1e-6);
  for (double v : r.p) EXPECT_GE(v, 0.0);
  ASSERT_TRUE(r.q_tls.has_value());
  EXPECT_EQ(*r.q_tls, *q_tls_from_participation(r.p, MaterialTable{}));
  ASSERT_TRUE(r.mesh_stats.last_relative_change.has_value());
  EXPECT_LT(*r.mesh_stats.last_relative_change, 0.02);
  EXPECT_TRUE(r.mesh_stats.unconverged.empty());
  EXPECT_GT(r.energy_total, 0.0);
}

TEST(SolveCrossSection, BulkSplit) {
  const auto& r = baseline();
  EXPECT_GE(r[Region::kSubstrate], 0.90);
  EXPECT_LE(r[Region::kSubstrate], 0.93);
  EXPECT_GE(r[Region::kAir], 0.07);
  EXPECT_LE(r[Region::kAir], 0.10);
}

TEST(SolveCrossSection, InterfacesOrdered) {
  // Every lossy interface holds a small share, the SM sheet more than MA.
  const auto& r = baseline();
  for (auto reg : {Region::kSM, Region::kMA, Region::kSA, Region::kCorner}) {
    EXPECT_GT(r[reg], 1e-6);
    EXPECT_LT(r[reg], 1e-3);
  }
  EXPECT_GT(r[Region::kSM], r[Region::kMA]);
}

TEST(SolveField, HomogeneousVacuumSplitsEvenly) {
  // Thin conductors in a uniform medium with equal half-spaces: the field is
  // almost mirror symmetric about the metal plane.
  CpwGeometry g;
  g.t_metal = 10e-9;
  g.air_height = g.t_substrate;
  MaterialTable m;
  for (auto& e : m.entries) e.eps_r = 1.0;
  const auto s = solve_field(g, m, 1, false);
  const auto& e = s.region_energy();
  EXPECT_NEAR(std::accumulate(e.begin(), e.end(), 0.0) / s.energy_sum(), 1.0, 1e-12);
  const double p_sub = e[static_cast<std::size_t>(Region::kSubstrate)] / s.energy_sum();
  EXPECT_NEAR(p_sub, 0.5, 0.01);
  EXPECT_LE(s.relative_residual(), 1e-10);
}

TEST(SolveField, ParallelPlateLimit) {
  // Directly under the wide centre conductor the field is uniform:
  // E = V / t_substrate for a grounded substrate bottom.
  CpwGeometry g;
  g.w = 1e-3;
  g.gap = 10e-6;
  g.domain_width = 12e-3;
  g.corner_extent = 100e-9;
  const auto s = solve_field(g, MaterialTable{}, 0, false);
  const auto e = s.field_at(0.0, -0.5 * g.t_substrate);
  EXPECT_NEAR(e[1], -1.0 / g.t_substrate, 1e-3 / g.t_substrate);
  EXPECT_NEAR(e[0], 0.0, 0.02 / g.t_substrate);  // coarse level-0 cells
}

TEST(SolveField, MirrorSymmetric) {
  const CpwGeometry g;
  const auto s = solve_field(g, MaterialTable{}, 1, true);
  const double a = 0.5 * g.w;
  const double b = a + g.gap;
  const double right = s.energy_in_box(a, b, -g.t_substrate, g.air_height);
  const double left = s.energy_in_box(-b, -a, -g.t_substrate, g.air_height);
  EXPECT_NEAR(left / right, 1.0, 0.005);
}

TEST(SolveCrossSection, ScaleFree) {
  const double k = 3.0;
  CpwGeometry g;
  CpwGeometry big;
  for (auto [src, dst] : {std::pair{&g.w, &big.w}, {&g.gap, &big.gap}, {&g.t_metal, &big.t_metal},
                          {&g.t_substrate, &big.t_substrate}, {&g.air_height, &big.air_height},
                          {&g.t_sm, &big.t_sm}, {&g.t_ma, &big.t_ma}, {&g.t_sa, &big.t_sa},
                          {&g.corner_extent, &big.corner_extent},
                          {&g.domain_width, &big.domain_width}}) {
    *dst = k * *src;
  }
  auto o = at_level(0);
  const auto small = solve_cross_section(g, MaterialTable{}, ThinLayerMethod::kDirect, o);
  o.feature_size *= k;
  const auto scaled = solve_cross_section(big, MaterialTable{}, ThinLayerMethod::kDirect, o);
  for (auto r : kAllRegions) EXPECT_NEAR(scaled[r] / small[r], 1.0, 1e-6) << region_name(r);
  // Keeping the absolute feature size only changes the mesh.
  const auto remeshed = solve_cross_section(big, MaterialTable{});
  for (auto r : kAllRegions) {
    EXPECT_NEAR(remeshed[r] / baseline()[r], 1.0, 0.03) << region_name(r);
  }
}

TEST(SolveCrossSection, OuterBoundaryInsensitive) {
  CpwGeometry g;
  g.domain_width *= 2.0;
  const auto wide = solve_cross_section(g, MaterialTable{});
  for (auto r : kAllRegions) {
    EXPECT_NEAR(wide[r] / baseline()[r], 1.0, 0.01) << region_name(r);
  }
}

TEST(SolveCrossSection, SmPermittivityMonotone) {
  double previous = 0.0;
  for (double eps : {2.0, 4.0, 6.0, 8.0, 10.0}) {
    MaterialTable m;
    m[Region::kSM].eps_r = eps;
    m[Region::kCorner].eps_r = eps;
    const auto r = solve_cross_section(CpwGeometry{}, m, ThinLayerMethod::kDirect, at_level(0));
    const double below = r[Region::kSubstrate] + r[Region::kSM] + r[Region::kCorner];
    EXPECT_GE(below, previous) << eps;
    previous = below;
  }
}

TEST(SolveCrossSection, NonConvergenceIsReported) {
  MeshOptions o;
  o.max_level = 0;
  EXPECT_THROW(solve_cross_section(CpwGeometry{}, MaterialTable{}, ThinLayerMethod::kDirect, o),
               SolverError);
  o.max_level = 1;
  o.convergence_tol = 1e-9;
  EXPECT_THROW(solve_cross_section(CpwGeometry{}, MaterialTable{}, ThinLayerMethod::kDirect, o),
               SolverError);
}

TEST(ThinLayer, LinearInThickness) {
  const MaterialTable m;
  const auto s = solve_field(CpwGeometry{}, m, 0, false);
  for (auto r : {Region::kSM, Region::kMA, Region::kSA, Region::kCorner}) {
    EXPECT_EQ(thin_layer_participation(s, r, 0.0, m), 0.0);
    const double p1 = thin_layer_participation(s, r, 0.5e-9, m);
    const double p2 = thin_layer_participation(s, r, 1e-9, m);
    EXPECT_GT(p1, 0.0);
    EXPECT_NEAR(p2, 2.0 * p1, 1e-14 * p1) << region_name(r);
  }
}

TEST(ThinLayer, Preconditions) {
  const MaterialTable m;
  const auto meshed = solve_field(CpwGeometry{}, m, 0, true);
  EXPECT_THROW(thin_layer_participation(meshed, Region::kSM, 1e-9, m), ValidationError);
  const auto bare = solve_field(CpwGeometry{}, m, 0, false);
  EXPECT_THROW(thin_layer_participation(bare, Region::kSM, 1e-6, m), ValidationError);
  EXPECT_THROW(thin_layer_participation(bare, Region::kAir, 1e-9, m), ValidationError);
  EXPECT_THROW(thin_layer_participation(bare, Region::kSM, -1e-9, m), ValidationError);
}

TEST(ThinLayer, AgreesWithDirectMeshing) {
  const auto pert = solve_cross_section(CpwGeometry{}, MaterialTable{},
                                        ThinLayerMethod::kPerturbative);
  EXPECT_NEAR(pert[Region::kSM] / baseline()[Region::kSM], 1.0, 0.15);
  EXPECT_NEAR(sum(pert.p), 1.0, 1e-6);
  EXPECT_EQ(pert.mesh_stats.unconverged.size(), 3u);
}

TEST(Fits, LineAndQuadratic) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{3.0, 5.0, 7.0, 9.0};
  const auto f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  const std::vector<double> t{1e-9, 2e-9, 3e-9, 5e-9};
  std::vector<double> q;
  for (double v : t) q.push_back(1.0 + 2e9 * v + 3e18 * v * v);
  const auto c = fit_quadratic(t, q);
  EXPECT_NEAR(c[0], 1.0, 1e-9);
  EXPECT_NEAR(c[1], 2e9, 1e-9 * 2e9);
  EXPECT_NEAR(c[2], 3e18, 1e-9 * 3e18);
  EXPECT_THROW(fit_line(std::vector<double>{1.0, 1.0}, std::vector<double>{0.0, 1.0}),
               ValidationError);
}

TEST(SmSweep, LinearAndQMonotone) {
  const std::vector<double> t{0.4e-9, 1e-9, 2e-9};
  const auto s = sweep_sm_thickness(CpwGeometry{}, MaterialTable{}, t);
  ASSERT_EQ(s.results.size(), 3u);
  EXPECT_GE(s.sm_fit.r_squared, 0.999);
  EXPECT_GT(s.sm_fit.slope, 0.0);
  EXPECT_GT(*s.results[0].q_tls, *s.results[1].q_tls);
  EXPECT_GT(*s.results[1].q_tls, *s.results[2].q_tls);
  EXPECT_THROW(sweep_sm_thickness(CpwGeometry{}, MaterialTable{}, std::vector<double>{5e-9}),
               ValidationError);
}

TEST(MetalSweep, DeterministicAcrossThreads) {
  const std::vector<double> t{100e-9, 300e-9, 100e-9};
  MeshOptions o = at_level(0);
  const auto serial = sweep_metal_thickness(CpwGeometry{}, MaterialTable{}, t,
                                            ThinLayerMethod::kDirect, o, 1);
  const auto threaded = sweep_metal_thickness(CpwGeometry{}, MaterialTable{}, t,
                                              ThinLayerMethod::kDirect, o, 3);
  EXPECT_EQ(serial.results[0].p, serial.results[2].p);
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_EQ(serial.results[k].p, threaded.results[k].p);
  EXPECT_THROW(sweep_metal_thickness(CpwGeometry{}, MaterialTable{}, std::vector<double>{10e-9}),
               ValidationError);
}

}  // namespace
}  // namespace cpwloss
