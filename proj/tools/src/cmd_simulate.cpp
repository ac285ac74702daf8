#include <sstream>

#include "context.hpp"
#include "cpwloss/error.hpp"
#include "cpwloss/io/csv.hpp"
#include "cpwloss/io/json.hpp"
#include "cpwloss/participation.hpp"
#include "cpwloss/tls_model.hpp"
#include "cpwloss/units.hpp"

namespace cpwloss::cli {

namespace {

std::vector<double> sweep_values(const SimulateArgs& args, double lo_nm, double hi_nm) {
  std::vector<double> nm = args.values_nm;
  if (nm.empty()) {
    const double lo = args.from_nm > 0.0 ? args.from_nm : lo_nm;
    const double hi = args.to_nm > 0.0 ? args.to_nm : hi_nm;
    if (!(hi > lo)) throw ValidationError("simulate: --to must exceed --from");
    for (std::size_t i = 0; i < args.points; ++i) {
      nm.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(args.points - 1));
    }
  }
  std::vector<double> m;
  for (double v : nm) m.push_back(units::nm(v));
  return m;
}

std::string csv_header(const char* first) {
  std::string h = first;
  for (auto r : kAllRegions) h += ",p_" + region_name(r);
  return h + ",q_tls,refinement_level,nodes,last_relative_change\n";
}

void csv_row(std::ostringstream& csv, double t, const ParticipationResult& r) {
  csv << io::format_double(t);
  for (auto reg : kAllRegions) csv << ',' << io::format_double(r[reg]);
  csv << ',' << (r.q_tls ? io::format_double(*r.q_tls) : "") << ',' << r.mesh_stats.refinement_level
      << ',' << r.mesh_stats.nodes << ','
      << (r.mesh_stats.last_relative_change ? io::format_double(*r.mesh_stats.last_relative_change)
                                            : "")
      << '\n';
}

io::Plot sm_plot(const SmSweep& s) {
  io::Plot plot;
  plot.title = "Interface participation against SM thickness";
  plot.x = {"t_sm (nm)", true};
  plot.y = {"participation", true};
  for (auto reg : {Region::kSM, Region::kMA, Region::kSA, Region::kCorner}) {
    io::PlotSeries pts{region_name(reg), {}, {}, io::SeriesStyle::kMarkers};
    for (std::size_t i = 0; i < s.t_values.size(); ++i) {
      pts.x.push_back(units::to_nm(s.t_values[i]));
      pts.y.push_back(s.results[i][reg]);
    }
    plot.series.push_back(std::move(pts));
  }
  io::PlotSeries line{"SM linear fit", {}, {}, io::SeriesStyle::kDashed};
  for (double t : log_spaced(s.t_values.front(), s.t_values.back(), 40)) {
    const double p = s.sm_fit.intercept + s.sm_fit.slope * t;
    if (p <= 0.0) continue;
    line.x.push_back(units::to_nm(t));
    line.y.push_back(p);
  }
  plot.series.push_back(std::move(line));
  return plot;
}

io::Plot metal_plot(const MetalSweep& s) {
  io::Plot plot;
  plot.title = "Participation against metal thickness";
  plot.x = {"t_metal (nm)", false};
  plot.y = {"participation", true};
  plot.y2 = io::PlotAxis{"Q_TLS", true};
  for (auto reg : {Region::kSM, Region::kMA, Region::kSA, Region::kCorner}) {
    io::PlotSeries pts{region_name(reg), {}, {}, io::SeriesStyle::kLine};
    for (std::size_t i = 0; i < s.t_values.size(); ++i) {
      pts.x.push_back(units::to_nm(s.t_values[i]));
      pts.y.push_back(s.results[i][reg]);
    }
    plot.series.push_back(std::move(pts));
  }
  io::PlotSeries q{"Q_TLS", {}, {}, io::SeriesStyle::kDashed, true};
  for (std::size_t i = 0; i < s.t_values.size(); ++i) {
    if (!s.results[i].q_tls) continue;
    q.x.push_back(units::to_nm(s.t_values[i]));
    q.y.push_back(*s.results[i].q_tls);
  }
  plot.series.push_back(std::move(q));
  return plot;
}

}  // namespace

int cmd_simulate(Context& ctx, const SimulateArgs& args) {
  const auto method =
      args.method == "perturbative" ? ThinLayerMethod::kPerturbative : ThinLayerMethod::kDirect;
  const auto& cfg = ctx.config;
  std::ostringstream csv;

  if (args.sweep == "none") {
    ParticipationResult r;
    {
      io::StageTimer timer(ctx.manifest, "solve");
      r = solve_cross_section(cfg.geometry, cfg.materials, method, cfg.mesh);
    }
    csv << csv_header("t_sm_m");
    csv_row(csv, cfg.geometry.t_sm, r);
    ctx.emit_json("participation.json", {{"geometry", cfg.geometry}, {"result", r}});
    ctx.emit("participation.csv", csv.str());
    ctx.info("simulate: substrate " + io::format_double(r[Region::kSubstrate]) + ", air " +
             io::format_double(r[Region::kAir]) + ", level " +
             std::to_string(r.mesh_stats.refinement_level));
    return kExitOk;
  }

  if (args.sweep == "sm") {
    SmSweep s;
    {
      io::StageTimer timer(ctx.manifest, "sweep");
      s = sweep_sm_thickness(cfg.geometry, cfg.materials, sweep_values(args, 0.4, 2.0), method,
                             cfg.mesh, cfg.jobs);
    }
    csv << csv_header("t_sm_m");
    for (std::size_t i = 0; i < s.t_values.size(); ++i) csv_row(csv, s.t_values[i], s.results[i]);
    ctx.emit_json("participation.json", {{"geometry", cfg.geometry}, {"sm_sweep", s}});
    ctx.emit("participation.csv", csv.str());
    ctx.emit_plot("fig5b_sm_sweep", sm_plot(s));
    ctx.info("simulate: SM slope " + io::format_double(s.sm_fit.slope) + " per m, R^2 " +
             io::format_double(s.sm_fit.r_squared));
    return kExitOk;
  }

  MetalSweep s;
  {
    io::StageTimer timer(ctx.manifest, "sweep");
    s = sweep_metal_thickness(cfg.geometry, cfg.materials, sweep_values(args, 50.0, 500.0), method,
                              cfg.mesh, cfg.jobs);
  }
  csv << csv_header("t_metal_m");
  for (std::size_t i = 0; i < s.t_values.size(); ++i) csv_row(csv, s.t_values[i], s.results[i]);
  ctx.emit_json("participation.json", {{"geometry", cfg.geometry}, {"metal_sweep", s}});
  ctx.emit("participation.csv", csv.str());
  ctx.emit_plot("fig5c_metal_sweep", metal_plot(s));
  ctx.info("simulate: Q_TLS varies " + io::format_double(s.q_tls_variation));
  return kExitOk;
}

}  // namespace cpwloss::cli
