#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>

#include "context.hpp"
#include "cpwloss/error.hpp"
#include "cpwloss/io/files.hpp"

#ifndef CPWLOSS_VERSION_STRING
#define CPWLOSS_VERSION_STRING "dev"
#endif

namespace cpwloss::cli {

fs::path Context::emit(const fs::path& relative, const std::string& content) {
  const auto path = out / relative;
  io::write_file_atomic(path, content);
  manifest.add_artifact(path);
  return path;
}

fs::path Context::emit_json(const fs::path& relative, const nlohmann::json& j) {
  return emit(relative, j.dump(2) + "\n");
}

void Context::emit_plot(const fs::path& relative_stem, const io::Plot& plot) {
  manifest.add_artifacts(io::emit_plot(out / relative_stem, plot));
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs,
                                    const std::vector<std::string>& extensions) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      const auto files = io::list_files(in, extensions);
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

std::string nm_label(double metres) {
  std::ostringstream s;
  s << std::setprecision(4) << metres * 1e9;
  return s.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Loss analysis for superconducting CPW resonators and transmon qubits", "cpwloss"};
  app.set_version_flag("--version", CPWLOSS_VERSION_STRING);
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<unsigned> jobs;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config file")->envname("CPWLOSS_CONFIG");
  app.add_option("--seed", seed, "Seed for every random draw (default 0)");
  app.add_option("--out", out_dir, "Output directory (default ./out)");
  app.add_option("--jobs", jobs, "Worker threads for independent items")
      ->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "Only report errors");

  FitResonatorArgs fr;
  auto* fit_resonator = app.add_subcommand("fit-resonator", "Fit notch-type S21 traces");
  fit_resonator->add_option("inputs", fr.inputs, "Trace files (.csv, .s2p) or directories")
      ->required();
  bool no_plots = false;
  fit_resonator->add_flag("--no-plots", no_plots, "Skip the per-trace SVG plots");

  FitTlsArgs ft;
  auto* fit_tls = app.add_subcommand("fit-tls", "Fit the TLS model to power sweeps");
  fit_tls->add_option("manifest", ft.manifest, "Sweep manifest CSV")->required();

  QubitReportArgs qr;
  auto* qubit_report = app.add_subcommand("qubit-report", "Screen qubits and aggregate Q");
  qubit_report->add_option("dataset", qr.dataset, "Qubit table CSV (default: bundled)");
  qubit_report->add_option("--thickness", qr.thickness_nm, "Keep only these film thicknesses, nm")
      ->delimiter(',');
  qubit_report->add_option("--decay", qr.decay, "Decay traces to fit for T1");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Participation ratios of the CPW cross section");
  simulate->add_option("--sweep", sim.sweep, "none, sm or metal")
      ->check(CLI::IsMember({"none", "sm", "metal"}));
  simulate->add_option("--method", sim.method, "direct or perturbative")
      ->check(CLI::IsMember({"direct", "perturbative"}));
  simulate->add_option("--values", sim.values_nm, "Sweep thicknesses, nm")->delimiter(',');
  simulate->add_option("--from", sim.from_nm, "First sweep thickness, nm");
  simulate->add_option("--to", sim.to_nm, "Last sweep thickness, nm");
  simulate->add_option("--points", sim.points, "Number of sweep points")->check(CLI::Range(2, 200));

  SynthesizeArgs syn;
  auto* synthesize = app.add_subcommand("synthesize", "Write seeded synthetic fixtures");
  synthesize->add_option("--kind", syn.kind, "notch, tls, decay or all")
      ->check(CLI::IsMember({"notch", "tls", "decay", "all"}));
  synthesize->add_option("--count", syn.count, "Items per kind")->check(CLI::Range(1, 100000));
  synthesize->add_option("--format", syn.format, "Notch trace format: csv or s2p")
      ->check(CLI::IsMember({"csv", "s2p"}));
  synthesize->add_option("--noise", syn.noise, "Noise level override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }
  fr.plots = !no_plots;

  Context ctx{.config = {}, .config_json = {}, .out = {}, .manifest = {}, .stdout_ = out,
              .stderr_ = err, .quiet = quiet};
  try {
    auto j = io::resolve_config_json(config_path, io::prefixed_environment());
    if (seed) j["seed"] = *seed;
    if (out_dir) j["out"] = *out_dir;
    if (jobs) j["jobs"] = *jobs;
    ctx.config = io::config_from_json(j);
    ctx.config_json = j;
  } catch (const Error& e) {
    ctx.error(e.what());
    return kExitUsage;
  }
  ctx.out = ctx.config.out;
  ctx.manifest.version = CPWLOSS_VERSION_STRING;
  ctx.manifest.seed = ctx.config.seed;
  ctx.manifest.config = ctx.config_json;
  ctx.manifest.config_hash = io::config_hash(ctx.config_json);
  if (config_path) ctx.manifest.add_input(*config_path);

  int status = kExitOk;
  try {
    if (*fit_resonator) {
      ctx.manifest.command = "fit-resonator";
      status = cmd_fit_resonator(ctx, fr);
    } else if (*fit_tls) {
      ctx.manifest.command = "fit-tls";
      status = cmd_fit_tls(ctx, ft);
    } else if (*qubit_report) {
      ctx.manifest.command = "qubit-report";
      status = cmd_qubit_report(ctx, qr);
    } else if (*simulate) {
      ctx.manifest.command = "simulate";
      status = cmd_simulate(ctx, sim);
    } else if (*synthesize) {
      ctx.manifest.command = "synthesize";
      status = cmd_synthesize(ctx, syn);
    }
  } catch (const ValidationError& e) {
    ctx.error(e.what());
    status = kExitUsage;
  } catch (const std::exception& e) {
    ctx.error(e.what());
    status = kExitItemErrors;
  }
  ctx.manifest.exit_code = status;
  try {
    io::write_manifest(ctx.out, ctx.manifest);
  } catch (const std::exception& e) {
    ctx.error(std::string("manifest: ") + e.what());
    if (status == kExitOk) status = kExitItemErrors;
  }
  return status;
}

}  // namespace cpwloss::cli
