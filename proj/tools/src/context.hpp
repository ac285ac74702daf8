#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpwloss/io/config.hpp"
#include "cpwloss/io/manifest.hpp"
#include "cpwloss/io/svg.hpp"

namespace cpwloss::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitItemErrors = 1;
inline constexpr int kExitUsage = 2;

/// Everything a subcommand needs: resolved config, output directory,
/// provenance, and the two streams.
struct Context {
  io::ProjectConfig config;
  nlohmann::json config_json;
  fs::path out;
  io::RunManifest manifest;
  std::ostream& stdout_;
  std::ostream& stderr_;
  bool quiet = false;

  void info(const std::string& message) const {
    if (!quiet) stderr_ << message << '\n';
  }
  void error(const std::string& message) const { stderr_ << "error: " << message << '\n'; }

  /// Writes a text artifact under the output directory and records it.
  fs::path emit(const fs::path& relative, const std::string& content);
  fs::path emit_json(const fs::path& relative, const nlohmann::json& j);
  void emit_plot(const fs::path& relative_stem, const io::Plot& plot);
};

/// Runs fn(0..count-1) on up to `jobs` threads. Exceptions escape after
/// all workers stop; the first one wins.
inline void parallel_for(std::size_t count, unsigned jobs,
                         const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  const auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(m);
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
}

/// Expands directories into their trace files (lexicographic), keeping
/// explicit files in the order given.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs,
                                    const std::vector<std::string>& extensions);

std::string nm_label(double metres);

struct FitResonatorArgs {
  std::vector<std::string> inputs;
  bool plots = true;
};
int cmd_fit_resonator(Context& ctx, const FitResonatorArgs& args);

struct FitTlsArgs {
  std::string manifest;
};
int cmd_fit_tls(Context& ctx, const FitTlsArgs& args);

struct QubitReportArgs {
  std::string dataset;  // empty: config or bundled
  std::vector<long> thickness_nm;
  std::vector<std::string> decay;
};
int cmd_qubit_report(Context& ctx, const QubitReportArgs& args);

struct SimulateArgs {
  std::string sweep = "none";  // none, sm, metal
  std::string method = "direct";
  std::vector<double> values_nm;
  double from_nm = 0.0;
  double to_nm = 0.0;
  std::size_t points = 5;
};
int cmd_simulate(Context& ctx, const SimulateArgs& args);

struct SynthesizeArgs {
  std::string kind = "all";  // notch, tls, decay, all
  std::size_t count = 10;
  std::string format = "csv";  // notch traces: csv or s2p
  double noise = -1.0;         // negative: per-kind default
};
int cmd_synthesize(Context& ctx, const SynthesizeArgs& args);

}  // namespace cpwloss::cli
