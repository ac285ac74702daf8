#pragma once

// Project configuration for batch runs.
//
// Sources, lowest to highest precedence: shipped defaults (reference
// materials and geometry), a JSON config file, CPWLOSS_* environment
// variables, command-line flags. An environment variable addresses a config
// key by its path with "__" between levels:
//
//   CPWLOSS_SEED=7                       -> seed
//   CPWLOSS_GEOMETRY__T_SM=1e-9          -> geometry.t_sm
//   CPWLOSS_MATERIALS__MA__TAN_DELTA=2e-3 -> materials.MA.tan_delta
//
// Values are parsed as JSON where possible and as plain strings otherwise.
// CPWLOSS_CONFIG names the config file itself.

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cpwloss/participation.hpp"
#include "cpwloss/tls_model.hpp"

namespace cpwloss::io {

inline constexpr const char* kEnvPrefix = "CPWLOSS_";

struct ProjectConfig {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string out = "out";
  std::string qubit_table;  // empty: the bundled dataset
  CalibrationContext calibration;
  CouplingQ coupling = CouplingQ::kMagnitude;
  CpwGeometry geometry;
  MaterialTable materials;
  MeshOptions mesh;
};

nlohmann::json default_config_json();

/// Builds and validates a config; unknown keys throw ValidationError.
ProjectConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ProjectConfig& c);

/// Applies CPWLOSS_* overrides from `env` (name to value) onto `j`.
/// CPWLOSS_CONFIG is skipped. Unknown paths throw ValidationError.
void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& env);

/// The CPWLOSS_* subset of the process environment.
std::map<std::string, std::string> prefixed_environment();

/// defaults, then the file (if any), then the environment.
nlohmann::json resolve_config_json(const std::optional<std::string>& path,
                                   const std::map<std::string, std::string>& env);

/// SHA-256 of the canonical dump; object keys are sorted, so the hash does
/// not depend on the order fields were written in.
std::string config_hash(const nlohmann::json& j);

}  // namespace cpwloss::io
