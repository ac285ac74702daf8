#include "cpwloss/io/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "cpwloss/error.hpp"
#include "cpwloss/io/json.hpp"
#include "cpwloss/io/manifest.hpp"

extern char** environ;

namespace cpwloss::io {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

const char* coupling_name(CouplingQ c) {
  return c == CouplingQ::kMagnitude ? "magnitude" : "diameter_corrected";
}

}  // namespace

nlohmann::json config_to_json(const ProjectConfig& c) {
  return nlohmann::json{{"seed", c.seed},
                        {"jobs", c.jobs},
                        {"out", c.out},
                        {"qubit_table", c.qubit_table},
                        {"calibration", c.calibration},
                        {"coupling_q", coupling_name(c.coupling)},
                        {"geometry", c.geometry},
                        {"materials", c.materials},
                        {"mesh", c.mesh}};
}

nlohmann::json default_config_json() { return config_to_json(ProjectConfig{}); }

ProjectConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  static const char* known[] = {"seed", "jobs", "out", "qubit_table", "calibration",
                                "coupling_q", "geometry", "materials", "mesh"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ValidationError("config: unknown key '" + key + "'");
    }
  }
  ProjectConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<unsigned>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("qubit_table")) c.qubit_table = j.at("qubit_table").get<std::string>();
    if (j.contains("coupling_q")) {
      const auto name = j.at("coupling_q").get<std::string>();
      if (name == "magnitude") c.coupling = CouplingQ::kMagnitude;
      else if (name == "diameter_corrected") c.coupling = CouplingQ::kDiameterCorrected;
      else throw ValidationError("config: coupling_q must be magnitude or diameter_corrected");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (j.contains("calibration")) from_json(j.at("calibration"), c.calibration);
  if (j.contains("geometry")) from_json(j.at("geometry"), c.geometry);
  if (j.contains("materials")) from_json(j.at("materials"), c.materials);
  if (j.contains("mesh")) from_json(j.at("mesh"), c.mesh);
  if (c.jobs == 0) throw ValidationError("config: jobs must be >= 1");
  check_invariants(c.calibration);
  check_invariants(c.geometry);
  check_invariants(c.materials);
  return c;
}

void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0 || name == prefix + "CONFIG") continue;
    const std::string path = name.substr(prefix.size());
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto sep = path.find("__", start);
      const auto token = lower(path.substr(start, sep == std::string::npos ? sep : sep - start));
      if (!node->is_object()) throw ValidationError(name + ": does not name a config key");
      nlohmann::json* next = nullptr;
      for (auto& [key, child] : node->items()) {
        if (lower(key) == token) next = &child;
      }
      if (next == nullptr) throw ValidationError(name + ": does not name a config key");
      node = next;
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    *node = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
}

std::map<std::string, std::string> prefixed_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    auto name = entry.substr(0, eq);
    if (name.rfind(kEnvPrefix, 0) == 0) out[name] = entry.substr(eq + 1);
  }
  return out;
}

nlohmann::json resolve_config_json(const std::optional<std::string>& path,
                                   const std::map<std::string, std::string>& env) {
  auto j = default_config_json();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ParseError("cannot open config '" + *path + "'");
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(*path + ": " + e.what());
    }
    if (!file.is_object()) throw ParseError(*path + ": config must be a JSON object");
    j.merge_patch(file);
  }
  apply_env_overrides(j, env);
  return j;
}

std::string config_hash(const nlohmann::json& j) { return sha256_hex(j.dump()); }

}  // namespace cpwloss::io
