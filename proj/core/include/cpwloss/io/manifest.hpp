#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cpwloss::io {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
  std::string path;
  std::string sha256;
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

/// Provenance of one command run.
struct RunManifest {
  std::string tool = "cpwloss";
  std::string version;
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json config;
  std::vector<FileDigest> inputs;
  std::vector<StageTiming> stages;
  std::vector<FileDigest> artifacts;
  int exit_code = 0;

  void add_input(const std::filesystem::path& path);
  void add_artifact(const std::filesystem::path& path);
  void add_artifacts(const std::vector<std::filesystem::path>& paths);
};

nlohmann::json to_json_value(const RunManifest& m);

/// Writes manifest.json into `dir` atomically and returns its path.
std::filesystem::path write_manifest(const std::filesystem::path& dir, const RunManifest& m);

/// Times a scope and appends it to the manifest's stage list.
class StageTimer {
 public:
  StageTimer(RunManifest& manifest, std::string name);
  ~StageTimer();
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  RunManifest& manifest_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace cpwloss::io
