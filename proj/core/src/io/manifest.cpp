#include "cpwloss/io/manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>

#include "cpwloss/error.hpp"
#include "cpwloss/io/files.hpp"

namespace cpwloss::io {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.string(), sha256_file(path)});
}

void RunManifest::add_artifact(const std::filesystem::path& path) {
  artifacts.push_back({path.string(), sha256_file(path)});
}

void RunManifest::add_artifacts(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) add_artifact(p);
}

nlohmann::json to_json_value(const RunManifest& m) {
  const auto digests = [](const std::vector<FileDigest>& files) {
    auto out = nlohmann::json::array();
    for (const auto& f : files) out.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return out;
  };
  auto stages = nlohmann::json::array();
  for (const auto& s : m.stages) stages.push_back({{"name", s.name}, {"seconds", s.seconds}});
  return nlohmann::json{{"tool", m.tool},
                        {"version", m.version},
                        {"command", m.command},
                        {"seed", m.seed},
                        {"config_hash", m.config_hash},
                        {"config", m.config},
                        {"inputs", digests(m.inputs)},
                        {"stages", stages},
                        {"artifacts", digests(m.artifacts)},
                        {"exit_code", m.exit_code}};
}

std::filesystem::path write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  const auto path = dir / "manifest.json";
  write_file_atomic(path, to_json_value(m).dump(2) + "\n");
  return path;
}

StageTimer::StageTimer(RunManifest& manifest, std::string name)
    : manifest_(manifest), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}

StageTimer::~StageTimer() {
  const auto elapsed = std::chrono::steady_clock::now() - start_;
  manifest_.stages.push_back({name_, std::chrono::duration<double>(elapsed).count()});
}

}  // namespace cpwloss::io
