#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace tracer::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

/// Provenance record written as manifest.json into every output directory.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  /// Resolved options in config-file syntax; feeding it back through
  /// --config reproduces the run.
  std::string config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> input_hashes;
  nlohmann::json details = nlohmann::json::object();
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// UTC timestamp, ISO 8601 with seconds.
std::string utc_now();

/// SHA-256 over the sorted (relative path, file digest) list of a
/// directory tree, or the digest of a single file.
std::string hash_path(const std::filesystem::path& path);

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);
RunManifest read_manifest(const std::filesystem::path& dir);

}  // namespace tracer::cli
