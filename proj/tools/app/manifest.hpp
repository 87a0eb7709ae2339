#pragma once

// Run manifests: resolved config, tool version, timestamps, final metrics and
// a SHA-256 inventory of every file the run produced.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace dirsurf::app {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kResolvedConfigName = "config.resolved.json";

std::string sha256_hex(const std::filesystem::path& file);

struct FileEntry {
  std::string path;  ///< relative to the run directory, '/' separated
  std::uintmax_t bytes = 0;
  std::string sha256;
};

/// Every regular file under `dir` except the manifest itself, sorted by path.
std::vector<FileEntry> inventory(const std::filesystem::path& dir);

/// UTC, ISO 8601 with seconds.
std::string utc_timestamp();

struct Manifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::string started;
  std::string finished;
  nlohmann::json final_metrics = nlohmann::json::object();
};

/// Inventories `dir` and writes `dir/manifest.json` through a temporary file and rename.
void write_manifest(const std::filesystem::path& dir, const Manifest& m);

/// Recomputes every checksum listed in `dir/manifest.json`; returns the mismatching paths.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

}  // namespace dirsurf::app
