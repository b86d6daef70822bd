#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cprec {

struct FileDigest {
  std::string path;
  std::string sha256;

  friend bool operator==(const FileDigest&, const FileDigest&) = default;
};

/// Record of one CLI invocation. Input paths are absolute; output paths are
/// relative to the run's output directory.
struct RunManifest {
  std::string tool_version;
  std::string command;
  std::vector<std::string> args;
  // Every option of the command with its effective value, flags included.
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  // Written alongside the outputs but excluded from digests (wall-clock timings).
  std::vector<std::string> volatile_outputs;
  std::string started_at;
  std::string finished_at;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// UTC, ISO-8601 with seconds.
std::string utc_timestamp();

}  // namespace cprec
