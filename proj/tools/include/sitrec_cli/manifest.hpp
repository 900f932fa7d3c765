#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sitrec::cli {

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct Artifact {
  std::string path;  // outputs: relative to the manifest's directory
  std::string sha256;
  // False for files that record wall-clock time; reruns reproduce the rest.
  bool reproducible = true;

  bool operator==(const Artifact&) const = default;
};

// One per command invocation, written next to the command's outputs.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t seed = 0;
  std::vector<Artifact> inputs;
  std::vector<Artifact> outputs;
  double wall_seconds = 0.0;

  void add_input(const std::filesystem::path& path);
  // `path` must live under `out_dir`; it is stored relative to it.
  void add_output(const std::filesystem::path& out_dir, const std::filesystem::path& path,
                  bool reproducible = true);

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

inline constexpr const char* kManifestName = "manifest.json";

struct VerifyResult {
  std::vector<std::string> mismatched;  // changed checksums
  std::vector<std::string> missing;     // files that no longer exist
  bool ok() const { return mismatched.empty() && missing.empty(); }
};

// Recomputes every checksum recorded in the manifest at `path`.
VerifyResult verify_manifest(const std::filesystem::path& path);

}  // namespace sitrec::cli
