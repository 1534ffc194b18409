#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lego::harness {

inline constexpr std::string_view kArtifactVersion = "1.0.0";

std::string sha256_hex(std::string_view bytes);
/// Git object id of a blob: SHA-1 over "blob <size>\0" + bytes.
std::string git_blob_sha1(std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

struct Manifest {
  std::string command;
  std::string config_hash;
  std::string config;  // canonical key=value text
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::pair<std::string, std::string>> datasets;  // name, git blob id
  std::vector<std::string> artifacts;
  double wall_clock_seconds = 0.0;
};

/// JSON document with the artifact version and every Manifest field.
std::string manifest_json(const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace lego::harness
