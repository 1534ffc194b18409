#include "lego/harness/manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>

#include "lego/core/error.hpp"

namespace lego::harness {

namespace {

std::string digest_hex(const EVP_MD* md, std::initializer_list<std::string_view> parts) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1) {
    throw Error("digest initialization failed");
  }
  for (const auto part : parts) {
    if (EVP_DigestUpdate(ctx.get(), part.data(), part.size()) != 1) {
      throw Error("digest update failed");
    }
  }
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), out, &len) != 1) {
    throw Error("digest finalization failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[out[i] >> 4]);
    hex.push_back(kHex[out[i] & 0xf]);
  }
  return hex;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) { return digest_hex(EVP_sha256(), {bytes}); }

std::string git_blob_sha1(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size());
  return digest_hex(EVP_sha1(), {header, std::string_view("\0", 1), bytes});
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot read " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["artifact_version"] = kArtifactVersion;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["config"] = m.config;
  j["seeds"] = nlohmann::ordered_json::object();
  for (const auto& [name, seed] : m.seeds) {
    j["seeds"][name] = seed;
  }
  j["datasets"] = nlohmann::ordered_json::object();
  for (const auto& [name, hash] : m.datasets) {
    j["datasets"][name] = hash;
  }
  j["artifacts"] = m.artifacts;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  return j.dump(2) + "\n";
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << manifest_json(manifest);
}

}  // namespace lego::harness
