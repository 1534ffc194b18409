#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lego/autodiff/adam.hpp"
#include "lego/harness/data.hpp"
#include "lego/model/config.hpp"
#include "lego/model/params.hpp"

namespace lego::harness {

struct ProbeOptions {
  int epochs = 20;
  int batch = 1000;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  std::vector<std::vector<double>> accuracy;  // [layer][chain position]
  std::string backbone_hash_before;
  std::string backbone_hash_after;
};

/// SHA-256 over every backbone tensor name, shape and value.
std::string backbone_hash(const model::EncoderParams<float>& params);

/// One linear classifier per executed layer, fitted on that layer's hidden
/// states at the clause anchors of the training split (every position), then
/// scored per position on the test split. The backbone is read only.
ProbeResult probe(const model::EncoderParams<float>& params, const model::ModelConfig& config,
                  const Dataset& data, const ProbeOptions& options);

/// Header `layer,position,accuracy`.
void write_probe_csv(const std::filesystem::path& path, const ProbeResult& result);

}  // namespace lego::harness
