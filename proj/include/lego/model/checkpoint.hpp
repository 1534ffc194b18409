#pragma once

#include <filesystem>
#include <string>

#include "lego/model/config.hpp"
#include "lego/model/params.hpp"

namespace lego::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string config_to_json(const ModelConfig& config);
/// Throws lego::Error on unknown or malformed fields.
ModelConfig config_from_json(const std::string& text);

template <typename S>
struct Checkpoint {
  ModelConfig config;
  EncoderParams<S> params;
};

/// Binary container: "LEGOCKPT", version, scalar width, config JSON, then
/// named tensors (name, rank, dims, raw little-endian values).
template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const EncoderParams<S>& params);

/// Values stored at a different precision are converted. Throws lego::Error
/// on a bad header, missing/extra tensors or shape mismatches.
template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path);

}  // namespace lego::model
