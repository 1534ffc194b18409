#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lego/autodiff/adam.hpp"
#include "lego/core/dataset.hpp"
#include "lego/core/vocab.hpp"
#include "lego/model/config.hpp"

namespace lego::harness {

enum class Init { Random, Mimicked };

std::string_view to_string(Init init);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 1000;
  int micro_batch = 250;  // sequences per forward/backward; gradients accumulate to batch_size
  ad::AdamConfig adam;    // lr 5e-5, betas (0.9, 0.999), eps 1e-8
  int t_max = 200;        // cosine horizon in epochs
  int n = 12;
  int n_tr = 0;                 // 0: n
  std::vector<int> supervised;  // explicit chain positions; overrides n_tr
  std::uint64_t seed = 0;
  Init init = Init::Random;
  std::string init_checkpoint;

  /// Sorted chain positions that contribute to the loss.
  std::vector<int> supervised_positions() const;
  void validate() const;
};

struct DataConfig {
  core::GroupKind group = core::GroupKind::Z2;
  std::uint64_t seed = 0;
  std::size_t train_count = 0;  // 0: 10^4 * n
  std::size_t test_count = 0;   // 0: 10^3 * n
  std::string dir;              // read train.jsonl/test.jsonl here when present

  core::DatasetSpec spec(int n) const;
};

struct MimicConfig {
  int steps = 2000;
  int batch = 32;
  double lr = 1e-4;
  std::string heads = "0,1";  // "m,a" for every layer, or "random"
  std::uint64_t seed = 0;
  int seq_len = 0;  // 0: 5n + 2
};

/// Every setting a CLI run reads. Keys are flat; see keys().
struct RunConfig {
  model::ModelConfig model;  // unresolved: derived widths are filled at bind time
  TrainConfig train;
  DataConfig data;
  MimicConfig mimic;
  int probe_epochs = 20;
  double shortcut_threshold = 0.9;

  /// Applies one key/value pair. Throws lego::Error on an unknown key or a
  /// malformed value.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// Sorted "key=value" lines over every key.
  std::string canonical() const;
  /// SHA-256 of canonical(), hex.
  std::string hash() const;

  /// Model config for the configured group's vocabulary: vocabulary size,
  /// class count and broadcast ids ([BOS]/[EOS] stand in for [CLS]/[SEP]),
  /// resolved and validated.
  model::ModelConfig bound_model() const;
  core::Vocab vocab() const;
  int seq_len() const { return core::sequence_length(train.n); }
};

/// "key = value" lines; '#' starts a comment; blank lines are skipped.
/// Throws on a line without '=' or a repeated key.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// "0-4,11" -> {0,1,2,3,4,11}. Sorted, duplicates rejected.
std::vector<int> parse_positions(std::string_view text);
std::string format_positions(const std::vector<int>& positions);

}  // namespace lego::harness
