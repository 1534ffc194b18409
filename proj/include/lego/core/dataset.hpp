#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lego/core/chain.hpp"
#include "lego/core/group.hpp"

namespace lego::core {

/// One JSONL line: {"n", "sentence", "chain_vars", "labels", "seed_index"}.
struct DatasetRecord {
  int n = 0;
  std::string sentence;
  std::vector<std::string> chain_vars;
  std::vector<std::string> labels;
  std::uint64_t seed_index = 0;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct DatasetSpec {
  int n = 12;
  std::optional<std::size_t> count_train;  // default 10^4 * n
  std::optional<std::size_t> count_test;   // default 10^3 * n
  GroupKind group = GroupKind::Z2;
  std::uint64_t seed = 0;

  std::size_t train_size() const;
  std::size_t test_size() const;
};

struct DatasetSplits {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> test;
};

DatasetRecord make_record(const Chain& chain, std::uint64_t seed_index);

/// Deterministic in-memory generation. Test sentences that also occur in the
/// training split are redrawn, so the splits never overlap.
DatasetSplits generate_splits(const DatasetSpec& spec);

/// Number of test sentences that also appear in the training split.
std::size_t count_overlap(const DatasetSplits& splits);

std::string to_jsonl_line(const DatasetRecord& record);
DatasetRecord parse_jsonl_line(const std::string& line);

void write_jsonl(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path);

struct DatasetFiles {
  std::filesystem::path train;
  std::filesystem::path test;
  std::size_t train_records = 0;
  std::size_t test_records = 0;
};

/// Generates both splits and writes `train.jsonl` / `test.jsonl` in `dir`.
DatasetFiles generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

/// Parses a record's sentence and checks it against the stored chain order
/// and labels.
Chain record_to_chain(const DatasetRecord& record, const GroupSpec& group);

}  // namespace lego::core
