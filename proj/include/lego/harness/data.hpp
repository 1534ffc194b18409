#pragma once

#include <span>
#include <string>
#include <vector>

#include "lego/core/dataset.hpp"
#include "lego/core/vocab.hpp"
#include "lego/harness/config_file.hpp"

namespace lego::harness {

/// Token ids plus chain-ordered anchors and labels for a split.
struct EncodedSplit {
  int n = 0;
  int seq_len = 0;
  std::vector<int> ids;      // size() * seq_len
  std::vector<int> anchors;  // size() * n; token position of chain position p
  std::vector<int> labels;   // size() * n; set-element index

  std::size_t size() const { return n > 0 ? labels.size() / static_cast<std::size_t>(n) : 0; }
  std::span<const int> sequence(std::size_t i) const {
    return std::span<const int>(ids).subspan(i * static_cast<std::size_t>(seq_len),
                                             static_cast<std::size_t>(seq_len));
  }
};

EncodedSplit encode(const std::vector<core::DatasetRecord>& records, const core::Vocab& vocab);

struct Dataset {
  EncodedSplit train;
  EncodedSplit test;
  std::string train_hash;  // git blob id of the JSONL text
  std::string test_hash;
};

/// JSONL text exactly as write_jsonl stores it.
std::string jsonl_text(const std::vector<core::DatasetRecord>& records);

/// Reads train.jsonl/test.jsonl from config.data.dir when present, otherwise
/// generates the splits in memory. Throws when the records' n differs from
/// the configured n.
Dataset load_dataset(const RunConfig& config);

}  // namespace lego::harness
