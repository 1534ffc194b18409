#include "lego/harness/data.hpp"

#include <filesystem>

#include "lego/core/error.hpp"
#include "lego/harness/manifest.hpp"

namespace lego::harness {

EncodedSplit encode(const std::vector<core::DatasetRecord>& records, const core::Vocab& vocab) {
  EncodedSplit out;
  if (records.empty()) {
    return out;
  }
  out.n = records.front().n;
  out.seq_len = core::sequence_length(out.n);
  out.ids.reserve(records.size() * static_cast<std::size_t>(out.seq_len));
  out.anchors.reserve(records.size() * static_cast<std::size_t>(out.n));
  out.labels.reserve(records.size() * static_cast<std::size_t>(out.n));
  for (const auto& r : records) {
    if (r.n != out.n) {
      throw Error("dataset mixes chain lengths " + std::to_string(out.n) + " and " +
                  std::to_string(r.n));
    }
    const auto seq = core::tokenize(core::record_to_chain(r, vocab.group()), vocab, r.n);
    out.ids.insert(out.ids.end(), seq.ids.begin(), seq.ids.end());
    out.anchors.insert(out.anchors.end(), seq.clause_anchors.begin(), seq.clause_anchors.end());
    out.labels.insert(out.labels.end(), seq.labels.begin(), seq.labels.end());
  }
  return out;
}

std::string jsonl_text(const std::vector<core::DatasetRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += core::to_jsonl_line(r);
    out += '\n';
  }
  return out;
}

Dataset load_dataset(const RunConfig& config) {
  const auto vocab = config.vocab();
  std::vector<core::DatasetRecord> train;
  std::vector<core::DatasetRecord> test;
  Dataset data;
  const std::filesystem::path dir = config.data.dir;
  if (!config.data.dir.empty() && std::filesystem::exists(dir / "train.jsonl")) {
    train = core::read_jsonl(dir / "train.jsonl");
    test = core::read_jsonl(dir / "test.jsonl");
    data.train_hash = git_blob_sha1(read_file(dir / "train.jsonl"));
    data.test_hash = git_blob_sha1(read_file(dir / "test.jsonl"));
  } else {
    auto splits = core::generate_splits(config.data.spec(config.train.n));
    train = std::move(splits.train);
    test = std::move(splits.test);
    data.train_hash = git_blob_sha1(jsonl_text(train));
    data.test_hash = git_blob_sha1(jsonl_text(test));
  }
  for (const auto* split : {&train, &test}) {
    if (split->empty()) {
      throw Error("dataset split is empty");
    }
    if (split->front().n != config.train.n) {
      throw Error("dataset/config n mismatch: records have n=" + std::to_string(split->front().n) +
                  ", config n=" + std::to_string(config.train.n));
    }
  }
  data.train = encode(train, vocab);
  data.test = encode(test, vocab);
  return data;
}

}  // namespace lego::harness
