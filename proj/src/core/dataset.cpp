#include "lego/core/dataset.hpp"

#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lego/core/error.hpp"
#include "lego/core/sentence.hpp"

namespace lego::core {

namespace {
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
}  // namespace

std::size_t DatasetSpec::train_size() const {
  return count_train.value_or(static_cast<std::size_t>(10000 * n));
}

std::size_t DatasetSpec::test_size() const {
  return count_test.value_or(static_cast<std::size_t>(1000 * n));
}

DatasetRecord make_record(const Chain& chain, std::uint64_t seed_index) {
  const GroupSpec group = GroupSpec::make(chain.group);
  DatasetRecord r;
  r.n = chain.size();
  r.sentence = render_sentence(chain);
  for (std::size_t i = 0; i < chain.clauses.size(); ++i) {
    r.chain_vars.emplace_back(1, chain.clauses[i].lhs);
    r.labels.push_back(group.values()[static_cast<std::size_t>(chain.assignments[i])]);
  }
  r.seed_index = seed_index;
  return r;
}

DatasetSplits generate_splits(const DatasetSpec& spec) {
  if (spec.train_size() == 0 || spec.test_size() == 0) {
    throw Error("dataset counts must be positive");
  }
  const GroupSpec group = GroupSpec::make(spec.group);
  const double capacity = sentence_capacity(spec.n, group);
  const double requested = static_cast<double>(spec.train_size() + spec.test_size());
  if (spec.n <= 0 || spec.n > kAlphabetSize || requested > capacity) {
    throw Error("requested " + std::to_string(spec.train_size() + spec.test_size()) +
                " sentences but only " + std::to_string(capacity) +
                " distinct sentences exist for n=" + std::to_string(spec.n));
  }

  DatasetSplits splits;
  splits.train.reserve(spec.train_size());
  std::unordered_set<std::string> seen;
  for (std::uint64_t i = 0; i < spec.train_size(); ++i) {
    Rng rng = make_rng(spec.seed, kTrainStream, i);
    splits.train.push_back(make_record(sample_chain(spec.n, group, rng), i));
    seen.insert(splits.train.back().sentence);
  }
  // A test draw is accepted with probability >= 1 - |train|/capacity, so the
  // rejection loop terminates.
  splits.test.reserve(spec.test_size());
  for (std::uint64_t j = 0; splits.test.size() < spec.test_size(); ++j) {
    Rng rng = make_rng(spec.seed, kTestStream, j);
    DatasetRecord record = make_record(sample_chain(spec.n, group, rng), j);
    if (!seen.contains(record.sentence)) {
      splits.test.push_back(std::move(record));
    }
  }
  return splits;
}

std::size_t count_overlap(const DatasetSplits& splits) {
  std::unordered_set<std::string> train;
  for (const auto& r : splits.train) {
    train.insert(r.sentence);
  }
  std::size_t shared = 0;
  for (const auto& r : splits.test) {
    shared += train.contains(r.sentence) ? 1 : 0;
  }
  return shared;
}

std::string to_jsonl_line(const DatasetRecord& record) {
  nlohmann::ordered_json j;
  j["n"] = record.n;
  j["sentence"] = record.sentence;
  j["chain_vars"] = record.chain_vars;
  j["labels"] = record.labels;
  j["seed_index"] = record.seed_index;
  return j.dump();
}

DatasetRecord parse_jsonl_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    DatasetRecord r;
    r.n = j.at("n").get<int>();
    r.sentence = j.at("sentence").get<std::string>();
    r.chain_vars = j.at("chain_vars").get<std::vector<std::string>>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    r.seed_index = j.at("seed_index").get<std::uint64_t>();
    if (r.chain_vars.size() != static_cast<std::size_t>(r.n) ||
        r.labels.size() != static_cast<std::size_t>(r.n)) {
      throw Error("record field lengths disagree with n");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad dataset record: ") + e.what());
  }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open " + path.string() + " for writing");
  }
  for (const auto& r : records) {
    out << to_jsonl_line(r) << '\n';
  }
  if (!out) {
    throw Error("write failed for " + path.string());
  }
}

std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open dataset " + path.string());
  }
  std::vector<DatasetRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    try {
      records.push_back(parse_jsonl_line(line));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

DatasetFiles generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  const DatasetSplits splits = generate_splits(spec);
  if (count_overlap(splits) != 0) {
    throw Error("train/test overlap detected");
  }
  std::filesystem::create_directories(dir);
  DatasetFiles files{dir / "train.jsonl", dir / "test.jsonl", splits.train.size(),
                     splits.test.size()};
  write_jsonl(files.train, splits.train);
  write_jsonl(files.test, splits.test);
  return files;
}

Chain record_to_chain(const DatasetRecord& record, const GroupSpec& group) {
  Chain chain = parse_sentence(record.sentence, group);
  if (chain.size() != record.n) {
    throw Error("record n disagrees with its sentence");
  }
  for (int i = 0; i < chain.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (record.chain_vars[k] != std::string(1, chain.clauses[k].lhs) ||
        record.labels[k] != group.values()[static_cast<std::size_t>(chain.assignments[k])]) {
      throw Error("record chain_vars/labels disagree with its sentence");
    }
  }
  return chain;
}

}  // namespace lego::core
