#include "lego/harness/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lego/core/error.hpp"
#include "lego/harness/manifest.hpp"

namespace lego::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw Error("config: key '" + std::string(key) + "' expects " + std::string(want) + ", got '" +
              std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    bad_value(key, value, "a number");
  }
  return out;
}

int parse_int(std::string_view key, std::string_view value) { return parse_number<int>(key, value); }

std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

template <typename Member>
Field int_field(Member member) {
  return {[member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_number<std::remove_reference_t<decltype(member(c))>>(k, v);
          }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_number<double>(k, v);
          }};
}

template <typename Member>
Field string_field(Member member) {
  return {[member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); },
          [member](RunConfig& c, std::string_view, std::string_view v) { member(c) = std::string(v); }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
    // model
    t["depth"] = int_field([](RunConfig& c) -> int& { return c.model.depth; });
    t["hidden"] = int_field([](RunConfig& c) -> int& { return c.model.hidden; });
    t["heads"] = int_field([](RunConfig& c) -> int& { return c.model.heads; });
    t["ff_dim"] = int_field([](RunConfig& c) -> int& { return c.model.ff_dim; });
    t["conv_kernel"] = int_field([](RunConfig& c) -> int& { return c.model.conv_kernel; });
    t["conv_channels"] = int_field([](RunConfig& c) -> int& { return c.model.conv_channels; });
    t["hardcoded_head_dim"] = int_field([](RunConfig& c) -> int& { return c.model.hardcoded_head_dim; });
    t["value_map_dim"] = int_field([](RunConfig& c) -> int& { return c.model.value_map_dim; });
    t["ordinary_heads"] = int_field([](RunConfig& c) -> int& { return c.model.ordinary_heads; });
    t["ordinary_qk_dim"] = int_field([](RunConfig& c) -> int& { return c.model.ordinary_qk_dim; });
    t["max_seq_len"] = int_field([](RunConfig& c) -> int& { return c.model.max_seq_len; });
    t["variant"] = {[](const RunConfig& c) { return std::string(model::to_string(c.model.variant)); },
                    [](RunConfig& c, std::string_view, std::string_view v) {
                      c.model.variant = model::parse_variant(v);
                    }};
    t["stochastic_depth"] = {
        [](const RunConfig& c) {
          const auto& r = c.model.stochastic_depth;
          return r ? std::to_string(r->min) + "-" + std::to_string(r->max) : std::string("none");
        },
        [](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "none") {
            c.model.stochastic_depth.reset();
            return;
          }
          const auto dash = v.find('-');
          if (dash == std::string_view::npos) {
            bad_value(k, v, "'min-max' or 'none'");
          }
          c.model.stochastic_depth =
              model::DepthRange{parse_int(k, v.substr(0, dash)), parse_int(k, v.substr(dash + 1))};
        }};
    // training
    t["epochs"] = int_field([](RunConfig& c) -> int& { return c.train.epochs; });
    t["batch_size"] = int_field([](RunConfig& c) -> int& { return c.train.batch_size; });
    t["micro_batch"] = int_field([](RunConfig& c) -> int& { return c.train.micro_batch; });
    t["lr"] = double_field([](RunConfig& c) -> double& { return c.train.adam.lr; });
    t["beta1"] = double_field([](RunConfig& c) -> double& { return c.train.adam.beta1; });
    t["beta2"] = double_field([](RunConfig& c) -> double& { return c.train.adam.beta2; });
    t["eps"] = double_field([](RunConfig& c) -> double& { return c.train.adam.eps; });
    t["t_max"] = int_field([](RunConfig& c) -> int& { return c.train.t_max; });
    t["n"] = int_field([](RunConfig& c) -> int& { return c.train.n; });
    t["n_tr"] = int_field([](RunConfig& c) -> int& { return c.train.n_tr; });
    t["supervised"] = {
        [](const RunConfig& c) {
          return c.train.supervised.empty() ? std::string("none") : format_positions(c.train.supervised);
        },
        [](RunConfig& c, std::string_view, std::string_view v) {
          c.train.supervised = v == "none" ? std::vector<int>{} : parse_positions(v);
        }};
    t["seed"] = int_field([](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
    t["init"] = {[](const RunConfig& c) { return std::string(to_string(c.train.init)); },
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   if (v == "random") {
                     c.train.init = Init::Random;
                   } else if (v == "mimicked") {
                     c.train.init = Init::Mimicked;
                   } else {
                     bad_value(k, v, "'random' or 'mimicked'");
                   }
                 }};
    t["init_checkpoint"] = string_field([](RunConfig& c) -> std::string& { return c.train.init_checkpoint; });
    // data
    t["group"] = {[](const RunConfig& c) { return std::string(core::to_string(c.data.group)); },
                  [](RunConfig& c, std::string_view, std::string_view v) {
                    c.data.group = core::parse_group_kind(v);
                  }};
    t["data_seed"] = int_field([](RunConfig& c) -> std::uint64_t& { return c.data.seed; });
    t["train_count"] = int_field([](RunConfig& c) -> std::size_t& { return c.data.train_count; });
    t["test_count"] = int_field([](RunConfig& c) -> std::size_t& { return c.data.test_count; });
    t["data_dir"] = string_field([](RunConfig& c) -> std::string& { return c.data.dir; });
    // mimicking
    t["mimic_steps"] = int_field([](RunConfig& c) -> int& { return c.mimic.steps; });
    t["mimic_batch"] = int_field([](RunConfig& c) -> int& { return c.mimic.batch; });
    t["mimic_lr"] = double_field([](RunConfig& c) -> double& { return c.mimic.lr; });
    t["mimic_heads"] = string_field([](RunConfig& c) -> std::string& { return c.mimic.heads; });
    t["mimic_seed"] = int_field([](RunConfig& c) -> std::uint64_t& { return c.mimic.seed; });
    t["mimic_seq_len"] = int_field([](RunConfig& c) -> int& { return c.mimic.seq_len; });
    // analysis
    t["probe_epochs"] = int_field([](RunConfig& c) -> int& { return c.probe_epochs; });
    t["shortcut_threshold"] = double_field([](RunConfig& c) -> double& { return c.shortcut_threshold; });
    return t;
  }();
  return table;
}

}  // namespace

std::string_view to_string(Init init) { return init == Init::Random ? "random" : "mimicked"; }

std::vector<int> TrainConfig::supervised_positions() const {
  if (!supervised.empty()) {
    return supervised;
  }
  std::vector<int> out(static_cast<std::size_t>(n_tr > 0 ? n_tr : n));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<int>(i);
  }
  return out;
}

void TrainConfig::validate() const {
  if (n < 1) {
    throw Error("train config: n must be positive");
  }
  if (n_tr < 0 || n_tr > n) {
    throw Error("train config: n_tr must lie in [1, n]");
  }
  for (const int p : supervised) {
    if (p < 0 || p >= n) {
      throw Error("train config: supervised position " + std::to_string(p) + " outside [0, n)");
    }
  }
  if (epochs < 1) {
    throw Error("train config: epochs must be at least 1");
  }
  if (batch_size < 1 || micro_batch < 1) {
    throw Error("train config: batch sizes must be positive");
  }
  if (t_max < 1) {
    throw Error("train config: t_max must be positive");
  }
  if (!(adam.lr > 0.0)) {
    throw Error("train config: lr must be positive");
  }
  if (init == Init::Mimicked && init_checkpoint.empty()) {
    throw Error("train config: init=mimicked needs init_checkpoint");
  }
}

core::DatasetSpec DataConfig::spec(int n) const {
  core::DatasetSpec s;
  s.n = n;
  s.group = group;
  s.seed = seed;
  if (train_count > 0) {
    s.count_train = train_count;
  }
  if (test_count > 0) {
    s.count_test = test_count;
  }
  return s;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) {
    throw Error("config: unknown key '" + std::string(key) + "'");
  }
  it->second.set(*this, key, trim(value));
}

std::string RunConfig::get(std::string_view key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) {
    throw Error("config: unknown key '" + std::string(key) + "'");
  }
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : fields()) {
      out.push_back(k);
    }
    return out;
  }();
  return names;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, f] : fields()) {
    out += k + "=" + f.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

core::Vocab RunConfig::vocab() const { return core::Vocab(core::GroupSpec::make(data.group)); }

model::ModelConfig RunConfig::bound_model() const {
  const auto v = vocab();
  model::ModelConfig m = model;
  m.vocab_size = v.size();
  m.num_classes = v.group().set_size();
  m.cls_id = v.bos();
  m.sep_id = v.eos();
  return m.resolved();
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw Error("config line " + std::to_string(line_no) + ": empty key");
    }
    for (const auto& [k, _] : out) {
      if (k == key) {
        throw Error("config line " + std::to_string(line_no) + ": repeated key '" + key + "'");
      }
    }
    out.emplace_back(std::move(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  for (const auto& [k, v] : parse_key_values(text)) {
    config.set(k, v);
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot read config " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<int> parse_positions(std::string_view text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto item = trim(text.substr(start, end - start));
    start = end + 1;
    if (item.empty()) {
      throw Error("positions: empty item in '" + std::string(text) + "'");
    }
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_int("positions", item));
    } else {
      const int lo = parse_int("positions", trim(item.substr(0, dash)));
      const int hi = parse_int("positions", trim(item.substr(dash + 1)));
      if (hi < lo) {
        throw Error("positions: descending range '" + std::string(item) + "'");
      }
      for (int p = lo; p <= hi; ++p) {
        out.push_back(p);
      }
    }
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw Error("positions: repeated position in '" + std::string(text) + "'");
  }
  if (!out.empty() && out.front() < 0) {
    throw Error("positions: negative position");
  }
  return out;
}

std::string format_positions(const std::vector<int>& positions) {
  std::string out;
  std::size_t i = 0;
  while (i < positions.size()) {
    std::size_t j = i;
    while (j + 1 < positions.size() && positions[j + 1] == positions[j] + 1) {
      ++j;
    }
    if (!out.empty()) {
      out += ',';
    }
    out += std::to_string(positions[i]);
    if (j > i) {
      out += '-' + std::to_string(positions[j]);
    }
    i = j + 1;
  }
  return out;
}

}  // namespace lego::harness
