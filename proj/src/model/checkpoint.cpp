#include "lego/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "lego/core/error.hpp"

namespace lego::model {

namespace {

constexpr char kMagic[8] = {'L', 'E', 'G', 'O', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw Error("checkpoint: truncated file");
  }
  return v;
}

std::string get_string(std::istream& in, std::uint64_t len) {
  if (len > (1u << 24)) {
    throw Error("checkpoint: implausible string length");
  }
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len))) {
    throw Error("checkpoint: truncated file");
  }
  return s;
}

}  // namespace

std::string config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["depth"] = c.depth;
  j["hidden"] = c.hidden;
  j["heads"] = c.heads;
  j["ff_dim"] = c.ff_dim;
  j["variant"] = std::string(to_string(c.variant));
  j["conv_kernel"] = c.conv_kernel;
  j["conv_channels"] = c.conv_channels;
  j["hardcoded_head_dim"] = c.hardcoded_head_dim;
  j["value_map_dim"] = c.value_map_dim;
  j["ordinary_heads"] = c.ordinary_heads;
  j["ordinary_qk_dim"] = c.ordinary_qk_dim;
  if (c.stochastic_depth) {
    j["stochastic_depth"] = {c.stochastic_depth->min, c.stochastic_depth->max};
  } else {
    j["stochastic_depth"] = nullptr;
  }
  j["max_seq_len"] = c.max_seq_len;
  j["vocab_size"] = c.vocab_size;
  j["num_classes"] = c.num_classes;
  j["cls_id"] = c.cls_id;
  j["sep_id"] = c.sep_id;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [key, value] : j.items()) {
      if (key == "depth") c.depth = value.get<int>();
      else if (key == "hidden") c.hidden = value.get<int>();
      else if (key == "heads") c.heads = value.get<int>();
      else if (key == "ff_dim") c.ff_dim = value.get<int>();
      else if (key == "variant") c.variant = parse_variant(value.get<std::string>());
      else if (key == "conv_kernel") c.conv_kernel = value.get<int>();
      else if (key == "conv_channels") c.conv_channels = value.get<int>();
      else if (key == "hardcoded_head_dim") c.hardcoded_head_dim = value.get<int>();
      else if (key == "value_map_dim") c.value_map_dim = value.get<int>();
      else if (key == "ordinary_heads") c.ordinary_heads = value.get<int>();
      else if (key == "ordinary_qk_dim") c.ordinary_qk_dim = value.get<int>();
      else if (key == "stochastic_depth") {
        if (!value.is_null()) c.stochastic_depth = DepthRange{value.at(0).get<int>(), value.at(1).get<int>()};
      } else if (key == "max_seq_len") c.max_seq_len = value.get<int>();
      else if (key == "vocab_size") c.vocab_size = value.get<int>();
      else if (key == "num_classes") c.num_classes = value.get<int>();
      else if (key == "cls_id") c.cls_id = value.get<int>();
      else if (key == "sep_id") c.sep_id = value.get<int>();
      else throw Error("model config: unknown field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const EncoderParams<S>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("checkpoint: cannot write " + path.string());
  }
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(S));
  const auto json = config_to_json(config);
  put<std::uint64_t>(out, json.size());
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  const auto named = params.named_parameters();
  put<std::uint64_t>(out, named.size());
  for (const auto& [name, t] : named) {
    put<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (const auto d : t.shape()) {
      put<std::int64_t>(out, d);
    }
    const auto data = t.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(S)));
  }
  if (!out) {
    throw Error("checkpoint: write failed for " + path.string());
  }
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("checkpoint: cannot open " + path.string());
  }
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error("checkpoint: bad magic in " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto width = get<std::uint32_t>(in);
  if (width != 4 && width != 8) {
    throw Error("checkpoint: unsupported scalar width " + std::to_string(width));
  }
  Checkpoint<S> ck;
  ck.config = config_from_json(get_string(in, get<std::uint64_t>(in)));
  ck.params = init_params<S>(ck.config, 0);
  std::map<std::string, ad::Tensor<S>> slots;
  for (auto& [name, t] : ck.params.named_parameters()) {
    slots.emplace(name, t);
  }
  const auto count = get<std::uint64_t>(in);
  if (count != slots.size()) {
    throw Error("checkpoint: holds " + std::to_string(count) + " tensors, config implies " +
                std::to_string(slots.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = get_string(in, get<std::uint64_t>(in));
    const auto it = slots.find(name);
    if (it == slots.end()) {
      throw Error("checkpoint: unexpected tensor '" + name + "'");
    }
    auto& t = it->second;
    const auto rank = get<std::uint32_t>(in);
    ad::Shape shape(rank);
    for (auto& d : shape) {
      d = get<std::int64_t>(in);
    }
    if (shape != t.shape()) {
      throw Error("checkpoint: tensor '" + name + "' has shape " + ad::to_string(shape) +
                  ", expected " + ad::to_string(t.shape()));
    }
    auto data = t.data();
    if (width == sizeof(S)) {
      if (!in.read(reinterpret_cast<char*>(data.data()),
                   static_cast<std::streamsize>(data.size() * sizeof(S)))) {
        throw Error("checkpoint: truncated tensor '" + name + "'");
      }
    } else if (width == 4) {
      for (auto& v : data) v = static_cast<S>(get<float>(in));
    } else {
      for (auto& v : data) v = static_cast<S>(get<double>(in));
    }
    slots.erase(it);
  }
  return ck;
}

template void save_checkpoint<float>(const std::filesystem::path&, const ModelConfig&,
                                     const EncoderParams<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const ModelConfig&,
                                      const EncoderParams<double>&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace lego::model
