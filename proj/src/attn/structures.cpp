#include "lego/attn/structures.hpp"

#include <array>
#include <cstdio>
#include <fstream>

namespace lego::attn {

std::string_view to_string(AttnKind kind) {
  switch (kind) {
    case AttnKind::Association: return "association";
    case AttnKind::BroadcastCls: return "broadcast_cls";
    case AttnKind::BroadcastSep: return "broadcast_sep";
    case AttnKind::ManipulationTarget: return "manipulation_target";
    case AttnKind::MimicAssociationTarget: return "mimic_association_target";
    case AttnKind::Learned: return "learned";
  }
  return "unknown";
}

std::vector<double> row_normalize(std::span<const double> values, int cols) {
  if (cols <= 0 || values.size() % static_cast<std::size_t>(cols) != 0) {
    throw Error("row_normalize: matrix size is not a multiple of the row length");
  }
  std::vector<double> out(values.begin(), values.end());
  const std::size_t width = static_cast<std::size_t>(cols);
  for (std::size_t r = 0; r < out.size() / width; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double v = out[r * width + c];
      if (v < 0.0) {
        throw Error("row_normalize: negative entry");
      }
      total += v;
    }
    for (std::size_t c = 0; c < width; ++c) {
      auto& v = out[r * width + c];
      v = total > 0.0 ? v / total : 1.0 / static_cast<double>(width);
    }
  }
  return out;
}

namespace {

AttnMap from_indicator(std::vector<double> indicator, int size, AttnKind kind) {
  return AttnMap{size, row_normalize(indicator, size), kind};
}

void require_nonempty(std::span<const int> ids) {
  if (ids.empty()) {
    throw Error("attention map requested for an empty sequence");
  }
}

}  // namespace

AttnMap build_association(std::span<const int> ids) {
  require_nonempty(ids);
  const auto n = ids.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m[i * n + j] = ids[i] == ids[j] ? 1.0 : 0.0;
    }
  }
  return from_indicator(std::move(m), static_cast<int>(n), AttnKind::Association);
}

AttnMap build_broadcast(std::span<const int> ids, int special_id, AttnKind kind) {
  require_nonempty(ids);
  const auto n = ids.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m[i * n + j] = ids[j] == special_id ? 1.0 : 0.0;
    }
  }
  return from_indicator(std::move(m), static_cast<int>(n), kind);
}

AttnMap build_manipulation_target(int size) {
  if (size < 1) {
    throw Error("manipulation target needs T >= 1");
  }
  constexpr std::array<double, 5> kBand{1.0, 2.0, 4.0, 2.0, 1.0};
  const auto n = static_cast<std::size_t>(size);
  std::vector<double> m(n * n, 0.0);
  for (int i = 0; i < size; ++i) {
    for (int off = -2; off <= 2; ++off) {
      const int j = i + off;
      if (j >= 0 && j < size) {
        m[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] =
            kBand[static_cast<std::size_t>(off + 2)];
      }
    }
  }
  return from_indicator(std::move(m), size, AttnKind::ManipulationTarget);
}

AttnMap build_mimic_association_target(std::span<const int> ids) {
  require_nonempty(ids);
  const auto n = ids.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m[i * n + j] = (i != j && ids[i] == ids[j]) ? 1.0 : 0.0;
    }
  }
  return from_indicator(std::move(m), static_cast<int>(n), AttnKind::MimicAssociationTarget);
}

std::string to_csv(std::span<const double> values, int rows, int cols) {
  std::string out;
  char buf[32];
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g",
                    values[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                           static_cast<std::size_t>(c)]);
      out += buf;
      out += c + 1 < cols ? ',' : '\n';
    }
  }
  return out;
}

void write_csv(const std::filesystem::path& path, std::span<const double> values, int rows, int cols) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << to_csv(values, rows, cols);
}

template <typename S>
ad::Tensor<S> stack_maps(std::span<const AttnMap> maps) {
  if (maps.empty()) {
    throw Error("stack_maps: no maps");
  }
  const auto t = static_cast<std::int64_t>(maps.front().size);
  std::vector<S> values;
  values.reserve(maps.size() * static_cast<std::size_t>(t * t));
  for (const auto& m : maps) {
    if (m.size != t) {
      throw Error("stack_maps: maps differ in size");
    }
    for (const double v : m.values) {
      values.push_back(static_cast<S>(v));
    }
  }
  return ad::Tensor<S>({static_cast<std::int64_t>(maps.size()), t, t}, std::move(values));
}

template ad::Tensor<float> stack_maps(std::span<const AttnMap>);
template ad::Tensor<double> stack_maps(std::span<const AttnMap>);

}  // namespace lego::attn
