#include "lego/model/config.hpp"

#include <algorithm>
#include <cmath>

#include "lego/core/error.hpp"

namespace lego::model {

namespace {
constexpr int kBaseHidden = 768;
constexpr int kHardcodedHeads = 3;
}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::WeightTied: return "weight_tied";
    case Variant::LegoV0: return "lego_v0";
    case Variant::LegoV1: return "lego_v1";
    case Variant::ConvHybrid: return "conv_hybrid";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  for (const auto v : {Variant::Vanilla, Variant::WeightTied, Variant::LegoV0, Variant::LegoV1,
                       Variant::ConvHybrid}) {
    if (text == to_string(v)) {
      return v;
    }
  }
  throw Error("unknown variant '" + std::string(text) +
              "' (expected vanilla, weight_tied, lego_v0, lego_v1 or conv_hybrid)");
}

int scale_width(int base, int hidden, int multiple) {
  if ((static_cast<long>(base) * hidden) % kBaseHidden == 0) {
    const int exact = static_cast<int>(static_cast<long>(base) * hidden / kBaseHidden);
    if (exact > 0 && (exact % multiple == 0 || hidden == kBaseHidden)) {
      return exact;
    }
  }
  const double units = static_cast<double>(base) * hidden / kBaseHidden / multiple;
  return std::max(1, static_cast<int>(std::lround(units))) * multiple;
}

int ModelConfig::learned_heads() const {
  switch (variant) {
    case Variant::LegoV0: return 0;
    case Variant::LegoV1: return ordinary_heads;
    default: return heads;
  }
}

int ModelConfig::ordinary_value_dim() const {
  if (variant != Variant::LegoV1 || ordinary_heads <= 0) {
    return 0;
  }
  return (value_map_dim - kHardcodedHeads * hardcoded_head_dim) / ordinary_heads;
}

int ModelConfig::lego_merge_dim() const {
  return is_lego() ? conv_channels + value_map_dim : 0;
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig c = *this;
  if (c.variant == Variant::LegoV0) {
    if (c.conv_channels == 0) c.conv_channels = scale_width(576, c.hidden);
    if (c.hardcoded_head_dim == 0) c.hardcoded_head_dim = scale_width(64, c.hidden, c.heads);
    if (c.value_map_dim == 0) c.value_map_dim = kHardcodedHeads * c.hardcoded_head_dim;
  } else if (c.variant == Variant::LegoV1) {
    if (c.ordinary_heads == 0) c.ordinary_heads = 3;
    if (c.conv_channels == 0) c.conv_channels = scale_width(384, c.hidden);
    if (c.hardcoded_head_dim == 0) c.hardcoded_head_dim = scale_width(64, c.hidden, c.heads);
    if (c.value_map_dim == 0) {
      c.value_map_dim = (kHardcodedHeads + c.ordinary_heads) * c.hardcoded_head_dim;
    }
    if (c.ordinary_qk_dim == 0) c.ordinary_qk_dim = scale_width(384, c.hidden, c.ordinary_heads);
  }
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error("invalid model config: " + msg); };
  if (depth < 0) fail("depth must be non-negative");
  if (hidden <= 0) fail("hidden must be positive");
  if (heads <= 0 || hidden % heads != 0) fail("hidden must be divisible by heads");
  if (ff_dim < 0) fail("ff_dim must be non-negative");
  if (conv_kernel <= 0 || conv_kernel % 2 == 0) {
    fail("conv_kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (max_seq_len <= 0) fail("max_seq_len must be positive");
  if (vocab_size <= 0) fail("vocab_size must be positive");
  if (num_classes < 0) fail("num_classes must be non-negative");
  if (stochastic_depth) {
    const auto r = *stochastic_depth;
    if (r.min < 1 || r.max > depth || r.min > r.max) {
      fail("stochastic depth range must lie within [1, depth]");
    }
  }
  if (is_lego()) {
    if (conv_channels <= 0) fail("conv_channels must be positive for LEGO variants");
    if (hardcoded_head_dim <= 0) fail("hardcoded_head_dim must be positive");
    if (value_map_dim < kHardcodedHeads * hardcoded_head_dim) {
      fail("value_map_dim must cover the three hardcoded heads");
    }
    if (variant == Variant::LegoV0) {
      if (value_map_dim != kHardcodedHeads * hardcoded_head_dim) {
        fail("lego_v0 value map must be exactly 3 * hardcoded_head_dim");
      }
      if (ordinary_heads != 0 || ordinary_qk_dim != 0) fail("lego_v0 has no ordinary heads");
    } else {
      if (ordinary_heads <= 0) fail("lego_v1 needs ordinary heads");
      const int rest = value_map_dim - kHardcodedHeads * hardcoded_head_dim;
      if (rest <= 0 || rest % ordinary_heads != 0) {
        fail("lego_v1 value map beyond the hardcoded heads must split evenly over ordinary heads");
      }
      if (ordinary_qk_dim <= 0 || ordinary_qk_dim % ordinary_heads != 0) {
        fail("ordinary_qk_dim must be a positive multiple of ordinary_heads");
      }
    }
  }
}

ModelConfig ModelConfig::base_scale(Variant variant) {
  ModelConfig c;
  c.depth = 12;
  c.hidden = 768;
  c.heads = 12;
  c.variant = variant;
  c.max_seq_len = 512;
  return c.resolved();
}

ModelConfig ModelConfig::desk(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  return c.resolved();
}

}  // namespace lego::model
