#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace lego::model {

enum class Variant { Vanilla, WeightTied, LegoV0, LegoV1, ConvHybrid };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

struct DepthRange {
  int min = 1;
  int max = 1;
  friend bool operator==(const DepthRange&, const DepthRange&) = default;
};

/// Architecture descriptor. Zero-valued LEGO pathway widths are derived from
/// the base-width (768) layout by resolved(); explicit values are kept.
struct ModelConfig {
  int depth = 4;
  int hidden = 128;
  int heads = 4;
  int ff_dim = 0;  // 0: 4 * hidden
  Variant variant = Variant::Vanilla;

  int conv_kernel = 21;         // LEGO conv pathway and conv-hybrid kernel size
  int conv_channels = 0;        // LEGO conv pathway width
  int hardcoded_head_dim = 0;   // value width of each hardcoded head
  int value_map_dim = 0;        // LEGO value map output width
  int ordinary_heads = 0;       // LEGO v1 ordinary attention heads
  int ordinary_qk_dim = 0;      // LEGO v1 query/key map output width

  std::optional<DepthRange> stochastic_depth;

  int max_seq_len = 64;
  int vocab_size = 36;
  int num_classes = 2;
  int cls_id = 3;
  int sep_id = 4;

  int head_dim() const { return hidden / heads; }
  int feed_forward_dim() const { return ff_dim > 0 ? ff_dim : 4 * hidden; }
  bool is_lego() const { return variant == Variant::LegoV0 || variant == Variant::LegoV1; }
  /// Number of layers with their own parameters.
  int stored_layers() const { return variant == Variant::WeightTied ? 1 : depth; }
  /// Heads whose maps come from learned Q/K (traced and mimicable).
  int learned_heads() const;
  /// Value width per ordinary LEGO v1 head.
  int ordinary_value_dim() const;
  /// Width of the concatenated LEGO pathway outputs fed to the output map.
  int lego_merge_dim() const;

  /// Copy with derived widths filled in; validates the result.
  ModelConfig resolved() const;
  /// Throws lego::Error describing the first violated constraint.
  void validate() const;

  /// BERT-base shaped preset (12 layers, 768 wide, 12 heads).
  static ModelConfig base_scale(Variant variant);
  /// Desk-scale preset (4 layers, 128 wide, 4 heads).
  static ModelConfig desk(Variant variant);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// base * hidden / 768 rounded to a positive multiple of `multiple`. The base
/// layout itself (hidden == 768) is returned unchanged.
int scale_width(int base, int hidden, int multiple = 1);

}  // namespace lego::model
