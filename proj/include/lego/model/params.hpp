#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lego/autodiff/tensor.hpp"
#include "lego/model/config.hpp"

namespace lego::model {

/// Parameters of one encoder block. Which members are defined depends on the
/// variant:
///   vanilla / weight_tied: wq..bo
///   conv_hybrid: wq..bo plus qkv_kernel (depthwise filter before Q/K/V)
///   lego_v0: conv_*, value_*, wo/bo (pathway merge)
///   lego_v1: lego_v0 plus wq/bq/wk/bk for the ordinary heads
template <typename S>
struct LayerParams {
  ad::Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Tensor<S> qkv_kernel;
  ad::Tensor<S> conv_in_w, conv_in_b, conv_kernel, conv_out_w, conv_out_b;
  ad::Tensor<S> value_w, value_b;
  ad::Tensor<S> ln_attn_g, ln_attn_b;
  ad::Tensor<S> ff_in_w, ff_in_b, ff_out_w, ff_out_b;
  ad::Tensor<S> ln_ff_g, ln_ff_b;
};

template <typename S>
using NamedTensor = std::pair<std::string, ad::Tensor<S>>;

template <typename S>
struct EncoderParams {
  ad::Tensor<S> tok_emb;  // [V, d]
  ad::Tensor<S> pos_emb;  // [max_len, d]
  std::vector<LayerParams<S>> layers;  // one entry when weight-tied
  ad::Tensor<S> cls_w;    // [d, C]
  ad::Tensor<S> cls_b;    // [C]

  /// Parameters used by executed layer `l` (weight-tied models reuse layer 0).
  const LayerParams<S>& layer(int l) const {
    return layers.size() == 1 ? layers.front() : layers.at(static_cast<std::size_t>(l));
  }

  /// Every defined tensor with a stable, unique name, in a fixed order.
  std::vector<NamedTensor<S>> named_parameters() const;
  /// Backbone only (embeddings and layers), excluding the classifier.
  std::vector<NamedTensor<S>> backbone_parameters() const;
  std::vector<ad::Tensor<S>> tensors() const;
  std::int64_t count() const;

  void set_requires_grad(bool on) const;
  void zero_grad() const;
};

/// Weights ~ N(0, 0.02), biases zero, LayerNorm gains one. Depthwise kernels
/// start as a unit impulse at the center tap plus N(0, 0.02) noise.
template <typename S>
EncoderParams<S> init_params(const ModelConfig& config, std::uint64_t seed);

/// Deep copy with the same names and shapes, detached from any graph.
template <typename S>
EncoderParams<S> clone_params(const EncoderParams<S>& params);

/// Replaces the classifier with a fresh [d, classes] head.
template <typename S>
void reset_classifier(EncoderParams<S>& params, int classes, std::uint64_t seed);

}  // namespace lego::model
