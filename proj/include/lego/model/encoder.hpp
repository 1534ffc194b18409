#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lego/autodiff/tensor.hpp"
#include "lego/core/random.hpp"
#include "lego/model/config.hpp"
#include "lego/model/params.hpp"

namespace lego::model {

enum class Mode { Train, Eval };

/// Number of hardcoded heads in LEGO attention (association, CLS, SEP).
inline constexpr int kHardcodedHeads = 3;

template <typename S>
struct AttnOutput {
  ad::Tensor<S> out;    // [B, T, d]
  ad::Tensor<S> probs;  // [B*h, T, T]; undefined when the layer has no learned heads
};

template <typename S>
struct ForwardTrace {
  int batch = 0;
  int seq_len = 0;
  ad::Tensor<S> embeddings;               // [B, T, d]
  std::vector<ad::Tensor<S>> hidden;      // per executed layer, [B, T, d]
  std::vector<ad::Tensor<S>> attention;   // per executed layer, learned heads [B*h, T, T]
  int learned_heads = 0;
  ad::Tensor<S> hardcoded;                // LEGO only: [B*3, T, T], shared by every layer

  int depth() const { return static_cast<int>(hidden.size()); }
  const ad::Tensor<S>& output() const { return hidden.empty() ? embeddings : hidden.back(); }
};

/// Executed depth for one batch: uniform over the stochastic-depth range in
/// training mode, its maximum in eval mode, else the configured depth.
int sample_depth(const ModelConfig& config, Mode mode, Rng& rng);

/// Token plus absolute position embeddings for `batch` sequences laid out
/// back to back in `ids`. Returns [B, T, d].
template <typename S>
ad::Tensor<S> embed(ad::Tape<S>& tape, const EncoderParams<S>& params, const ModelConfig& config,
                    std::span<const int> ids, int batch);

/// Scaled dot-product self-attention over h heads, unmasked.
template <typename S>
AttnOutput<S> multihead_attention(ad::Tape<S>& tape, const ad::Tensor<S>& x,
                                  const LayerParams<S>& layer, const ModelConfig& config);

/// Depthwise temporal convolution of x feeding the Q/K/V projections.
template <typename S>
AttnOutput<S> conv_hybrid_attention(ad::Tape<S>& tape, const ad::Tensor<S>& x,
                                    const LayerParams<S>& layer, const ModelConfig& config);

/// [B*3, T, T] stack of A_asso, A_cls, A_sep for each sequence.
template <typename S>
ad::Tensor<S> hardcoded_maps(std::span<const int> ids, int batch, const ModelConfig& config);

/// linear -> ReLU -> depthwise conv -> linear, [B, T, conv_channels].
template <typename S>
ad::Tensor<S> conv_pathway(ad::Tape<S>& tape, const ad::Tensor<S>& x, const LayerParams<S>& layer,
                           const ModelConfig& config);

/// The three hardcoded heads mixing their value maps, [B, T, 3*hardcoded_head_dim].
template <typename S>
ad::Tensor<S> hardcoded_pathway(ad::Tape<S>& tape, const ad::Tensor<S>& x,
                                const ad::Tensor<S>& maps, const LayerParams<S>& layer,
                                const ModelConfig& config);

/// LEGO attention sublayer: pathway outputs concatenated then projected to d.
template <typename S>
AttnOutput<S> lego_attention(ad::Tape<S>& tape, const ad::Tensor<S>& x, const ad::Tensor<S>& maps,
                             const LayerParams<S>& layer, const ModelConfig& config);

/// One post-norm block: attention sublayer, residual + LayerNorm, GELU
/// feed-forward, residual + LayerNorm. `maps` is only read by LEGO variants.
template <typename S>
AttnOutput<S> encoder_block(ad::Tape<S>& tape, const ad::Tensor<S>& x, const ad::Tensor<S>& maps,
                            const LayerParams<S>& layer, const ModelConfig& config);

/// Runs `depth` layers over `batch` sequences of equal length.
template <typename S>
ForwardTrace<S> encoder_forward(ad::Tape<S>& tape, const EncoderParams<S>& params,
                                const ModelConfig& config, std::span<const int> ids, int batch,
                                int depth);

template <typename S>
ForwardTrace<S> encoder_forward(ad::Tape<S>& tape, const EncoderParams<S>& params,
                                const ModelConfig& config, std::span<const int> ids, int batch,
                                Mode mode, Rng& rng);

/// Classifier applied to rows of hidden[B, T, d]; anchors are flat indices
/// b*T + t. Returns [anchors, C].
template <typename S>
ad::Tensor<S> classify_hidden(ad::Tape<S>& tape, const ad::Tensor<S>& hidden,
                              const ad::Tensor<S>& w, const ad::Tensor<S>& b,
                              std::span<const std::int64_t> anchors);

template <typename S>
ad::Tensor<S> classify(ad::Tape<S>& tape, const ForwardTrace<S>& trace,
                       const EncoderParams<S>& params, std::span<const std::int64_t> anchors);

}  // namespace lego::model
