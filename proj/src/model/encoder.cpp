#include "lego/model/encoder.hpp"

#include <cmath>
#include <string>

#include "lego/attn/structures.hpp"
#include "lego/autodiff/ops.hpp"
#include "lego/core/error.hpp"

namespace lego::model {

namespace {

template <typename S>
void require_rank3(const ad::Tensor<S>& x, const ModelConfig& config) {
  if (x.rank() != 3 || x.dim(2) != config.hidden) {
    throw Error("encoder: expected [B, T, " + std::to_string(config.hidden) + "] input, got " +
                ad::to_string(x.shape()));
  }
}

/// Attention of q/k/v [B, T, h*dh] split into heads; returns merged context.
template <typename S>
AttnOutput<S> attend(ad::Tape<S>& tape, const ad::Tensor<S>& q, const ad::Tensor<S>& k,
                     const ad::Tensor<S>& v, int heads) {
  const auto qh = ad::split_heads(tape, q, heads);
  const auto kh = ad::split_heads(tape, k, heads);
  const auto vh = ad::split_heads(tape, v, heads);
  const double dh = static_cast<double>(qh.dim(2));
  const auto scores = ad::bmm(tape, ad::scale(tape, qh, 1.0 / std::sqrt(dh)), kh, true);
  auto probs = ad::softmax_rows(tape, scores);
  auto ctx = ad::merge_heads(tape, ad::bmm(tape, probs, vh), heads);
  return {std::move(ctx), std::move(probs)};
}

template <typename S>
AttnOutput<S> projected_attention(ad::Tape<S>& tape, const ad::Tensor<S>& x,
                                  const LayerParams<S>& l, int heads) {
  const auto q = ad::linear(tape, x, l.wq, l.bq);
  const auto k = ad::linear(tape, x, l.wk, l.bk);
  const auto v = ad::linear(tape, x, l.wv, l.bv);
  auto a = attend(tape, q, k, v, heads);
  a.out = ad::linear(tape, a.out, l.wo, l.bo);
  return a;
}

}  // namespace

int sample_depth(const ModelConfig& config, Mode mode, Rng& rng) {
  if (!config.stochastic_depth) {
    return config.depth;
  }
  const auto r = *config.stochastic_depth;
  if (mode == Mode::Eval) {
    return r.max;
  }
  return r.min + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(r.max - r.min + 1)));
}

template <typename S>
ad::Tensor<S> embed(ad::Tape<S>& tape, const EncoderParams<S>& params, const ModelConfig& config,
                    std::span<const int> ids, int batch) {
  if (batch <= 0 || ids.empty() || ids.size() % static_cast<std::size_t>(batch) != 0) {
    throw Error("encoder: ids do not split into " + std::to_string(batch) + " equal sequences");
  }
  const auto T = static_cast<std::int64_t>(ids.size()) / batch;
  if (T > config.max_seq_len) {
    throw Error("encoder: input length " + std::to_string(T) + " exceeds max_seq_len " +
                std::to_string(config.max_seq_len));
  }
  std::vector<std::int64_t> tok(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size) {
      throw Error("encoder: token id " + std::to_string(ids[i]) + " outside vocabulary");
    }
    tok[i] = ids[i];
  }
  std::vector<std::int64_t> pos(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    pos[static_cast<std::size_t>(t)] = t;
  }
  const auto te = ad::reshape(tape, ad::index_select0(tape, params.tok_emb, tok),
                              {batch, T, config.hidden});
  return ad::add(tape, te, ad::index_select0(tape, params.pos_emb, pos));
}

template <typename S>
AttnOutput<S> multihead_attention(ad::Tape<S>& tape, const ad::Tensor<S>& x,
                                  const LayerParams<S>& layer, const ModelConfig& config) {
  require_rank3(x, config);
  return projected_attention(tape, x, layer, config.heads);
}

template <typename S>
AttnOutput<S> conv_hybrid_attention(ad::Tape<S>& tape, const ad::Tensor<S>& x,
                                    const LayerParams<S>& layer, const ModelConfig& config) {
  require_rank3(x, config);
  if (!layer.qkv_kernel.defined()) {
    throw Error("conv_hybrid_attention: layer has no convolution kernel");
  }
  const auto c = ad::depthwise_conv1d(tape, x, layer.qkv_kernel);
  return projected_attention(tape, c, layer, config.heads);
}

template <typename S>
ad::Tensor<S> hardcoded_maps(std::span<const int> ids, int batch, const ModelConfig& config) {
  if (batch <= 0 || ids.size() % static_cast<std::size_t>(batch) != 0) {
    throw Error("hardcoded_maps: ids do not split into equal sequences");
  }
  const std::size_t T = ids.size() / static_cast<std::size_t>(batch);
  std::vector<attn::AttnMap> maps;
  maps.reserve(static_cast<std::size_t>(batch) * kHardcodedHeads);
  for (int b = 0; b < batch; ++b) {
    const auto seq = ids.subspan(static_cast<std::size_t>(b) * T, T);
    maps.push_back(attn::build_association(seq));
    maps.push_back(attn::build_broadcast(seq, config.cls_id, attn::AttnKind::BroadcastCls));
    maps.push_back(attn::build_broadcast(seq, config.sep_id, attn::AttnKind::BroadcastSep));
  }
  return attn::stack_maps<S>(maps);
}

template <typename S>
ad::Tensor<S> conv_pathway(ad::Tape<S>& tape, const ad::Tensor<S>& x, const LayerParams<S>& layer,
                           const ModelConfig& config) {
  require_rank3(x, config);
  const auto h = ad::relu(tape, ad::linear(tape, x, layer.conv_in_w, layer.conv_in_b));
  const auto c = ad::depthwise_conv1d(tape, h, layer.conv_kernel);
  return ad::linear(tape, c, layer.conv_out_w, layer.conv_out_b);
}

namespace {

template <typename S>
ad::Tensor<S> mix_hardcoded(ad::Tape<S>& tape, const ad::Tensor<S>& values,
                            const ad::Tensor<S>& maps, const ModelConfig& config) {
  const auto B = values.dim(0);
  const auto T = values.dim(1);
  if (!maps.defined() || maps.rank() != 3 || maps.dim(0) != B * kHardcodedHeads ||
      maps.dim(1) != T || maps.dim(2) != T) {
    throw Error("lego attention: hardcoded maps must be [B*3, T, T]");
  }
  const auto hv = ad::slice_last(tape, values, 0, kHardcodedHeads * config.hardcoded_head_dim);
  const auto split = ad::split_heads(tape, hv, kHardcodedHeads);
  return ad::merge_heads(tape, ad::bmm(tape, maps, split), kHardcodedHeads);
}

}  // namespace

template <typename S>
ad::Tensor<S> hardcoded_pathway(ad::Tape<S>& tape, const ad::Tensor<S>& x,
                                const ad::Tensor<S>& maps, const LayerParams<S>& layer,
                                const ModelConfig& config) {
  require_rank3(x, config);
  const auto values = ad::linear(tape, x, layer.value_w, layer.value_b);
  return mix_hardcoded(tape, values, maps, config);
}

template <typename S>
AttnOutput<S> lego_attention(ad::Tape<S>& tape, const ad::Tensor<S>& x, const ad::Tensor<S>& maps,
                             const LayerParams<S>& layer, const ModelConfig& config) {
  require_rank3(x, config);
  if (!config.is_lego() || !layer.value_w.defined()) {
    throw Error("lego_attention: variant mismatch (" + std::string(to_string(config.variant)) + ")");
  }
  std::vector<ad::Tensor<S>> parts;
  parts.push_back(conv_pathway(tape, x, layer, config));
  const auto values = ad::linear(tape, x, layer.value_w, layer.value_b);
  parts.push_back(mix_hardcoded(tape, values, maps, config));
  AttnOutput<S> result;
  if (config.variant == Variant::LegoV1) {
    const int hard = kHardcodedHeads * config.hardcoded_head_dim;
    const auto v = ad::slice_last(tape, values, hard, config.value_map_dim - hard);
    const auto q = ad::linear(tape, x, layer.wq, layer.bq);
    const auto k = ad::linear(tape, x, layer.wk, layer.bk);
    auto a = attend(tape, q, k, v, config.ordinary_heads);
    parts.push_back(a.out);
    result.probs = std::move(a.probs);
  }
  result.out = ad::linear(tape, ad::concat_last(tape, parts), layer.wo, layer.bo);
  return result;
}

template <typename S>
AttnOutput<S> encoder_block(ad::Tape<S>& tape, const ad::Tensor<S>& x, const ad::Tensor<S>& maps,
                            const LayerParams<S>& layer, const ModelConfig& config) {
  AttnOutput<S> a;
  switch (config.variant) {
    case Variant::Vanilla:
    case Variant::WeightTied: a = multihead_attention(tape, x, layer, config); break;
    case Variant::ConvHybrid: a = conv_hybrid_attention(tape, x, layer, config); break;
    case Variant::LegoV0:
    case Variant::LegoV1: a = lego_attention(tape, x, maps, layer, config); break;
  }
  const auto h = ad::layer_norm(tape, ad::add(tape, x, a.out), layer.ln_attn_g, layer.ln_attn_b);
  const auto f = ad::linear(tape, ad::gelu(tape, ad::linear(tape, h, layer.ff_in_w, layer.ff_in_b)),
                            layer.ff_out_w, layer.ff_out_b);
  a.out = ad::layer_norm(tape, ad::add(tape, h, f), layer.ln_ff_g, layer.ln_ff_b);
  return a;
}

template <typename S>
ForwardTrace<S> encoder_forward(ad::Tape<S>& tape, const EncoderParams<S>& params,
                                const ModelConfig& config, std::span<const int> ids, int batch,
                                int depth) {
  if (depth < 0 || depth > config.depth) {
    throw Error("encoder_forward: executed depth " + std::to_string(depth) + " outside [0, " +
                std::to_string(config.depth) + "]");
  }
  if (static_cast<int>(params.layers.size()) != config.stored_layers()) {
    throw Error("encoder_forward: parameters hold " + std::to_string(params.layers.size()) +
                " layers, config expects " + std::to_string(config.stored_layers()));
  }
  ForwardTrace<S> trace;
  trace.batch = batch;
  trace.embeddings = embed(tape, params, config, ids, batch);
  trace.seq_len = static_cast<int>(trace.embeddings.dim(1));
  trace.learned_heads = config.learned_heads();
  if (config.is_lego()) {
    trace.hardcoded = hardcoded_maps<S>(ids, batch, config);
  }
  ad::Tensor<S> x = trace.embeddings;
  for (int l = 0; l < depth; ++l) {
    auto a = encoder_block(tape, x, trace.hardcoded, params.layer(l), config);
    x = a.out;
    trace.hidden.push_back(std::move(a.out));
    trace.attention.push_back(std::move(a.probs));
  }
  return trace;
}

template <typename S>
ForwardTrace<S> encoder_forward(ad::Tape<S>& tape, const EncoderParams<S>& params,
                                const ModelConfig& config, std::span<const int> ids, int batch,
                                Mode mode, Rng& rng) {
  return encoder_forward(tape, params, config, ids, batch, sample_depth(config, mode, rng));
}

template <typename S>
ad::Tensor<S> classify_hidden(ad::Tape<S>& tape, const ad::Tensor<S>& hidden,
                              const ad::Tensor<S>& w, const ad::Tensor<S>& b,
                              std::span<const std::int64_t> anchors) {
  if (hidden.rank() != 3) {
    throw Error("classify: hidden states must be [B, T, d]");
  }
  const auto rows = hidden.dim(0) * hidden.dim(1);
  for (const auto a : anchors) {
    if (a < 0 || a >= rows) {
      throw Error("classify: anchor " + std::to_string(a) + " out of range [0, " +
                  std::to_string(rows) + ")");
    }
  }
  const auto flat = ad::reshape(tape, hidden, {rows, hidden.dim(2)});
  return ad::linear(tape, ad::index_select0(tape, flat, anchors), w, b);
}

template <typename S>
ad::Tensor<S> classify(ad::Tape<S>& tape, const ForwardTrace<S>& trace,
                       const EncoderParams<S>& params, std::span<const std::int64_t> anchors) {
  if (!params.cls_w.defined()) {
    throw Error("classify: model has no classification head");
  }
  return classify_hidden(tape, trace.output(), params.cls_w, params.cls_b, anchors);
}

#define LEGO_INSTANTIATE(S)                                                                        \
  template ad::Tensor<S> embed<S>(ad::Tape<S>&, const EncoderParams<S>&, const ModelConfig&,       \
                                  std::span<const int>, int);                                      \
  template AttnOutput<S> multihead_attention<S>(ad::Tape<S>&, const ad::Tensor<S>&,                \
                                                const LayerParams<S>&, const ModelConfig&);        \
  template AttnOutput<S> conv_hybrid_attention<S>(ad::Tape<S>&, const ad::Tensor<S>&,              \
                                                  const LayerParams<S>&, const ModelConfig&);      \
  template ad::Tensor<S> hardcoded_maps<S>(std::span<const int>, int, const ModelConfig&);         \
  template ad::Tensor<S> conv_pathway<S>(ad::Tape<S>&, const ad::Tensor<S>&,                       \
                                         const LayerParams<S>&, const ModelConfig&);               \
  template ad::Tensor<S> hardcoded_pathway<S>(ad::Tape<S>&, const ad::Tensor<S>&,                  \
                                              const ad::Tensor<S>&, const LayerParams<S>&,         \
                                              const ModelConfig&);                                 \
  template AttnOutput<S> lego_attention<S>(ad::Tape<S>&, const ad::Tensor<S>&,                     \
                                           const ad::Tensor<S>&, const LayerParams<S>&,            \
                                           const ModelConfig&);                                    \
  template AttnOutput<S> encoder_block<S>(ad::Tape<S>&, const ad::Tensor<S>&,                      \
                                          const ad::Tensor<S>&, const LayerParams<S>&,             \
                                          const ModelConfig&);                                     \
  template ForwardTrace<S> encoder_forward<S>(ad::Tape<S>&, const EncoderParams<S>&,               \
                                              const ModelConfig&, std::span<const int>, int, int); \
  template ForwardTrace<S> encoder_forward<S>(ad::Tape<S>&, const EncoderParams<S>&,               \
                                              const ModelConfig&, std::span<const int>, int, Mode, \
                                              Rng&);                                               \
  template ad::Tensor<S> classify_hidden<S>(ad::Tape<S>&, const ad::Tensor<S>&,                    \
                                            const ad::Tensor<S>&, const ad::Tensor<S>&,            \
                                            std::span<const std::int64_t>);                        \
  template ad::Tensor<S> classify<S>(ad::Tape<S>&, const ForwardTrace<S>&,                         \
                                     const EncoderParams<S>&, std::span<const std::int64_t>);

LEGO_INSTANTIATE(float)
LEGO_INSTANTIATE(double)

}  // namespace lego::model
