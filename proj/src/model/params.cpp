#include "lego/model/params.hpp"

#include "lego/core/error.hpp"
#include "lego/core/random.hpp"

namespace lego::model {

namespace {

constexpr double kInitStd = 0.02;

template <typename S>
void push(std::vector<NamedTensor<S>>& out, const std::string& name, const ad::Tensor<S>& t) {
  if (t.defined()) {
    out.emplace_back(name, t);
  }
}

template <typename S>
void push_layer(std::vector<NamedTensor<S>>& out, const std::string& p, const LayerParams<S>& l) {
  push(out, p + "attn.wq", l.wq);
  push(out, p + "attn.bq", l.bq);
  push(out, p + "attn.wk", l.wk);
  push(out, p + "attn.bk", l.bk);
  push(out, p + "attn.wv", l.wv);
  push(out, p + "attn.bv", l.bv);
  push(out, p + "attn.qkv_kernel", l.qkv_kernel);
  push(out, p + "attn.conv_in_w", l.conv_in_w);
  push(out, p + "attn.conv_in_b", l.conv_in_b);
  push(out, p + "attn.conv_kernel", l.conv_kernel);
  push(out, p + "attn.conv_out_w", l.conv_out_w);
  push(out, p + "attn.conv_out_b", l.conv_out_b);
  push(out, p + "attn.value_w", l.value_w);
  push(out, p + "attn.value_b", l.value_b);
  push(out, p + "attn.wo", l.wo);
  push(out, p + "attn.bo", l.bo);
  push(out, p + "ln_attn.g", l.ln_attn_g);
  push(out, p + "ln_attn.b", l.ln_attn_b);
  push(out, p + "ff.in_w", l.ff_in_w);
  push(out, p + "ff.in_b", l.ff_in_b);
  push(out, p + "ff.out_w", l.ff_out_w);
  push(out, p + "ff.out_b", l.ff_out_b);
  push(out, p + "ln_ff.g", l.ln_ff_g);
  push(out, p + "ln_ff.b", l.ln_ff_b);
}

struct Init {
  Rng rng;
  template <typename S>
  ad::Tensor<S> weight(ad::Shape shape) {
    return ad::Tensor<S>::randn(std::move(shape), kInitStd, rng, true);
  }
  template <typename S>
  ad::Tensor<S> zeros(ad::Shape shape) {
    return ad::Tensor<S>::zeros(std::move(shape), true);
  }
  template <typename S>
  ad::Tensor<S> ones(ad::Shape shape) {
    return ad::Tensor<S>::full(std::move(shape), S(1), true);
  }
  template <typename S>
  ad::Tensor<S> impulse(int k, int channels) {
    auto t = weight<S>({k, channels});
    for (int c = 0; c < channels; ++c) {
      t[static_cast<std::int64_t>(k / 2) * channels + c] += S(1);
    }
    return t;
  }
};

template <typename S>
LayerParams<S> init_layer(const ModelConfig& c, Init& init) {
  const int d = c.hidden;
  LayerParams<S> l;
  if (c.is_lego()) {
    l.conv_in_w = init.weight<S>({d, c.conv_channels});
    l.conv_in_b = init.zeros<S>({c.conv_channels});
    l.conv_kernel = init.impulse<S>(c.conv_kernel, c.conv_channels);
    l.conv_out_w = init.weight<S>({c.conv_channels, c.conv_channels});
    l.conv_out_b = init.zeros<S>({c.conv_channels});
    l.value_w = init.weight<S>({d, c.value_map_dim});
    l.value_b = init.zeros<S>({c.value_map_dim});
    if (c.variant == Variant::LegoV1) {
      l.wq = init.weight<S>({d, c.ordinary_qk_dim});
      l.bq = init.zeros<S>({c.ordinary_qk_dim});
      l.wk = init.weight<S>({d, c.ordinary_qk_dim});
      l.bk = init.zeros<S>({c.ordinary_qk_dim});
    }
    l.wo = init.weight<S>({c.lego_merge_dim(), d});
    l.bo = init.zeros<S>({d});
  } else {
    if (c.variant == Variant::ConvHybrid) {
      l.qkv_kernel = init.impulse<S>(c.conv_kernel, d);
    }
    l.wq = init.weight<S>({d, d});
    l.bq = init.zeros<S>({d});
    l.wk = init.weight<S>({d, d});
    l.bk = init.zeros<S>({d});
    l.wv = init.weight<S>({d, d});
    l.bv = init.zeros<S>({d});
    l.wo = init.weight<S>({d, d});
    l.bo = init.zeros<S>({d});
  }
  const int ff = c.feed_forward_dim();
  l.ln_attn_g = init.ones<S>({d});
  l.ln_attn_b = init.zeros<S>({d});
  l.ff_in_w = init.weight<S>({d, ff});
  l.ff_in_b = init.zeros<S>({ff});
  l.ff_out_w = init.weight<S>({ff, d});
  l.ff_out_b = init.zeros<S>({d});
  l.ln_ff_g = init.ones<S>({d});
  l.ln_ff_b = init.zeros<S>({d});
  return l;
}

template <typename S>
ad::Tensor<S> copy_of(const ad::Tensor<S>& t) {
  if (!t.defined()) {
    return {};
  }
  auto c = t.clone();
  c.set_requires_grad(t.requires_grad());
  return c;
}

}  // namespace

template <typename S>
std::vector<NamedTensor<S>> EncoderParams<S>::backbone_parameters() const {
  std::vector<NamedTensor<S>> out;
  push(out, "embed.tok", tok_emb);
  push(out, "embed.pos", pos_emb);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    push_layer(out, "layer" + std::to_string(i) + ".", layers[i]);
  }
  return out;
}

template <typename S>
std::vector<NamedTensor<S>> EncoderParams<S>::named_parameters() const {
  auto out = backbone_parameters();
  push(out, "cls.w", cls_w);
  push(out, "cls.b", cls_b);
  return out;
}

template <typename S>
std::vector<ad::Tensor<S>> EncoderParams<S>::tensors() const {
  std::vector<ad::Tensor<S>> out;
  for (auto& [name, t] : named_parameters()) {
    out.push_back(t);
  }
  return out;
}

template <typename S>
std::int64_t EncoderParams<S>::count() const {
  std::int64_t n = 0;
  for (auto& [name, t] : named_parameters()) {
    n += t.numel();
  }
  return n;
}

template <typename S>
void EncoderParams<S>::set_requires_grad(bool on) const {
  for (auto& [name, t] : named_parameters()) {
    ad::Tensor<S> h = t;
    h.set_requires_grad(on);
  }
}

template <typename S>
void EncoderParams<S>::zero_grad() const {
  for (auto& [name, t] : named_parameters()) {
    ad::Tensor<S> h = t;
    h.zero_grad();
  }
}

template <typename S>
EncoderParams<S> init_params(const ModelConfig& config, std::uint64_t seed) {
  const ModelConfig c = config.resolved();
  Init init{make_rng(seed, 7)};
  EncoderParams<S> p;
  p.tok_emb = init.weight<S>({c.vocab_size, c.hidden});
  p.pos_emb = init.weight<S>({c.max_seq_len, c.hidden});
  for (int i = 0; i < c.stored_layers(); ++i) {
    p.layers.push_back(init_layer<S>(c, init));
  }
  if (c.num_classes > 0) {
    p.cls_w = init.weight<S>({c.hidden, c.num_classes});
    p.cls_b = init.zeros<S>({c.num_classes});
  }
  return p;
}

template <typename S>
EncoderParams<S> clone_params(const EncoderParams<S>& params) {
  EncoderParams<S> out;
  out.tok_emb = copy_of(params.tok_emb);
  out.pos_emb = copy_of(params.pos_emb);
  for (const auto& l : params.layers) {
    LayerParams<S> c;
    for (auto [dst, src] : {std::pair{&c.wq, &l.wq}, {&c.bq, &l.bq}, {&c.wk, &l.wk}, {&c.bk, &l.bk},
                            {&c.wv, &l.wv}, {&c.bv, &l.bv}, {&c.wo, &l.wo}, {&c.bo, &l.bo},
                            {&c.qkv_kernel, &l.qkv_kernel}, {&c.conv_in_w, &l.conv_in_w},
                            {&c.conv_in_b, &l.conv_in_b}, {&c.conv_kernel, &l.conv_kernel},
                            {&c.conv_out_w, &l.conv_out_w}, {&c.conv_out_b, &l.conv_out_b},
                            {&c.value_w, &l.value_w}, {&c.value_b, &l.value_b},
                            {&c.ln_attn_g, &l.ln_attn_g}, {&c.ln_attn_b, &l.ln_attn_b},
                            {&c.ff_in_w, &l.ff_in_w}, {&c.ff_in_b, &l.ff_in_b},
                            {&c.ff_out_w, &l.ff_out_w}, {&c.ff_out_b, &l.ff_out_b},
                            {&c.ln_ff_g, &l.ln_ff_g}, {&c.ln_ff_b, &l.ln_ff_b}}) {
      *dst = copy_of(*src);
    }
    out.layers.push_back(std::move(c));
  }
  out.cls_w = copy_of(params.cls_w);
  out.cls_b = copy_of(params.cls_b);
  return out;
}

template <typename S>
void reset_classifier(EncoderParams<S>& params, int classes, std::uint64_t seed) {
  if (classes <= 0) {
    throw Error("classifier needs at least one class");
  }
  Rng rng = make_rng(seed, 8);
  const auto d = params.tok_emb.dim(1);
  params.cls_w = ad::Tensor<S>::randn({d, classes}, kInitStd, rng, true);
  params.cls_b = ad::Tensor<S>::zeros({classes}, true);
}

#define LEGO_INSTANTIATE(S)                                                              \
  template struct EncoderParams<S>;                                                      \
  template EncoderParams<S> init_params<S>(const ModelConfig&, std::uint64_t);           \
  template EncoderParams<S> clone_params<S>(const EncoderParams<S>&);                    \
  template void reset_classifier<S>(EncoderParams<S>&, int, std::uint64_t);

LEGO_INSTANTIATE(float)
LEGO_INSTANTIATE(double)

}  // namespace lego::model
