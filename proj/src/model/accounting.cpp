#include "lego/model/accounting.hpp"

#include <cstdio>

#include "lego/core/error.hpp"

namespace lego::model {

namespace {

constexpr std::int64_t kHard = 3;

std::int64_t linear_params(std::int64_t in, std::int64_t out) { return in * out + out; }

ModelConfig checked(const ModelConfig& config) { return config.resolved(); }

}  // namespace

std::int64_t conv_pathway_params(const ModelConfig& config) {
  const auto c = checked(config);
  if (!c.is_lego()) {
    return 0;
  }
  const std::int64_t ch = c.conv_channels;
  return linear_params(c.hidden, ch) + static_cast<std::int64_t>(c.conv_kernel) * ch +
         linear_params(ch, ch);
}

std::int64_t attention_params_per_layer(const ModelConfig& config) {
  const auto c = checked(config);
  const std::int64_t d = c.hidden;
  switch (c.variant) {
    case Variant::Vanilla:
    case Variant::WeightTied: return 4 * linear_params(d, d);
    case Variant::ConvHybrid: return 4 * linear_params(d, d) + c.conv_kernel * d;
    case Variant::LegoV0:
    case Variant::LegoV1: {
      std::int64_t n = conv_pathway_params(c) + linear_params(d, c.value_map_dim) +
                       linear_params(c.lego_merge_dim(), d);
      if (c.variant == Variant::LegoV1) {
        n += 2 * linear_params(d, c.ordinary_qk_dim);
      }
      return n;
    }
  }
  return 0;
}

ParamBreakdown param_breakdown(const ModelConfig& config) {
  const auto c = checked(config);
  const std::int64_t d = c.hidden;
  const std::int64_t layers = c.stored_layers();
  ParamBreakdown p;
  p.embeddings = static_cast<std::int64_t>(c.vocab_size) * d + static_cast<std::int64_t>(c.max_seq_len) * d;
  p.attention = layers * attention_params_per_layer(c);
  p.conv_pathway = layers * conv_pathway_params(c);
  p.feed_forward = layers * (linear_params(d, c.feed_forward_dim()) + linear_params(c.feed_forward_dim(), d));
  p.layer_norm = layers * 4 * d;
  p.classifier = c.num_classes > 0 ? linear_params(d, c.num_classes) : 0;
  p.total = p.embeddings + p.attention + p.feed_forward + p.layer_norm + p.classifier;
  return p;
}

std::int64_t param_count(const ModelConfig& config) { return param_breakdown(config).total; }

FlopsBreakdown flops_estimate(const ModelConfig& config, std::int64_t seq_len) {
  const auto c = checked(config);
  if (seq_len <= 0) {
    throw Error("flops_estimate: sequence length must be positive");
  }
  const std::int64_t T = seq_len;
  const std::int64_t d = c.hidden;
  const std::int64_t k = c.conv_kernel;
  FlopsBreakdown f;
  f.layers = c.stochastic_depth ? c.stochastic_depth->max : c.depth;
  std::int64_t proj = 0;
  std::int64_t mix = 0;
  std::int64_t conv = 0;
  switch (c.variant) {
    case Variant::Vanilla:
    case Variant::WeightTied:
    case Variant::ConvHybrid:
      proj = 4 * T * d * d;
      mix = 2 * T * T * d;
      if (c.variant == Variant::ConvHybrid) conv = T * k * d;
      break;
    case Variant::LegoV0:
    case Variant::LegoV1: {
      const std::int64_t ch = c.conv_channels;
      const std::int64_t hard = kHard * c.hardcoded_head_dim;
      proj = T * d * ch + T * ch * ch + T * d * c.value_map_dim + T * c.lego_merge_dim() * d;
      conv = T * k * ch;
      mix = T * T * hard;
      if (c.variant == Variant::LegoV1) {
        proj += 2 * T * d * c.ordinary_qk_dim;
        mix += T * T * c.ordinary_qk_dim + T * T * (c.value_map_dim - hard);
      }
      break;
    }
  }
  const std::int64_t L = f.layers;
  f.projections = L * proj;
  f.mixing = L * mix;
  f.convolution = L * conv;
  f.attention = f.projections + f.mixing + f.convolution;
  f.feed_forward = L * 2 * T * d * c.feed_forward_dim();
  f.total = f.attention + f.feed_forward;
  return f;
}

std::string format_flops_table(const ModelConfig& config, std::int64_t seq_len) {
  const auto c = checked(config);
  const auto f = flops_estimate(c, seq_len);
  const auto p = param_breakdown(c);
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "variant %s  d=%d  layers=%d  T=%lld\n",
                std::string(to_string(c.variant)).c_str(), c.hidden, f.layers,
                static_cast<long long>(seq_len));
  out += line;
  const auto row = [&](const char* name, std::int64_t v) {
    std::snprintf(line, sizeof line, "%-22s %16lld\n", name, static_cast<long long>(v));
    out += line;
  };
  row("flops.projections", f.projections);
  row("flops.mixing", f.mixing);
  row("flops.convolution", f.convolution);
  row("flops.attention", f.attention);
  row("flops.feed_forward", f.feed_forward);
  row("flops.total", f.total);
  row("params.embeddings", p.embeddings);
  row("params.attention", p.attention);
  row("params.conv_pathway", p.conv_pathway);
  row("params.feed_forward", p.feed_forward);
  row("params.layer_norm", p.layer_norm);
  row("params.classifier", p.classifier);
  row("params.total", p.total);
  return out;
}

}  // namespace lego::model
