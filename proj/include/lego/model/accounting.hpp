#pragma once

#include <cstdint>
#include <string>

#include "lego/model/config.hpp"

namespace lego::model {

/// Trainable parameters by component, model totals.
struct ParamBreakdown {
  std::int64_t embeddings = 0;
  std::int64_t attention = 0;     // whole attention sublayer, all stored layers
  std::int64_t conv_pathway = 0;  // LEGO conv pathway part of `attention`
  std::int64_t feed_forward = 0;
  std::int64_t layer_norm = 0;
  std::int64_t classifier = 0;
  std::int64_t total = 0;
};

/// Multiply-adds of one forward pass over a single sequence of length T.
struct FlopsBreakdown {
  std::int64_t projections = 0;  // Q/K/V/O, value maps, pathway linears
  std::int64_t mixing = 0;       // score and attention-weighted sums (the T^2 terms)
  std::int64_t convolution = 0;  // depthwise taps
  std::int64_t attention = 0;    // projections + mixing + convolution
  std::int64_t feed_forward = 0;
  std::int64_t total = 0;
  int layers = 0;
};

ParamBreakdown param_breakdown(const ModelConfig& config);
std::int64_t param_count(const ModelConfig& config);

/// Attention-sublayer parameters of a single layer.
std::int64_t attention_params_per_layer(const ModelConfig& config);
/// (in*c + c) + k*c + (c*c + c) for the LEGO conv pathway, 0 otherwise.
std::int64_t conv_pathway_params(const ModelConfig& config);

/// Counts every executed layer (the stochastic-depth maximum when set).
FlopsBreakdown flops_estimate(const ModelConfig& config, std::int64_t seq_len);

/// Plain-text table with one row per component.
std::string format_flops_table(const ModelConfig& config, std::int64_t seq_len);

}  // namespace lego::model
