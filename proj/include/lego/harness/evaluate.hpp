#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lego/core/vocab.hpp"
#include "lego/harness/data.hpp"
#include "lego/model/config.hpp"
#include "lego/model/params.hpp"

namespace lego::harness {

/// Predicted class for each anchor of `batch` sequences laid out back to
/// back in `ids`; anchors are flat indices b*T + t.
using Predictor = std::function<std::vector<int>(std::span<const int> ids, int batch,
                                                 std::span<const std::int64_t> anchors)>;

/// Arg-max of the classifier logits at full (eval-mode) depth.
Predictor model_predictor(const model::EncoderParams<float>& params, const model::ModelConfig& config);

/// Decodes the ids back into a sentence and resolves it exactly.
Predictor oracle_predictor(const core::Vocab& vocab);

/// Accuracy per chain position over every sequence of the split.
std::vector<double> evaluate(const EncodedSplit& split, const Predictor& predict, int batch = 250);

}  // namespace lego::harness
