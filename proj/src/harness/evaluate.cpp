#include "lego/harness/evaluate.hpp"

#include <algorithm>
#include <string>

#include "lego/core/chain.hpp"
#include "lego/core/error.hpp"
#include "lego/core/sentence.hpp"
#include "lego/model/encoder.hpp"

namespace lego::harness {

Predictor model_predictor(const model::EncoderParams<float>& params, const model::ModelConfig& config) {
  return [&params, config](std::span<const int> ids, int batch, std::span<const std::int64_t> anchors) {
    ad::Tape<float> tape(false);
    Rng unused;
    const int depth = model::sample_depth(config, model::Mode::Eval, unused);
    const auto trace = model::encoder_forward(tape, params, config, ids, batch, depth);
    const auto logits = model::classify(tape, trace, params, anchors);
    const auto C = logits.dim(1);
    const auto v = logits.data();
    std::vector<int> out(anchors.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const float* row = v.data() + static_cast<std::int64_t>(i) * C;
      out[i] = static_cast<int>(std::max_element(row, row + C) - row);
    }
    return out;
  };
}

Predictor oracle_predictor(const core::Vocab& vocab) {
  return [vocab](std::span<const int> ids, int batch, std::span<const std::int64_t> anchors) {
    const auto T = static_cast<std::int64_t>(ids.size()) / batch;
    std::vector<std::vector<int>> surface_values(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      std::string text;
      for (std::int64_t t = 0; t < T; ++t) {
        text += vocab.symbol(ids[static_cast<std::size_t>(b * T + t)]);
        text += ' ';
      }
      const auto chain = core::parse_sentence(text, vocab.group());
      const auto values = core::resolve_chain(chain);
      auto& sv = surface_values[static_cast<std::size_t>(b)];
      for (const int pos : chain.sentence_order) {
        sv.push_back(values[static_cast<std::size_t>(pos)]);
      }
    }
    std::vector<int> out(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const auto b = anchors[i] / T;
      const auto t = anchors[i] % T;
      // Clause k occupies tokens 1 + 5k .. 5 + 5k after [BOS].
      const auto k = static_cast<std::size_t>((t - 1) / 5);
      out[i] = surface_values[static_cast<std::size_t>(b)].at(k);
    }
    return out;
  };
}

std::vector<double> evaluate(const EncodedSplit& split, const Predictor& predict, int batch) {
  const auto N = split.size();
  const auto n = static_cast<std::size_t>(split.n);
  const auto T = static_cast<std::int64_t>(split.seq_len);
  std::vector<std::int64_t> correct(n, 0);
  std::vector<std::int64_t> anchors;
  for (std::size_t start = 0; start < N; start += static_cast<std::size_t>(batch)) {
    const auto b = std::min(static_cast<std::size_t>(batch), N - start);
    anchors.clear();
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        anchors.push_back(static_cast<std::int64_t>(i) * T + split.anchors[(start + i) * n + p]);
      }
    }
    const auto ids = std::span<const int>(split.ids).subspan(start * static_cast<std::size_t>(T),
                                                             b * static_cast<std::size_t>(T));
    const auto pred = predict(ids, static_cast<int>(b), anchors);
    if (pred.size() != anchors.size()) {
      throw Error("predictor returned " + std::to_string(pred.size()) + " classes for " +
                  std::to_string(anchors.size()) + " anchors");
    }
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        correct[p] += pred[i * n + p] == split.labels[(start + i) * n + p] ? 1 : 0;
      }
    }
  }
  std::vector<double> acc(n, 0.0);
  for (std::size_t p = 0; p < n && N > 0; ++p) {
    acc[p] = static_cast<double>(correct[p]) / static_cast<double>(N);
  }
  return acc;
}

}  // namespace lego::harness
