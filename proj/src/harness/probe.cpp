#include "lego/harness/probe.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "lego/autodiff/ops.hpp"
#include "lego/core/error.hpp"
#include "lego/harness/manifest.hpp"
#include "lego/harness/train.hpp"
#include "lego/model/encoder.hpp"

namespace lego::harness {

std::string backbone_hash(const model::EncoderParams<float>& params) {
  std::string bytes;
  for (const auto& [name, t] : params.backbone_parameters()) {
    bytes += name;
    bytes += ad::to_string(t.shape());
    const auto v = t.data();
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  return sha256_hex(bytes);
}

namespace {

struct LinearHead {
  ad::Tensor<float> w;
  ad::Tensor<float> b;
};

int eval_depth(const model::ModelConfig& config) {
  Rng unused;
  return model::sample_depth(config, model::Mode::Eval, unused);
}

}  // namespace

ProbeResult probe(const model::EncoderParams<float>& params, const model::ModelConfig& config,
                  const Dataset& data, const ProbeOptions& options) {
  ProbeResult result;
  result.backbone_hash_before = backbone_hash(params);
  const int depth = eval_depth(config);
  const int n = data.train.n;
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);

  std::vector<LinearHead> heads;
  std::vector<ad::Adam<float>> optimizers;
  Rng init_rng = make_rng(options.seed, 29);
  for (int l = 0; l < depth; ++l) {
    heads.push_back({ad::Tensor<float>::randn({config.hidden, config.num_classes}, 0.02, init_rng, true),
                     ad::Tensor<float>::zeros({config.num_classes}, true)});
    optimizers.emplace_back(std::vector<ad::Tensor<float>>{heads.back().w, heads.back().b},
                            options.adam);
  }

  const auto N = data.train.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng = make_rng(options.seed, 31, static_cast<std::uint64_t>(epoch));
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t start = 0; start < N; start += static_cast<std::size_t>(options.batch)) {
      const auto b = std::min(static_cast<std::size_t>(options.batch), N - start);
      const auto view =
          gather_batch(data.train, std::span<const std::size_t>(order).subspan(start, b), all);
      ad::Tape<float> frozen(false);
      const auto trace = model::encoder_forward(frozen, params, config, view.ids, view.batch, depth);
      for (int l = 0; l < depth; ++l) {
        auto& h = heads[static_cast<std::size_t>(l)];
        ad::Tape<float> tape;
        const auto logits = model::classify_hidden(tape, trace.hidden[static_cast<std::size_t>(l)],
                                                   h.w, h.b, view.anchors);
        const auto loss = ad::cross_entropy(tape, logits, view.labels, view.mask);
        auto& opt = optimizers[static_cast<std::size_t>(l)];
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
      }
    }
  }

  result.accuracy.assign(static_cast<std::size_t>(depth), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  const auto M = data.test.size();
  constexpr std::size_t kEvalBatch = 250;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < M; start += kEvalBatch) {
    const auto b = std::min(kEvalBatch, M - start);
    rows.resize(b);
    std::iota(rows.begin(), rows.end(), start);
    const auto view = gather_batch(data.test, rows, all);
    ad::Tape<float> tape(false);
    const auto trace = model::encoder_forward(tape, params, config, view.ids, view.batch, depth);
    for (int l = 0; l < depth; ++l) {
      const auto& h = heads[static_cast<std::size_t>(l)];
      const auto logits = model::classify_hidden(tape, trace.hidden[static_cast<std::size_t>(l)],
                                                 h.w, h.b, view.anchors);
      const auto C = logits.dim(1);
      const auto lv = logits.data();
      auto& acc = result.accuracy[static_cast<std::size_t>(l)];
      for (std::size_t r = 0; r < view.labels.size(); ++r) {
        const float* row = lv.data() + static_cast<std::int64_t>(r) * C;
        const int pred = static_cast<int>(std::max_element(row, row + C) - row);
        acc[r % static_cast<std::size_t>(n)] += pred == view.labels[r] ? 1.0 : 0.0;
      }
    }
  }
  for (auto& layer : result.accuracy) {
    for (auto& a : layer) {
      a /= static_cast<double>(M);
    }
  }
  result.backbone_hash_after = backbone_hash(params);
  if (result.backbone_hash_after != result.backbone_hash_before) {
    throw Error("probe: backbone parameters changed");
  }
  return result;
}

void write_probe_csv(const std::filesystem::path& path, const ProbeResult& result) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "layer,position,accuracy\n" << std::setprecision(10);
  for (std::size_t l = 0; l < result.accuracy.size(); ++l) {
    for (std::size_t p = 0; p < result.accuracy[l].size(); ++p) {
      out << l << ',' << p << ',' << result.accuracy[l][p] << '\n';
    }
  }
}

}  // namespace lego::harness
