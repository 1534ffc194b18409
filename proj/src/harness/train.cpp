#include "lego/harness/train.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "lego/autodiff/adam.hpp"
#include "lego/autodiff/ops.hpp"
#include "lego/core/error.hpp"
#include "lego/harness/evaluate.hpp"
#include "lego/model/checkpoint.hpp"
#include "lego/model/encoder.hpp"

namespace lego::harness {

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << header << '\n' << std::setprecision(10);
  return out;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table) {
  auto out = open_csv(path, "epoch,position,split,accuracy");
  for (const auto& e : table.epochs) {
    for (const int p : table.supervised) {
      out << e.epoch << ',' << p << ",train," << e.train_accuracy[static_cast<std::size_t>(p)] << '\n';
    }
    for (int p = 0; p < table.n; ++p) {
      out << e.epoch << ',' << p << ",test," << e.test_accuracy[static_cast<std::size_t>(p)] << '\n';
    }
  }
}

void write_loss_csv(const std::filesystem::path& path, const MetricsTable& table) {
  auto out = open_csv(path, "epoch,lr,train_loss");
  for (const auto& e : table.epochs) {
    out << e.epoch << ',' << e.lr << ',' << e.train_loss << '\n';
  }
}

BatchView gather_batch(const EncodedSplit& split, std::span<const std::size_t> rows,
                       const std::vector<int>& supervised) {
  const auto n = static_cast<std::size_t>(split.n);
  const auto T = static_cast<std::size_t>(split.seq_len);
  std::vector<std::uint8_t> is_sup(n, 0);
  for (const int p : supervised) {
    is_sup.at(static_cast<std::size_t>(p)) = 1;
  }
  BatchView v;
  v.batch = static_cast<int>(rows.size());
  v.ids.reserve(rows.size() * T);
  v.anchors.reserve(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    const auto seq = split.sequence(r);
    v.ids.insert(v.ids.end(), seq.begin(), seq.end());
    for (std::size_t p = 0; p < n; ++p) {
      v.anchors.push_back(static_cast<std::int64_t>(i * T) + split.anchors[r * n + p]);
      v.labels.push_back(split.labels[r * n + p]);
      v.mask.push_back(is_sup[p]);
    }
  }
  return v;
}

template <typename S>
BatchLoss<S> batch_loss(ad::Tape<S>& tape, const model::EncoderParams<S>& params,
                        const model::ModelConfig& config, const BatchView& view, int depth) {
  const auto trace = model::encoder_forward(tape, params, config, view.ids, view.batch, depth);
  BatchLoss<S> out;
  out.logits = model::classify(tape, trace, params, view.anchors);
  out.loss = ad::cross_entropy(tape, out.logits, view.labels, view.mask);
  return out;
}

template BatchLoss<float> batch_loss(ad::Tape<float>&, const model::EncoderParams<float>&,
                                     const model::ModelConfig&, const BatchView&, int);
template BatchLoss<double> batch_loss(ad::Tape<double>&, const model::EncoderParams<double>&,
                                      const model::ModelConfig&, const BatchView&, int);

TrainResult train(const RunConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  const TrainConfig& tc = config.train;
  tc.validate();
  if (data.train.n != tc.n || data.test.n != tc.n) {
    throw Error("dataset/config n mismatch: dataset n=" + std::to_string(data.train.n) +
                ", config n=" + std::to_string(tc.n));
  }
  TrainResult result;
  result.config = config.bound_model();
  if (tc.init == Init::Mimicked) {
    auto ckpt = model::load_checkpoint<float>(tc.init_checkpoint);
    if (!(ckpt.config == result.config)) {
      throw Error("init checkpoint architecture differs from the configured model");
    }
    result.params = std::move(ckpt.params);
  } else {
    result.params = model::init_params<float>(result.config, tc.seed);
  }
  auto& params = result.params;
  const auto& cfg = result.config;
  params.set_requires_grad(true);

  const auto supervised = tc.supervised_positions();
  result.metrics.n = tc.n;
  result.metrics.supervised = supervised;
  const std::size_t n = static_cast<std::size_t>(tc.n);

  ad::Adam<float> adam(params.tensors(), tc.adam);
  const auto N = data.train.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng depth_rng = make_rng(tc.seed, 23);
  const auto predictor = model_predictor(params, cfg);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = ad::cosine_lr(tc.adam.lr, epoch, tc.t_max);
    adam.set_lr(m.lr);
    Rng shuffle_rng = make_rng(tc.seed, 21, static_cast<std::uint64_t>(epoch));
    shuffle(std::span<std::size_t>(order), shuffle_rng);

    double loss_sum = 0.0;
    std::vector<std::int64_t> correct(n, 0);
    for (std::size_t start = 0; start < N; start += static_cast<std::size_t>(tc.batch_size)) {
      const auto bsz = std::min(static_cast<std::size_t>(tc.batch_size), N - start);
      const int depth = model::sample_depth(cfg, model::Mode::Train, depth_rng);
      adam.zero_grad();
      for (std::size_t ms = 0; ms < bsz; ms += static_cast<std::size_t>(tc.micro_batch)) {
        const auto msz = std::min(static_cast<std::size_t>(tc.micro_batch), bsz - ms);
        const auto view = gather_batch(
            data.train, std::span<const std::size_t>(order).subspan(start + ms, msz), supervised);
        ad::Tape<float> tape;
        const auto bl = batch_loss(tape, params, cfg, view, depth);
        tape.backward(ad::scale(tape, bl.loss, static_cast<double>(msz) / static_cast<double>(bsz)));
        loss_sum += static_cast<double>(bl.loss.item()) * static_cast<double>(msz);
        const auto C = bl.logits.dim(1);
        const auto lv = bl.logits.data();
        for (std::size_t r = 0; r < view.labels.size(); ++r) {
          if (view.mask[r] == 0) {
            continue;
          }
          const float* row = lv.data() + static_cast<std::int64_t>(r) * C;
          const int pred = static_cast<int>(std::max_element(row, row + C) - row);
          correct[r % n] += pred == view.labels[r] ? 1 : 0;
        }
      }
      adam.step();
    }
    m.train_loss = loss_sum / static_cast<double>(N);
    m.train_accuracy.assign(n, 0.0);
    for (const int p : supervised) {
      m.train_accuracy[static_cast<std::size_t>(p)] =
          static_cast<double>(correct[static_cast<std::size_t>(p)]) / static_cast<double>(N);
    }
    m.test_accuracy = evaluate(data.test, predictor);
    const bool more = !on_epoch || on_epoch(m);
    result.metrics.epochs.push_back(std::move(m));
    if (!more) {
      break;
    }
  }
  params.zero_grad();
  params.set_requires_grad(false);
  return result;
}

}  // namespace lego::harness
