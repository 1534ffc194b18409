#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "lego/autodiff/tensor.hpp"
#include "lego/harness/config_file.hpp"
#include "lego/harness/data.hpp"
#include "lego/model/config.hpp"
#include "lego/model/params.hpp"

namespace lego::harness {

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;              // mean supervised cross entropy over the epoch
  std::vector<double> train_accuracy;   // per position, running over the epoch; supervised only
  std::vector<double> test_accuracy;    // per position, after the epoch
};

struct MetricsTable {
  int n = 0;
  std::vector<int> supervised;
  std::vector<EpochMetrics> epochs;
};

/// Header `epoch,position,split,accuracy`; train rows cover supervised
/// positions, test rows every position.
void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table);
/// Header `epoch,lr,train_loss`.
void write_loss_csv(const std::filesystem::path& path, const MetricsTable& table);

/// One batch with classifier anchors for every chain position; `mask`
/// selects the supervised ones.
struct BatchView {
  int batch = 0;
  std::vector<int> ids;
  std::vector<std::int64_t> anchors;  // (b, p) order, flat b*T + t
  std::vector<int> labels;
  std::vector<std::uint8_t> mask;
};

BatchView gather_batch(const EncodedSplit& split, std::span<const std::size_t> rows,
                       const std::vector<int>& supervised);

template <typename S>
struct BatchLoss {
  ad::Tensor<S> logits;  // [batch * n, C]
  ad::Tensor<S> loss;    // mean cross entropy over supervised anchors
};

template <typename S>
BatchLoss<S> batch_loss(ad::Tape<S>& tape, const model::EncoderParams<S>& params,
                        const model::ModelConfig& config, const BatchView& view, int depth);

struct TrainResult {
  model::ModelConfig config;
  model::EncoderParams<float> params;
  MetricsTable metrics;
};

/// Called after every epoch; returning false ends training early.
using EpochCallback = std::function<bool(const EpochMetrics&)>;

/// Adam with a per-epoch cosine schedule; each batch of batch_size sequences
/// is processed in micro batches whose gradients accumulate before the step.
/// Initial parameters come from the seed or, for init=mimicked, from the
/// configured checkpoint. Deterministic given the config.
TrainResult train(const RunConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

}  // namespace lego::harness
