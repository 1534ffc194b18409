#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lego/autodiff/tensor.hpp"
#include "lego/core/random.hpp"
#include "lego/model/config.hpp"
#include "lego/model/params.hpp"

namespace lego::mimic {

/// Heads of one layer appointed to the manipulation and association targets.
struct HeadPair {
  int manipulation = 0;
  int association = 1;
  friend bool operator==(const HeadPair&, const HeadPair&) = default;
};

/// Target entries are floored here before renormalization so KL stays finite.
inline constexpr double kTargetFloor = 1e-8;
/// Held-out loss below which mimicking counts as converged.
inline constexpr double kConvergedLoss = 1e-2;

struct MimicPlan {
  std::vector<HeadPair> heads;  // one pair per executed layer
  int seq_len = 32;             // 5n + 2 of the training sentences
  int steps = 2000;
  int batch = 32;
  double lr = 1e-4;
  int vocab_size = 36;          // sequences are uniform over [0, vocab_size)

  /// Heads 0 and 1 on every layer.
  static MimicPlan fixed(const model::ModelConfig& config, int seq_len);
  /// A seeded uniform choice of two distinct heads per layer.
  static MimicPlan random(const model::ModelConfig& config, int seq_len, std::uint64_t seed);

  /// Throws lego::Error when the plan does not fit the model.
  void validate(const model::ModelConfig& config) const;
};

/// Floors every entry at kTargetFloor and renormalizes each row.
std::vector<double> floor_rows(std::span<const double> values, int cols);

/// Uniform token ids for `batch` sequences of plan.seq_len.
std::vector<int> random_sequences(const MimicPlan& plan, int batch, Rng& rng);

/// The mimic loss over given per-layer attention maps [B*heads, T, T].
template <typename S>
ad::Tensor<S> mimic_loss_from_maps(ad::Tape<S>& tape, const std::vector<ad::Tensor<S>>& attention,
                                   int heads, std::span<const int> ids, int batch,
                                   const MimicPlan& plan);

/// Mean over the batch of sum_l (1/T) sum_t KL(attn[t,:] || target[t,:]) for
/// the manipulation head against the band target and the association head
/// against the match target. Throws on a degenerate attention row.
template <typename S>
ad::Tensor<S> mimic_loss(ad::Tape<S>& tape, const model::EncoderParams<S>& params,
                         const model::ModelConfig& config, std::span<const int> ids, int batch,
                         const MimicPlan& plan);

struct MimicReport {
  std::vector<double> trajectory;  // training loss per step
  double heldout_loss = 0.0;
  bool converged = false;
};

/// Adam on the mimic loss over fresh uniform sequences drawn from `rng`.
/// Non-convergence is reported, not thrown.
template <typename S>
MimicReport mimic_train(model::EncoderParams<S>& params, const model::ModelConfig& config,
                        const MimicPlan& plan, Rng& rng);

/// Mean mimic loss over `sequences` fresh sequences, no gradient.
template <typename S>
double heldout_loss(const model::EncoderParams<S>& params, const model::ModelConfig& config,
                    const MimicPlan& plan, int sequences, Rng& rng);

struct HeadDiagnostics {
  double association_mass = 0.0;  // mean row mass on other positions with the same id
  std::int64_t association_rows = 0;
  double manipulation_tv = 0.0;   // mean row total-variation distance to the band target
};

/// Designated-head measurements on one sequence, averaged over layers.
template <typename S>
HeadDiagnostics head_diagnostics(const model::EncoderParams<S>& params,
                                 const model::ModelConfig& config, const MimicPlan& plan,
                                 std::span<const int> ids);

/// "step,loss" rows, one per training step.
void write_trajectory_csv(const std::filesystem::path& path, const MimicReport& report);

}  // namespace lego::mimic
