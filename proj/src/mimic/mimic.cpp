#include "lego/mimic/mimic.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>

#include "lego/attn/structures.hpp"
#include "lego/autodiff/adam.hpp"
#include "lego/autodiff/ops.hpp"
#include "lego/core/error.hpp"
#include "lego/model/encoder.hpp"

namespace lego::mimic {

using model::ModelConfig;

namespace {

int eval_depth(const ModelConfig& config) {
  Rng unused;
  return model::sample_depth(config, model::Mode::Eval, unused);
}

}  // namespace

MimicPlan MimicPlan::fixed(const ModelConfig& config, int seq_len) {
  MimicPlan plan;
  plan.heads.assign(static_cast<std::size_t>(eval_depth(config)), HeadPair{});
  plan.seq_len = seq_len;
  plan.vocab_size = config.vocab_size;
  return plan;
}

MimicPlan MimicPlan::random(const ModelConfig& config, int seq_len, std::uint64_t seed) {
  MimicPlan plan = fixed(config, seq_len);
  const int h = config.learned_heads();
  if (h < 2) {
    throw Error("mimic: model has fewer than two learned heads");
  }
  Rng rng = make_rng(seed, 13);
  for (auto& pair : plan.heads) {
    pair.manipulation = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(h)));
    const int other = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(h - 1)));
    pair.association = other >= pair.manipulation ? other + 1 : other;
  }
  return plan;
}

void MimicPlan::validate(const ModelConfig& config) const {
  const int h = config.learned_heads();
  if (h < 2) {
    throw Error("mimic: model has fewer than two learned heads");
  }
  const int depth = eval_depth(config);
  if (static_cast<int>(heads.size()) != depth) {
    throw Error("mimic: plan covers " + std::to_string(heads.size()) + " layers, model runs " +
                std::to_string(depth));
  }
  for (const auto& p : heads) {
    if (p.manipulation == p.association) {
      throw Error("mimic: designated heads must be distinct");
    }
    if (p.manipulation < 0 || p.manipulation >= h || p.association < 0 || p.association >= h) {
      throw Error("mimic: head index outside [0, " + std::to_string(h) + ")");
    }
  }
  if (seq_len < 1 || seq_len > config.max_seq_len) {
    throw Error("mimic: sequence length outside [1, max_seq_len]");
  }
  if (vocab_size < 1 || vocab_size > config.vocab_size) {
    throw Error("mimic: sequence vocabulary exceeds the model vocabulary");
  }
  if (steps < 0 || batch < 1 || !(lr > 0.0)) {
    throw Error("mimic: steps, batch and lr must be positive");
  }
}

std::vector<double> floor_rows(std::span<const double> values, int cols) {
  std::vector<double> out(values.begin(), values.end());
  for (auto& v : out) {
    v = std::max(v, kTargetFloor);
  }
  return attn::row_normalize(out, cols);
}

std::vector<int> random_sequences(const MimicPlan& plan, int batch, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(batch) * static_cast<std::size_t>(plan.seq_len));
  for (auto& id : ids) {
    id = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(plan.vocab_size)));
  }
  return ids;
}

namespace {

/// Flat row indices of the designated heads in a [B*h*T, T] view, ordered
/// (batch, manipulation rows, association rows), and the matching targets.
template <typename S>
struct LayerSelection {
  std::vector<std::int64_t> rows;
  ad::Tensor<S> target;
};

template <typename S>
LayerSelection<S> select_layer(std::span<const int> ids, int batch, int heads, int T,
                               const HeadPair& pair, const std::vector<double>& band) {
  LayerSelection<S> sel;
  const auto TT = static_cast<std::size_t>(T) * static_cast<std::size_t>(T);
  sel.rows.reserve(static_cast<std::size_t>(2 * batch * T));
  std::vector<S> target;
  target.reserve(2 * static_cast<std::size_t>(batch) * TT);
  for (int b = 0; b < batch; ++b) {
    for (const int head : {pair.manipulation, pair.association}) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * heads + head) * T;
      for (int t = 0; t < T; ++t) {
        sel.rows.push_back(base + t);
      }
    }
    target.insert(target.end(), band.begin(), band.end());
    const auto seq = ids.subspan(static_cast<std::size_t>(b) * static_cast<std::size_t>(T),
                                 static_cast<std::size_t>(T));
    const auto assoc = floor_rows(attn::build_mimic_association_target(seq).values, T);
    target.insert(target.end(), assoc.begin(), assoc.end());
  }
  sel.target = ad::Tensor<S>({2 * static_cast<std::int64_t>(batch) * T, T}, std::move(target));
  return sel;
}

template <typename S>
void require_rows(const ad::Tensor<S>& rows, int T) {
  const auto v = rows.data();
  for (std::size_t r = 0; r < v.size(); r += static_cast<std::size_t>(T)) {
    double total = 0.0;
    for (int c = 0; c < T; ++c) {
      total += static_cast<double>(v[r + static_cast<std::size_t>(c)]);
    }
    if (!(total > 0.5)) {
      throw Error("mimic_loss: degenerate attention row");
    }
  }
}

template <typename S>
model::ForwardTrace<S> run(ad::Tape<S>& tape, const model::EncoderParams<S>& params,
                           const ModelConfig& config, std::span<const int> ids, int batch) {
  return model::encoder_forward(tape, params, config, ids, batch, eval_depth(config));
}

}  // namespace

template <typename S>
ad::Tensor<S> mimic_loss_from_maps(ad::Tape<S>& tape, const std::vector<ad::Tensor<S>>& attention,
                                   int heads, std::span<const int> ids, int batch,
                                   const MimicPlan& plan) {
  const int T = plan.seq_len;
  if (ids.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(T)) {
    throw Error("mimic_loss: ids do not hold batch sequences of the plan length");
  }
  if (attention.size() != plan.heads.size()) {
    throw Error("mimic_loss: plan and attention cover different layer counts");
  }
  const auto band = floor_rows(attn::build_manipulation_target(T).values, T);
  ad::Tensor<S> total;
  for (std::size_t l = 0; l < attention.size(); ++l) {
    const auto& probs = attention[l];
    if (!probs.defined() || probs.shape() != ad::Shape{static_cast<std::int64_t>(batch) * heads, T, T}) {
      throw Error("mimic_loss: attention maps have the wrong shape");
    }
    const auto sel = select_layer<S>(ids, batch, heads, T, plan.heads[l], band);
    const auto flat = ad::reshape(tape, probs, {probs.dim(0) * T, T});
    const auto rows = ad::index_select0(tape, flat, sel.rows);
    require_rows(rows, T);
    const auto kl = ad::kl_rows(tape, rows, sel.target);
    total = total.defined() ? ad::add(tape, total, kl) : kl;
  }
  return ad::scale(tape, total, 1.0 / (static_cast<double>(batch) * T));
}

template <typename S>
ad::Tensor<S> mimic_loss(ad::Tape<S>& tape, const model::EncoderParams<S>& params,
                         const ModelConfig& config, std::span<const int> ids, int batch,
                         const MimicPlan& plan) {
  plan.validate(config);
  if (ids.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(plan.seq_len)) {
    throw Error("mimic_loss: ids do not hold batch sequences of the plan length");
  }
  const auto trace = run(tape, params, config, ids, batch);
  return mimic_loss_from_maps(tape, trace.attention, trace.learned_heads, ids, batch, plan);
}

template <typename S>
double heldout_loss(const model::EncoderParams<S>& params, const ModelConfig& config,
                    const MimicPlan& plan, int sequences, Rng& rng) {
  double total = 0.0;
  int done = 0;
  while (done < sequences) {
    const int b = std::min(plan.batch, sequences - done);
    const auto ids = random_sequences(plan, b, rng);
    ad::Tape<S> tape(false);
    total += static_cast<double>(mimic_loss(tape, params, config, ids, b, plan).item()) * b;
    done += b;
  }
  return total / static_cast<double>(sequences);
}

template <typename S>
MimicReport mimic_train(model::EncoderParams<S>& params, const ModelConfig& config,
                        const MimicPlan& plan, Rng& rng) {
  plan.validate(config);
  params.set_requires_grad(true);
  ad::Adam<S> adam(params.tensors(), ad::AdamConfig{.lr = plan.lr});
  MimicReport report;
  report.trajectory.reserve(static_cast<std::size_t>(plan.steps));
  for (int step = 0; step < plan.steps; ++step) {
    const auto ids = random_sequences(plan, plan.batch, rng);
    ad::Tape<S> tape;
    const auto loss = mimic_loss(tape, params, config, ids, plan.batch, plan);
    adam.zero_grad();
    tape.backward(loss);
    adam.step();
    report.trajectory.push_back(static_cast<double>(loss.item()));
  }
  params.zero_grad();
  report.heldout_loss = heldout_loss(params, config, plan, 256, rng);
  report.converged = report.heldout_loss < kConvergedLoss;
  return report;
}

template <typename S>
HeadDiagnostics head_diagnostics(const model::EncoderParams<S>& params, const ModelConfig& config,
                                 const MimicPlan& plan, std::span<const int> ids) {
  plan.validate(config);
  const int T = static_cast<int>(ids.size());
  ad::Tape<S> tape(false);
  const auto trace = run(tape, params, config, ids, 1);
  const auto band = attn::build_manipulation_target(T);
  HeadDiagnostics d;
  double mass = 0.0;
  double tv = 0.0;
  for (int l = 0; l < trace.depth(); ++l) {
    const auto probs = trace.attention[static_cast<std::size_t>(l)].data();
    const auto& pair = plan.heads[static_cast<std::size_t>(l)];
    const auto at = [&](int head, int i, int j) {
      return static_cast<double>(
          probs[(static_cast<std::size_t>(head) * T + static_cast<std::size_t>(i)) * T +
                static_cast<std::size_t>(j)]);
    };
    for (int i = 0; i < T; ++i) {
      double row_tv = 0.0;
      for (int j = 0; j < T; ++j) {
        row_tv += std::abs(at(pair.manipulation, i, j) - band.at(i, j));
      }
      tv += 0.5 * row_tv;
      double matched = 0.0;
      bool has_match = false;
      for (int j = 0; j < T; ++j) {
        if (j != i && ids[static_cast<std::size_t>(j)] == ids[static_cast<std::size_t>(i)]) {
          has_match = true;
          matched += at(pair.association, i, j);
        }
      }
      if (has_match) {
        mass += matched;
        ++d.association_rows;
      }
    }
  }
  d.manipulation_tv = tv / (static_cast<double>(trace.depth()) * T);
  d.association_mass = d.association_rows > 0 ? mass / static_cast<double>(d.association_rows) : 0.0;
  return d;
}

void write_trajectory_csv(const std::filesystem::path& path, const MimicReport& report) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "step,loss\n" << std::setprecision(10);
  for (std::size_t i = 0; i < report.trajectory.size(); ++i) {
    out << i + 1 << ',' << report.trajectory[i] << '\n';
  }
}

#define LEGO_INSTANTIATE_MIMIC(S)                                                                  \
  template ad::Tensor<S> mimic_loss_from_maps(ad::Tape<S>&, const std::vector<ad::Tensor<S>>&,     \
                                              int, std::span<const int>, int, const MimicPlan&);   \
  template ad::Tensor<S> mimic_loss(ad::Tape<S>&, const model::EncoderParams<S>&,                \
                                    const ModelConfig&, std::span<const int>, int,                 \
                                    const MimicPlan&);                                             \
  template double heldout_loss(const model::EncoderParams<S>&, const ModelConfig&,                 \
                               const MimicPlan&, int, Rng&);                                       \
  template MimicReport mimic_train(model::EncoderParams<S>&, const ModelConfig&, const MimicPlan&, \
                                   Rng&);                                                          \
  template HeadDiagnostics head_diagnostics(const model::EncoderParams<S>&, const ModelConfig&,    \
                                            const MimicPlan&, std::span<const int>);

LEGO_INSTANTIATE_MIMIC(float)
LEGO_INSTANTIATE_MIMIC(double)

#undef LEGO_INSTANTIATE_MIMIC

}  // namespace lego::mimic
