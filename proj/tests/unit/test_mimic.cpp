#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "lego/attn/structures.hpp"
#include "lego/core/error.hpp"
#include "lego/mimic/mimic.hpp"
#include "lego/model/encoder.hpp"

using namespace lego;
using namespace lego::mimic;
using lego::model::ModelConfig;
using lego::model::Variant;

namespace {

ModelConfig three_head(int depth = 1) {
  ModelConfig c;
  c.depth = depth;
  c.hidden = 12;
  c.heads = 3;
  c.max_seq_len = 16;
  return c.resolved();
}

/// Row-major T×T with row i equal to `weights` centred on the diagonal
/// (offsets -2..2), truncated and renormalized, then floored.
std::vector<double> floored_band(int T) {
  const double w[5] = {1, 2, 4, 2, 1};
  std::vector<double> out(static_cast<std::size_t>(T * T), 0.0);
  for (int i = 0; i < T; ++i) {
    double total = 0;
    for (int o = -2; o <= 2; ++o) {
      if (i + o >= 0 && i + o < T) total += w[o + 2];
    }
    double row = 0;
    for (int j = 0; j < T; ++j) {
      const int o = j - i;
      const double v = (o >= -2 && o <= 2) ? w[o + 2] / total : 0.0;
      out[static_cast<std::size_t>(i * T + j)] = std::max(v, kTargetFloor);
      row += std::max(v, kTargetFloor);
    }
    for (int j = 0; j < T; ++j) out[static_cast<std::size_t>(i * T + j)] /= row;
  }
  return out;
}

}  // namespace

TEST_CASE("floored targets stay row-stochastic and positive") {
  const std::vector<double> rows{1, 0, 0, 0.5, 0.5, 0};
  const auto f = floor_rows(rows, 3);
  CHECK(f[0] == doctest::Approx(1.0 / (1.0 + 2e-8)).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(1e-8 / (1.0 + 2e-8)).epsilon(1e-12));
  CHECK(f[5] > 0.0);
  CHECK(f[3] + f[4] + f[5] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("maps equal to the targets give zero loss") {
  const int T = 9;
  MimicPlan plan;
  plan.heads = {{0, 1}};
  plan.seq_len = T;
  const std::vector<int> ids{1, 7, 7, 3, 9, 3, 3, 2, 5};
  const auto band = floored_band(T);
  const auto assoc = floor_rows(attn::build_mimic_association_target(ids).values, T);
  std::vector<double> maps;
  maps.insert(maps.end(), band.begin(), band.end());
  maps.insert(maps.end(), assoc.begin(), assoc.end());
  ad::Tape<double> tape(false);
  const std::vector<ad::Tensor<double>> attention{ad::Tensor<double>({2, T, T}, maps)};
  const double loss = mimic_loss_from_maps(tape, attention, 2, ids, 1, plan).item();
  CHECK(std::abs(loss) < 1e-12);
}

TEST_CASE("uniform manipulation head against the band has the closed-form KL") {
  const int T = 9;
  MimicPlan plan;
  plan.heads = {{0, 1}};
  plan.seq_len = T;
  const std::vector<int> ids{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto assoc = floor_rows(attn::build_mimic_association_target(ids).values, T);
  std::vector<double> maps(static_cast<std::size_t>(T * T), 1.0 / T);
  maps.insert(maps.end(), assoc.begin(), assoc.end());
  const auto band = floored_band(T);
  double expected = 0;
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < T; ++j) {
      expected += (1.0 / T) * std::log((1.0 / T) / band[static_cast<std::size_t>(t * T + j)]);
    }
  }
  expected /= T;
  ad::Tape<double> tape(false);
  const std::vector<ad::Tensor<double>> attention{ad::Tensor<double>({2, T, T}, maps)};
  const double loss = mimic_loss_from_maps(tape, attention, 2, ids, 1, plan).item();
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
  // Interior row t=4: band mass (.1,.2,.4,.2,.1) and four floored entries.
  const double z = 1.0 + 4e-8;
  const double p[5] = {.1, .2, .4, .2, .1};
  double interior = 4 * (1.0 / T) * std::log((1.0 / T) / (1e-8 / z));
  for (const double v : p) interior += (1.0 / T) * std::log((1.0 / T) / (v / z));
  double row4 = 0;
  for (int j = 0; j < T; ++j) row4 += (1.0 / T) * std::log((1.0 / T) / band[static_cast<std::size_t>(4 * T + j)]);
  CHECK(row4 == doctest::Approx(interior).epsilon(1e-12));
}

TEST_CASE("degenerate attention rows are rejected") {
  const int T = 4;
  MimicPlan plan;
  plan.heads = {{0, 1}};
  plan.seq_len = T;
  const std::vector<int> ids{1, 2, 1, 2};
  std::vector<double> maps(static_cast<std::size_t>(2 * T * T), 1.0 / T);
  for (int j = 0; j < T; ++j) maps[static_cast<std::size_t>(T + j)] = 0.0;
  ad::Tape<double> tape(false);
  const std::vector<ad::Tensor<double>> attention{ad::Tensor<double>({2, T, T}, maps)};
  CHECK_THROWS_AS(mimic_loss_from_maps(tape, attention, 2, ids, 1, plan), Error);
}

TEST_CASE("mimic loss is nonnegative and a function of the ids") {
  const auto cfg = three_head(2);
  const auto params = model::init_params<double>(cfg, 3);
  auto plan = MimicPlan::fixed(cfg, 12);
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ids = random_sequences(plan, 3, rng);
    ad::Tape<double> a(false);
    ad::Tape<double> b(false);
    const double la = mimic_loss(a, params, cfg, ids, 3, plan).item();
    const double lb = mimic_loss(b, params, cfg, ids, 3, plan).item();
    CHECK(la >= 0.0);
    CHECK(la == lb);
  }
}

TEST_CASE("non-designated heads receive no gradient and designated ones match differences") {
  const auto cfg = three_head(1);
  auto params = model::init_params<double>(cfg, 5);
  Rng perturb = make_rng(6);
  for (auto& t : params.tensors()) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] += 0.3 * normal(perturb);
  }
  params.set_requires_grad(true);
  auto plan = MimicPlan::fixed(cfg, 10);
  Rng rng = make_rng(7);
  const auto ids = random_sequences(plan, 2, rng);
  auto& layer = params.layers[0];
  const auto loss = [&](ad::Tape<double>& tape) { return mimic_loss(tape, params, cfg, ids, 2, plan); };
  const auto report = test::check_gradients({{"wq", layer.wq}, {"wk", layer.wk}}, loss);
  CHECK(report.max_rel <= 1e-4);
  // Head 2 owns columns 8..11 of the query and key maps.
  const auto gq = layer.wq.grad();
  const auto gk = layer.wk.grad();
  for (int r = 0; r < cfg.hidden; ++r) {
    for (int c = 8; c < 12; ++c) {
      CHECK(gq[static_cast<std::size_t>(r * 12 + c)] == 0.0);
      CHECK(gk[static_cast<std::size_t>(r * 12 + c)] == 0.0);
    }
  }
  // Value and output maps do not feed any attention map of a one-layer model.
  layer.wv.zero_grad();
  {
    ad::Tape<double> tape;
    tape.backward(loss(tape));
  }
  const auto gv = layer.wv.grad();
  CHECK(std::all_of(gv.begin(), gv.end(), [](double g) { return g == 0.0; }));
}

TEST_CASE("plans validate head indices and model support") {
  const auto cfg = three_head(3);
  auto plan = MimicPlan::fixed(cfg, 12);
  CHECK(plan.heads.size() == 3);
  CHECK(plan.heads[0] == HeadPair{0, 1});
  CHECK_NOTHROW(plan.validate(cfg));
  plan.heads[1] = {2, 2};
  CHECK_THROWS_AS(plan.validate(cfg), Error);
  plan.heads[1] = {0, 3};
  CHECK_THROWS_AS(plan.validate(cfg), Error);
  plan = MimicPlan::fixed(cfg, 12);
  plan.heads.pop_back();
  CHECK_THROWS_AS(plan.validate(cfg), Error);
  plan = MimicPlan::fixed(cfg, 17);
  CHECK_THROWS_AS(plan.validate(cfg), Error);

  const auto r1 = MimicPlan::random(cfg, 12, 9);
  const auto r2 = MimicPlan::random(cfg, 12, 9);
  CHECK(r1.heads == r2.heads);
  CHECK_NOTHROW(r1.validate(cfg));

  ModelConfig v0 = cfg;
  v0.variant = Variant::LegoV0;
  v0.conv_kernel = 3;
  v0 = v0.resolved();
  CHECK_THROWS_AS(MimicPlan::fixed(v0, 12).validate(v0), Error);
}

TEST_CASE("mimic training is reproducible and reduces the loss") {
  const auto cfg = three_head(1);
  auto plan = MimicPlan::fixed(cfg, 10);
  plan.steps = 60;
  plan.batch = 8;
  plan.lr = 1e-2;
  auto a = model::init_params<float>(cfg, 11);
  auto b = model::init_params<float>(cfg, 11);
  Rng ra = make_rng(12);
  Rng rb = make_rng(12);
  const auto ma = mimic_train(a, cfg, plan, ra);
  const auto mb = mimic_train(b, cfg, plan, rb);
  CHECK(ma.trajectory == mb.trajectory);
  CHECK(ma.heldout_loss == mb.heldout_loss);
  const auto na = a.named_parameters();
  const auto nb = b.named_parameters();
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto x = na[i].second.data();
    const auto y = nb[i].second.data();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  CHECK(ma.trajectory.size() == 60);
  CHECK(ma.trajectory.back() < 0.5 * ma.trajectory.front());
}

TEST_CASE("non-convergence is reported, not thrown") {
  const auto cfg = three_head(1);
  auto plan = MimicPlan::fixed(cfg, 10);
  plan.steps = 1;
  auto p = model::init_params<float>(cfg, 1);
  Rng rng = make_rng(2);
  MimicReport r;
  CHECK_NOTHROW(r = mimic_train(p, cfg, plan, rng));
  CHECK(!r.converged);
  CHECK(r.heldout_loss > kConvergedLoss);
}

TEST_CASE("head diagnostics are bounded") {
  const auto cfg = three_head(2);
  const auto p = model::init_params<float>(cfg, 1);
  const auto plan = MimicPlan::fixed(cfg, 8);
  const std::vector<int> ids{1, 6, 7, 6, 8, 9, 7, 2};
  const auto d = head_diagnostics(p, cfg, plan, ids);
  CHECK(d.association_rows == 2 * 4);
  CHECK(d.association_mass >= 0.0);
  CHECK(d.association_mass <= 1.0 + 1e-6);
  CHECK(d.manipulation_tv >= 0.0);
  CHECK(d.manipulation_tv <= 1.0 + 1e-6);
}
