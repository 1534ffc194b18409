#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "grad_audit.hpp"
#include "lego/autodiff/ops.hpp"
#include "lego/core/chain.hpp"
#include "lego/core/error.hpp"
#include "lego/core/vocab.hpp"
#include "lego/model/accounting.hpp"
#include "lego/model/checkpoint.hpp"
#include "lego/model/encoder.hpp"

using namespace lego;
using namespace lego::model;
using lego::test::tiny_config;

namespace {

ModelConfig small(Variant v, int depth = 2) {
  ModelConfig c;
  c.depth = depth;
  c.hidden = 16;
  c.heads = 4;
  c.variant = v;
  c.max_seq_len = 40;
  c.conv_kernel = 5;
  return c.resolved();
}

std::vector<int> random_ids(Rng& rng, std::size_t n, int vocab = 36) {
  std::vector<int> ids(n);
  for (auto& v : ids) v = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(vocab)));
  return ids;
}

template <typename S>
void check_row_sums(const ad::Tensor<S>& maps, double tol) {
  const auto T = maps.dim(2);
  for (std::int64_t r = 0; r < maps.numel() / T; ++r) {
    double s = 0;
    for (std::int64_t c = 0; c < T; ++c) s += maps[r * T + c];
    CHECK(std::abs(s - 1.0) <= tol);
  }
}

const std::vector<Variant> kVariants{Variant::Vanilla, Variant::WeightTied, Variant::LegoV0,
                                     Variant::LegoV1, Variant::ConvHybrid};

}  // namespace

TEST_CASE("config validation and derived widths") {
  CHECK(parse_variant("lego_v1") == Variant::LegoV1);
  CHECK_THROWS(parse_variant("bert"));
  ModelConfig c;
  c.hidden = 10;
  c.heads = 4;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("divisible"));
  c = ModelConfig{};
  c.variant = Variant::ConvHybrid;
  for (int k : {5, 11, 15}) {
    c.conv_kernel = k;
    CHECK_NOTHROW(c.validate());
  }
  c.conv_kernel = 10;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("odd"));
  c = ModelConfig{};
  c.stochastic_depth = DepthRange{2, 5};
  CHECK_THROWS(c.validate());
  c.stochastic_depth = DepthRange{1, 4};
  CHECK_NOTHROW(c.validate());

  const auto v0 = ModelConfig::base_scale(Variant::LegoV0);
  CHECK(v0.conv_channels == 576);
  CHECK(v0.hardcoded_head_dim == 64);
  CHECK(v0.value_map_dim == 192);
  const auto v1 = ModelConfig::base_scale(Variant::LegoV1);
  CHECK(v1.conv_channels == 384);
  CHECK(v1.hardcoded_head_dim == 64);
  CHECK(v1.value_map_dim == 384);
  CHECK(v1.ordinary_heads == 3);
  CHECK(v1.ordinary_qk_dim == 384);
  const auto d0 = ModelConfig::desk(Variant::LegoV0);
  CHECK(d0.conv_channels == 96);
  CHECK(d0.hardcoded_head_dim % d0.heads == 0);
  const auto d1 = ModelConfig::desk(Variant::LegoV1);
  CHECK(d1.conv_channels == 64);
  CHECK(d1.ordinary_qk_dim % 3 == 0);
}

TEST_CASE("weight tying stores one layer") {
  const auto tied = small(Variant::WeightTied, 4);
  const auto untied = small(Variant::Vanilla, 4);
  const auto pt = init_params<float>(tied, 1);
  const auto pu = init_params<float>(untied, 1);
  CHECK(pt.layers.size() == 1);
  CHECK(pu.layers.size() == 4);
  for (int l = 0; l + 1 < 4; ++l) CHECK(pt.layer(l).wq.same_storage(pt.layer(l + 1).wq));
  CHECK_FALSE(pu.layer(0).wq.same_storage(pu.layer(1).wq));
  const auto pb_t = param_breakdown(tied);
  const auto pb_u = param_breakdown(untied);
  CHECK(pb_t.attention * 4 == pb_u.attention);
}

TEST_CASE("param_count matches materialized parameters") {
  for (const auto v : kVariants) {
    for (const auto& c : {small(v), ModelConfig::desk(v)}) {
      CAPTURE(to_string(v));
      CHECK(param_count(c) == init_params<float>(c, 0).count());
    }
  }
  ModelConfig e;
  e.depth = 0;
  e.num_classes = 0;
  CHECK(param_count(e) == e.vocab_size * e.hidden + e.max_seq_len * e.hidden);
}

TEST_CASE("single token attends to itself") {
  for (const auto v : kVariants) {
    auto c = small(v, 1);
    const auto p = init_params<double>(c, 3);
    ad::Tape<double> tape(false);
    const std::vector<int> ids{7};
    const auto tr = encoder_forward(tape, p, c, ids, 1, 1);
    REQUIRE(tr.depth() == 1);
    if (tr.attention[0].defined()) {
      for (std::int64_t i = 0; i < tr.attention[0].numel(); ++i) CHECK(tr.attention[0][i] == doctest::Approx(1.0));
    }
    for (const double x : tr.output().data()) CHECK(std::isfinite(x));
  }
}

TEST_CASE("attention rows sum to one for every variant") {
  Rng rng = make_rng(4);
  for (const auto v : kVariants) {
    CAPTURE(to_string(v));
    const auto c = small(v, 3);
    const auto p = init_params<float>(c, 5);
    ad::Tape<float> tape(false);
    const auto ids = random_ids(rng, 3 * 17);
    const auto tr = encoder_forward(tape, p, c, ids, 3, 3);
    CHECK(tr.depth() == 3);
    for (const auto& a : tr.attention) {
      if (a.defined()) {
        CHECK(a.dim(0) == 3 * c.learned_heads());
        check_row_sums(a, 1e-5);
      }
    }
    if (c.is_lego()) check_row_sums(tr.hardcoded, 1e-5);
  }
}

TEST_CASE("one-layer gradient audit for every variant") {
  for (const auto v : kVariants) {
    const auto r = test::audit_model(tiny_config(v), 9);
    INFO(r.name << " worst " << r.worst);
    CHECK(r.max_rel <= 1e-4);
  }
}

TEST_CASE("lego pathways") {
  const auto c = small(Variant::LegoV0, 2);
  auto p = init_params<double>(c, 6);
  Rng rng = make_rng(7);
  ad::Tape<double> tape(false);
  // no CLS / SEP anywhere: broadcast heads fall back to uniform mixing
  std::vector<int> ids = random_ids(rng, 12, 30);
  for (auto& id : ids) id += 5;
  const auto tr = encoder_forward(tape, p, c, ids, 1, 2);
  for (const double x : tr.output().data()) CHECK(std::isfinite(x));
  for (std::int64_t i = 12 * 12; i < 3 * 144; ++i) CHECK(tr.hardcoded[i] == doctest::Approx(1.0 / 12));

  const auto x = ad::Tensor<double>::randn({1, 12, c.hidden}, 1.0, rng);
  const auto maps = hardcoded_maps<double>(ids, 1, c);
  auto zeroed = p.layers[0];
  zeroed.value_w = ad::Tensor<double>::zeros(p.layers[0].value_w.shape());
  zeroed.value_b = ad::Tensor<double>::zeros(p.layers[0].value_b.shape());
  const auto silent = hardcoded_pathway(tape, x, maps, zeroed, c);
  for (const double y : silent.data()) CHECK(y == 0.0);

  // association head: average of value-mapped rows over positions with equal ids
  std::vector<int> rep{9, 9, 12, 9, 12, 20, 3, 4, 9, 15, 4, 20};
  const auto rmaps = hardcoded_maps<double>(rep, 1, c);
  const auto out = hardcoded_pathway(tape, x, rmaps, p.layers[0], c);
  const auto values = ad::linear(tape, x, p.layers[0].value_w, p.layers[0].value_b);
  const int hd = c.hardcoded_head_dim;
  const int vw = c.value_map_dim;
  const int ow = 3 * hd;
  for (int i = 0; i < 12; ++i) {
    for (int e = 0; e < hd; ++e) {
      double s = 0;
      int cnt = 0;
      for (int j = 0; j < 12; ++j) {
        if (rep[static_cast<std::size_t>(j)] == rep[static_cast<std::size_t>(i)]) {
          s += values[j * vw + e];
          ++cnt;
        }
      }
      CHECK(out[i * ow + e] == doctest::Approx(s / cnt).epsilon(1e-12));
      // CLS head: single CLS at position 6
      CHECK(out[i * ow + hd + e] == doctest::Approx(values[6 * vw + hd + e]).epsilon(1e-12));
      // SEP head: two SEP tokens at 7 and 10
      CHECK(out[i * ow + 2 * hd + e] ==
            doctest::Approx((values[7 * vw + 2 * hd + e] + values[10 * vw + 2 * hd + e]) / 2).epsilon(1e-12));
    }
  }

  // same maps across layers, different value-map outputs
  const auto o0 = hardcoded_pathway(tape, x, rmaps, p.layers[0], c);
  const auto o1 = hardcoded_pathway(tape, x, rmaps, p.layers[1], c);
  double diff = 0;
  for (std::int64_t i = 0; i < o0.numel(); ++i) diff += std::abs(o0[i] - o1[i]);
  CHECK(diff > 1e-6);

  const auto vanilla = small(Variant::Vanilla, 1);
  const auto pv = init_params<double>(vanilla, 1);
  CHECK_THROWS_WITH(lego_attention(tape, x, maps, pv.layers[0], vanilla), doctest::Contains("variant mismatch"));
}

TEST_CASE("conv hybrid with impulse kernels equals plain attention") {
  const auto c = small(Variant::ConvHybrid, 1);
  auto p = init_params<double>(c, 8);
  auto& l = p.layers[0];
  l.qkv_kernel = ad::Tensor<double>::zeros(l.qkv_kernel.shape());
  for (int ch = 0; ch < c.hidden; ++ch) l.qkv_kernel[(c.conv_kernel / 2) * c.hidden + ch] = 1.0;
  Rng rng = make_rng(9);
  const auto x = ad::Tensor<double>::randn({2, 9, c.hidden}, 1.0, rng);
  ad::Tape<double> tape(false);
  const auto a = conv_hybrid_attention(tape, x, l, c);
  const auto b = multihead_attention(tape, x, l, c);
  for (std::int64_t i = 0; i < a.out.numel(); ++i) CHECK(a.out[i] == b.out[i]);
}

TEST_CASE("depth sampling") {
  auto c = small(Variant::WeightTied, 12);
  Rng rng = make_rng(10);
  for (int i = 0; i < 100; ++i) CHECK(sample_depth(c, Mode::Train, rng) == 12);
  c.stochastic_depth = DepthRange{6, 12};
  std::map<int, int> counts;
  constexpr int kDraws = 1000;
  for (int i = 0; i < kDraws; ++i) ++counts[sample_depth(c, Mode::Train, rng)];
  CHECK(counts.size() == 7);
  const double p = 1.0 / 7;
  const double sigma = std::sqrt(kDraws * p * (1 - p));
  for (const auto& [d, n] : counts) {
    CHECK(d >= 6);
    CHECK(d <= 12);
    CHECK(std::abs(n - kDraws * p) <= 3 * sigma);
  }
  CHECK(sample_depth(c, Mode::Eval, rng) == 12);
  const auto params = init_params<float>(c, 1);
  ad::Tape<float> tape(false);
  const std::vector<int> ids(10, 5);
  CHECK(encoder_forward(tape, params, c, ids, 1, Mode::Eval, rng).depth() == 12);
}

TEST_CASE("overlength input is rejected") {
  const auto c = small(Variant::Vanilla, 1);
  const auto p = init_params<float>(c, 1);
  ad::Tape<float> tape(false);
  const std::vector<int> ids(static_cast<std::size_t>(c.max_seq_len + 1), 5);
  CHECK_THROWS_WITH(encoder_forward(tape, p, c, ids, 1, 1), doctest::Contains("max_seq_len"));
}

TEST_CASE("classification head") {
  const core::Vocab z2(core::GroupSpec::z2());
  auto c = small(Variant::Vanilla, 2);
  c.vocab_size = z2.size();
  auto p = init_params<double>(c, 11);
  ad::Tape<double> tape(false);
  const auto t1 = core::tokenize("[BOS] a=+1; [EOS]", z2, 1);
  const auto tr = encoder_forward(tape, p, c, t1.ids, 1, 2);
  const std::vector<std::int64_t> a1{t1.clause_anchors[0]};
  CHECK(classify(tape, tr, p, a1).shape() == ad::Shape{1, 2});
  const std::vector<std::int64_t> bad{7};
  CHECK_THROWS_WITH(classify(tape, tr, p, bad), doctest::Contains("out of range"));

  const core::Vocab d3(core::GroupSpec::d3());
  auto cd = small(Variant::Vanilla, 1);
  cd.vocab_size = d3.size();
  cd.num_classes = 6;
  const auto pd = init_params<double>(cd, 12);
  Rng rng = make_rng(13);
  const auto chain = core::sample_chain(5, core::GroupSpec::d3(), rng);
  const auto td = core::tokenize(chain, d3, 5);
  const auto trd = encoder_forward(tape, pd, cd, td.ids, 1, 1);
  const std::vector<std::int64_t> ad5(td.clause_anchors.begin(), td.clause_anchors.end());
  CHECK(classify(tape, trd, pd, ad5).shape() == ad::Shape{5, 6});
}

TEST_CASE("clause shuffling only permutes logits through anchor bookkeeping") {
  const core::Vocab z2(core::GroupSpec::z2());
  auto c = small(Variant::Vanilla, 2);
  c.vocab_size = z2.size();
  auto p = init_params<double>(c, 14);
  p.pos_emb = ad::Tensor<double>::zeros(p.pos_emb.shape());
  Rng rng = make_rng(15);
  auto chain = core::sample_chain(6, core::GroupSpec::z2(), rng);
  const auto a = core::tokenize(chain, z2, 6);
  shuffle(std::span<int>(chain.sentence_order), rng);
  const auto b = core::tokenize(chain, z2, 6);
  ad::Tape<double> tape(false);
  const auto logits = [&](const core::TokenSequence& s) {
    const auto tr = encoder_forward(tape, p, c, s.ids, 1, 2);
    const std::vector<std::int64_t> anchors(s.clause_anchors.begin(), s.clause_anchors.end());
    return classify(tape, tr, p, anchors);
  };
  const auto la = logits(a);
  const auto lb = logits(b);
  for (std::int64_t i = 0; i < la.numel(); ++i) CHECK(la[i] == doctest::Approx(lb[i]).epsilon(1e-10));
}

TEST_CASE("accounting at base scale") {
  const auto v0 = ModelConfig::base_scale(Variant::LegoV0);
  const auto v1 = ModelConfig::base_scale(Variant::LegoV1);
  const auto va = ModelConfig::base_scale(Variant::Vanilla);
  CHECK(conv_pathway_params(v0) == (768 * 576 + 576) + (21 * 576) + (576 * 576 + 576));
  CHECK(param_breakdown(v0).conv_pathway == 12 * conv_pathway_params(v0));
  CHECK(param_count(v0) < param_count(v1));
  CHECK(param_count(v1) < param_count(va));
  CHECK(attention_params_per_layer(v0) < attention_params_per_layer(v1));
  CHECK(attention_params_per_layer(v1) < attention_params_per_layer(va));
  const auto f0 = flops_estimate(v0, 512), f1 = flops_estimate(v1, 512), fa = flops_estimate(va, 512);
  CHECK(f0.attention < f1.attention);
  CHECK(f1.attention < fa.attention);
  CHECK(f0.total < fa.total);
  CHECK(fa.projections == 12LL * 4 * 512 * 768 * 768);
  CHECK(fa.mixing == 12LL * 2 * 512 * 512 * 768);
  CHECK(f0.mixing == 12LL * 512 * 512 * 192);
}

TEST_CASE("flops scaling") {
  for (const auto v : kVariants) {
    const auto c = ModelConfig::desk(v);
    const auto one = flops_estimate(c, 1);
    CHECK(one.mixing == c.depth * (flops_estimate(c, 1).mixing / c.depth));
    const auto a = flops_estimate(c, 40), b = flops_estimate(c, 80);
    CHECK(b.mixing == 4 * a.mixing);
    CHECK(b.projections == 2 * a.projections);
    CHECK(b.total > a.total);
    auto deeper = c;
    deeper.depth += 1;
    CHECK(flops_estimate(deeper, 40).total > a.total);
    auto wider = c;
    wider.hidden *= 2;
    wider = wider.variant == Variant::LegoV0 || wider.variant == Variant::LegoV1
                ? [&] { ModelConfig w = ModelConfig{}; w.variant = v; w.hidden = 256; return w.resolved(); }()
                : wider.resolved();
    CHECK(flops_estimate(wider, 40).total > a.total);
  }
  const auto va = ModelConfig::desk(Variant::Vanilla);
  CHECK(flops_estimate(va, 1).mixing == va.depth * 2LL * va.hidden);
  CHECK_FALSE(format_flops_table(va, 64).empty());
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "lego_model_ckpt";
  std::filesystem::create_directories(dir);
  for (const auto v : kVariants) {
    auto c = small(v, 2);
    if (v == Variant::WeightTied) c.stochastic_depth = DepthRange{1, 2};
    const auto p = init_params<float>(c, 21);
    save_checkpoint(dir / "m.ckpt", c, p);
    const auto back = load_checkpoint<float>(dir / "m.ckpt");
    CHECK(back.config == c);
    const auto a = p.named_parameters(), b = back.params.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
    }
    const auto wide = load_checkpoint<double>(dir / "m.ckpt");
    CHECK(wide.params.tok_emb[3] == static_cast<double>(p.tok_emb[3]));
  }
  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_WITH(load_checkpoint<float>(dir / "bad.ckpt"), doctest::Contains("magic"));
  std::filesystem::remove_all(dir);
}
