#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "geoformal/gsformer/gsformer.hpp"
#include "geoformal/tensor/gradcheck.hpp"
#include "geoformal/tensor/optim.hpp"

using namespace geoformal;
using namespace geoformal::gsformer;
using namespace geoformal::tensor;

namespace {

GSFormerConfig small_config() {
  GSFormerConfig c;
  c.n_layers = 3;
  c.n_queries = 4;
  c.d = 16;
  c.n_heads = 2;
  c.ffn_hidden = 32;
  c.d_in = 12;
  c.vocab_size = 30;
  c.max_text_len = 12;
  c.sgs_layers = {1, 2};
  c.init_std = 0.2;
  return c;
}

std::vector<PretrainPair> random_batch(std::size_t b, std::size_t n, const GSFormerConfig& c, Rng rng) {
  std::vector<PretrainPair> out;
  for (std::size_t i = 0; i < b; ++i) {
    PretrainPair p;
    p.patches = Tensor::randn({n, c.d_in}, rng, 1.0);
    const std::size_t len = 3 + rng.index(5);
    for (std::size_t t = 0; t < len; ++t) p.caption.push_back(static_cast<TokenId>(4 + rng.index(c.vocab_size - 4)));
    out.push_back(std::move(p));
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(GQG, ZeroContextLeavesLearnedQueries) {
  Rng rng(1);
  auto learned = Tensor::randn({8, 6}, rng, 1);
  Linear proj{Tensor::zeros({6, 6}), Tensor::zeros({6})};
  auto out = gqg_queries(Tensor::zeros({5, 6}), learned, proj);
  EXPECT_EQ(max_abs_diff(out, learned), 0.0);
}

TEST(GQG, DependsOnPatchFeatures) {
  Rng rng(2);
  auto learned = Tensor::randn({8, 6}, rng, 1);
  Linear proj{Tensor::randn({6, 6}, rng, 1), Tensor::zeros({6})};
  auto a = gqg_queries(Tensor::randn({5, 6}, rng, 1), learned, proj);
  auto b = gqg_queries(Tensor::randn({5, 6}, rng, 1), learned, proj);
  EXPECT_GT(max_abs_diff(a, b), 1e-6);
}

TEST(GQG, GradientReachesQueriesAndProjection) {
  Rng rng(3);
  auto learned = Tensor::randn({4, 6}, rng, 1, true);
  Linear proj{Tensor::randn({6, 6}, rng, 1, true), Tensor::zeros({6}, true)};
  auto feats = Tensor::randn({5, 6}, rng, 1);
  auto f = [&] { return sum(square(gqg_queries(feats, learned, proj))); };
  f().backward();
  auto nonzero = [](const Tensor& t) {
    double s = 0;
    for (double g : t.grad()) s += std::abs(g);
    return s > 1e-8;
  };
  EXPECT_TRUE(nonzero(learned));
  EXPECT_TRUE(nonzero(proj.w));
  EXPECT_TRUE(nonzero(proj.b));
  EXPECT_LE(max_gradient_error(f, {learned, proj.w, proj.b}), 1e-5);
}

TEST(SGS, ZeroMaskIsAbsorbing) {
  Rng rng(4);
  Linear head{Tensor::randn({6, 2}, rng, 1), Tensor::zeros({2})};
  auto [m, p] = sgs_update_mask(Tensor::zeros({5}), Tensor::randn({5, 6}, rng, 1), head, 1.0, false, rng);
  for (double v : m.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.numel(), 5u);
}

TEST(SGS, SaturatedKeepLogitsKeepEverything) {
  Rng rng(5);
  Linear head{Tensor::zeros({6, 2}), Tensor::vector({30, -30})};
  auto [m, p] = sgs_update_mask(Tensor::full({7}, 1.0), Tensor::randn({7, 6}, rng, 1), head, 1.0, true, rng);
  for (double v : m.data()) EXPECT_EQ(v, 1.0);
}

TEST(SGS, HardMasksAreBinaryAndMonotone) {
  Rng rng(6);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<double> prev(n);
    for (auto& v : prev) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
    Linear head{Tensor::randn({4, 2}, rng, 2), Tensor::randn({2}, rng, 1)};
    auto [m, p] = sgs_update_mask(Tensor({n}, prev), Tensor::randn({n, 4}, rng, 1), head, 0.5 + rng.uniform(), true,
                                  rng);
    for (std::size_t j = 0; j < n; ++j) {
      ASSERT_TRUE(m[j] == 0.0 || m[j] == 1.0);
      ASSERT_LE(m[j], prev[j]);
    }
  }
}

TEST(Sparsification, HandValues) {
  SGSState ones{{Tensor::full({4}, 1), Tensor::full({4}, 1)}, {}};
  EXPECT_DOUBLE_EQ(sparsification_loss(ones).item(), 1.0);
  SGSState zeros{{Tensor::zeros({4}), Tensor::zeros({4})}, {}};
  EXPECT_DOUBLE_EQ(sparsification_loss(zeros).item(), 0.0);
  SGSState mixed{{Tensor::vector({1, 1, 0, 0}), Tensor::vector({1, 0, 0, 0})}, {}};
  EXPECT_DOUBLE_EQ(sparsification_loss(mixed).item(), 3.0 / 8.0);
}

TEST(InfoNCE, TwoPairHandFormula) {
  const double s = 5.0;
  auto eye = Tensor({2, 2}, {1, 0, 0, 1});
  const double expect = std::log(1 + std::exp(-s));
  EXPECT_NEAR(info_nce(eye, eye, Tensor::scalar(std::log(s))).item(), expect, 1e-12);
  auto same = Tensor({2, 2}, {1, 0, 1, 0});
  EXPECT_NEAR(info_nce(same, same, Tensor::scalar(std::log(s))).item(), std::log(2.0), 1e-12);
  EXPECT_THROW(info_nce(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {1, 0}), Tensor::scalar(0)), BatchTooSmall);
}

TEST(GSFormer, DefaultConfigGivesEightQueries) {
  GSFormerConfig c;
  c.vocab_size = 40;
  ParamStore ps;
  Rng init(7);
  GSFormer model(c, ps, init);
  Rng rng(8);
  const std::vector<TokenId> cap{5, 6, 7};
  auto out = model.forward(Tensor::randn({16, c.d_in}, rng, 1), cap, Rng(9), false);
  EXPECT_EQ(out.features.f_g.shape(), (Shape{8, c.d}));
  EXPECT_EQ(out.features.text_cls.shape(), (Shape{c.d}));
  EXPECT_EQ(out.caption_logits.shape(), (Shape{4, 40}));
  EXPECT_EQ(out.caption_targets, (std::vector<TokenId>{5, 6, 7, lang::Vocab::kEos}));
  EXPECT_EQ(out.state.stages(), 3u);
}

TEST(GSFormer, StageZeroIsAllOnesAndHardMasksShrink) {
  auto c = small_config();
  ParamStore ps;
  Rng init(10);
  GSFormer model(c, ps, init);
  Rng data(11);
  for (int t = 0; t < 20; ++t) {
    auto out = model.forward(Tensor::randn({9, c.d_in}, data, 1), std::vector<TokenId>{4, 5}, Rng(t), true);
    for (double v : out.state.masks[0].data()) EXPECT_EQ(v, 1.0);
    for (std::size_t s = 1; s < out.state.stages(); ++s) {
      for (std::size_t j = 0; j < 9; ++j) EXPECT_LE(out.state.masks[s][j], out.state.masks[s - 1][j]);
    }
    EXPECT_EQ(out.features.f_g.shape(), (Shape{c.n_queries, c.d}));
  }
}

TEST(GSFormer, NoSgsLayersIsDeterministic) {
  auto c = small_config();
  c.sgs_layers.clear();
  ParamStore ps;
  Rng init(12);
  GSFormer model(c, ps, init);
  Rng data(13);
  auto patches = Tensor::randn({6, c.d_in}, data, 1);
  const std::vector<TokenId> cap{7, 8, 9};
  auto a = model.forward(patches, cap, Rng(1), true);
  auto b = model.forward(patches, cap, Rng(2), true);
  EXPECT_EQ(a.state.stages(), 1u);
  for (double v : a.state.masks[0].data()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(max_abs_diff(a.features.f_g, b.features.f_g), 0.0);
  EXPECT_EQ(max_abs_diff(a.caption_logits, b.caption_logits), 0.0);
}

TEST(GSFormer, DroppingPatchesChangesQueries) {
  auto c = small_config();
  c.sgs_layers = {1};
  ParamStore ps;
  Rng init(14);
  GSFormer model(c, ps, init);
  Rng data(15);
  auto patches = Tensor::randn({6, c.d_in}, data, 1);
  const std::vector<TokenId> cap{7, 8};
  auto bias = ps.get("gsf.sgs1.b");
  bias.mutable_data()[0] = 50;
  auto kept = model.forward(patches, cap, Rng(3), true);
  bias.mutable_data()[0] = -50;
  auto dropped = model.forward(patches, cap, Rng(3), true);
  EXPECT_EQ(kept.all_masked_rows, 0u);
  EXPECT_GT(dropped.all_masked_rows, 0u);
  EXPECT_GT(max_abs_diff(kept.features.f_g, dropped.features.f_g), 1e-6);
  EXPECT_EQ(dropped.features.f_g.shape(), kept.features.f_g.shape());
  for (double v : dropped.features.f_g.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(GSFormer, GeometryFeaturesIgnoreCaption) {
  auto c = small_config();
  ParamStore ps;
  Rng init(16);
  GSFormer model(c, ps, init);
  Rng data(17);
  auto patches = Tensor::randn({6, c.d_in}, data, 1);
  auto a = model.forward(patches, std::vector<TokenId>{7, 8}, Rng(4), false);
  auto b = model.forward(patches, std::vector<TokenId>{9, 10, 11, 12}, Rng(4), false);
  auto g = model.encode_geometry(patches, Rng(4), false);
  EXPECT_LE(max_abs_diff(a.features.f_g, b.features.f_g), 1e-12);
  EXPECT_LE(max_abs_diff(a.features.f_g, g), 1e-12);
}

TEST(GSFormer, RejectsOutOfVocabCaption) {
  auto c = small_config();
  ParamStore ps;
  Rng init(18);
  GSFormer model(c, ps, init);
  EXPECT_THROW(model.forward(Tensor::zeros({3, c.d_in}), std::vector<TokenId>{99}, Rng(1), false),
               lang::OutOfVocab);
  EXPECT_THROW(model.forward(Tensor::zeros({3, 5}), std::vector<TokenId>{4}, Rng(1), false), ShapeMismatch);
}

TEST(Alignment, CaptionLossVanishesForCorrectLogits) {
  auto c = small_config();
  ParamStore ps;
  Rng init(19);
  GSFormer model(c, ps, init);
  Rng rng(20);
  std::vector<ForwardResult> batch(2);
  for (auto& r : batch) {
    r.features.f_g = Tensor::randn({c.n_queries, c.d}, rng, 1);
    r.features.text_cls = Tensor::randn({c.d}, rng, 1);
    r.caption_targets = {5, 9, 2};
    std::vector<double> v(3 * c.vocab_size, 0.0);
    for (std::size_t i = 0; i < 3; ++i) v[i * c.vocab_size + static_cast<std::size_t>(r.caption_targets[i])] = 40;
    r.caption_logits = Tensor({3, c.vocab_size}, v);
  }
  auto [lc, lm, lg] = model.alignment_loss(batch);
  EXPECT_LT(lg.item(), 1e-12);
  EXPECT_GE(lc.item(), 0.0);
  EXPECT_GE(lm.item(), 0.0);
  EXPECT_THROW(model.alignment_loss({batch[0]}), BatchTooSmall);
}

TEST(Alignment, PermutationInvariant) {
  auto c = small_config();
  ParamStore ps;
  Rng init(21);
  GSFormer model(c, ps, init);
  auto batch = random_batch(5, 7, c, Rng(22));
  std::vector<ForwardResult> results;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    results.push_back(model.forward(batch[i].patches, batch[i].caption, Rng(i), false));
  }
  auto [a1, a2, a3] = model.alignment_loss(results);
  std::vector<ForwardResult> perm{results[3], results[0], results[4], results[2], results[1]};
  auto [b1, b2, b3] = model.alignment_loss(perm);
  EXPECT_NEAR(a1.item(), b1.item(), 1e-12);
  EXPECT_NEAR(a2.item(), b2.item(), 1e-12);
  EXPECT_NEAR(a3.item(), b3.item(), 1e-12);
}

TEST(PretrainLoss, LambdaComposition) {
  auto c = small_config();
  auto batch = random_batch(3, 6, c, Rng(23));
  LossBreakdown base, doubled, zero;
  for (double lam : {0.0, 0.5, 1.0}) {
    auto cc = c;
    cc.lambda = lam;
    ParamStore ps;
    Rng init(24);
    GSFormer model(cc, ps, init);
    auto l = model.pretrain_loss(batch, Rng(25));
    (lam == 0.0 ? zero : lam == 0.5 ? base : doubled) = l;
  }
  EXPECT_EQ(zero.l_total.item(), zero.l_align.item());
  EXPECT_NEAR(doubled.l_total.item() - base.l_total.item(), 0.5 * base.l_spr.item(), 1e-12);
  EXPECT_GE(base.l_spr.item(), 0.0);
  EXPECT_LE(base.l_spr.item(), 1.0);
  const auto& w = c.align;
  EXPECT_NEAR(base.l_align.item(),
              w.contrast * base.l_contrast.item() + w.match * base.l_match.item() + w.caption * base.l_caption.item(),
              1e-12);
  for (double v : {base.l_contrast.item(), base.l_match.item(), base.l_caption.item()}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(PretrainLoss, FullGraphGradientMatchesFiniteDifferences) {
  auto c = small_config();
  c.n_layers = 2;
  c.sgs_layers = {1};
  c.d = 8;
  c.ffn_hidden = 16;
  ParamStore ps;
  Rng init(26);
  GSFormer model(c, ps, init);
  auto batch = random_batch(2, 5, c, Rng(27));
  auto f = [&] { return model.pretrain_loss(batch, Rng(28), false).l_total; };
  Rng dirs(29);
  for (int p = 0; p < 50; ++p) {
    // Random point: jitter every parameter, then probe a random direction.
    Rng jitter = Rng(30).split(static_cast<std::uint64_t>(p));
    std::vector<std::vector<double>> saved;
    for (auto& t : ps.all()) {
      saved.emplace_back(t.data().begin(), t.data().end());
      for (auto& v : t.mutable_data()) v += 0.05 * jitter.normal();
    }
    EXPECT_LE(directional_gradient_error(f, ps.all(), dirs), 1e-3) << "point " << p;
    auto all = ps.all();
    for (std::size_t k = 0; k < all.size(); ++k) std::ranges::copy(saved[k], all[k].mutable_data().begin());
  }
  auto logits = ps.get("gsf.sgs1.w");
  EXPECT_LE(max_gradient_error(f, {logits, ps.get("gsf.queries"), ps.get("gsf.logit_scale")}), 1e-3);
}

TEST(PretrainLoss, TrainingLowersMovingAverage) {
  auto c = small_config();
  ParamStore ps;
  Rng init(31);
  GSFormer model(c, ps, init);
  auto batch = random_batch(32, 8, c, Rng(32));
  Adam opt(ps.all(), {.lr = 3e-3});
  std::vector<double> history;
  for (int step = 0; step < 200; ++step) {
    auto l = model.pretrain_loss(batch, Rng(33).split(static_cast<std::uint64_t>(step)));
    ASSERT_TRUE(std::isfinite(l.l_total.item()));
    history.push_back(l.l_total.item());
    l.l_total.backward();
    opt.step();
  }
  auto ma = [&](std::size_t end) {
    return std::accumulate(history.begin() + static_cast<std::ptrdiff_t>(end - 10),
                           history.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
           10.0;
  };
  EXPECT_LT(ma(200), ma(10));
  EXPECT_LT(ma(200), ma(100));
}

TEST(Config, JsonRoundTripAndValidation) {
  GSFormerConfig c = small_config();
  c.align = {0.5, 2.0, 1.0};
  nlohmann::json j = c;
  auto back = j.get<GSFormerConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["sgs_layers"] = {0, 1};
  EXPECT_THROW(j.get<GSFormerConfig>(), ConfigError);
  j = c;
  j["lambda"] = -1;
  EXPECT_THROW(j.get<GSFormerConfig>(), ConfigError);
  j = c;
  j["bogus"] = 1;
  EXPECT_THROW(j.get<GSFormerConfig>(), ConfigError);
  j = c;
  j["n_heads"] = 3;
  EXPECT_THROW(j.get<GSFormerConfig>(), ConfigError);
}
