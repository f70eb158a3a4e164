#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "weakmcn/error.hpp"
#include "weakmcn/numcore/gradcheck.hpp"
#include "weakmcn/rng.hpp"
#include "weakmcn/synthscenes/scene.hpp"
#include "weakmcn/wrec/anchors.hpp"
#include "weakmcn/wrec/detector.hpp"
#include "weakmcn/wrec/text.hpp"

using namespace weakmcn;
using namespace weakmcn::wrec;
using nc::Shape;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

ParamStore text_store(std::uint64_t seed) {
  ParamStore s;
  Rng rng(seed);
  init_text_params(s, TextConfig{.vocab_size = 19, .embed_dim = 6, .text_dim = 5}, rng);
  return s;
}

double atc_value(std::vector<double> pos_sims, std::vector<std::vector<double>> neg_sims, double tau, bool literal = false) {
  // Text is the unit vector e0, so each similarity is the first coordinate of its anchor.
  Graph g;
  std::vector<AtcSample> samples;
  for (std::size_t i = 0; i < pos_sims.size(); ++i) {
    Tensor t(Shape{2}), p(Shape{2}), n(Shape{neg_sims[i].size(), 2});
    t[0] = 1;
    p[0] = pos_sims[i];
    for (std::size_t j = 0; j < neg_sims[i].size(); ++j) n[j * 2] = neg_sims[i][j];
    samples.push_back({g.constant(p), g.constant(t), g.constant(n)});
  }
  return g.value(atc_loss(g, samples, tau, literal)).item();
}

}  // namespace

TEST(Text, SingleTokenIsLinearOfEmbedding) {
  const ParamStore s = text_store(1);
  Graph g;
  nc::Binder bind(g, s, nc::Binder::none());
  const Tensor& f = g.value(encode_text(bind, {4}));
  const auto& e = s.get("text.embed");
  const auto& w = s.get("text.proj.w");
  const auto& b = s.get("text.proj.b");
  for (std::size_t i = 0; i < 5; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < 6; ++k) acc += w[i * 6 + k] * e[4 * 6 + k];
    EXPECT_NEAR(f[i], acc, 1e-12);
  }
}

TEST(Text, PermutationInvariantAndErrors) {
  const ParamStore s = text_store(2);
  Graph g;
  nc::Binder bind(g, s, nc::Binder::none());
  const Tensor a = g.value(encode_text(bind, {1, 9, 14}));
  const Tensor b = g.value(encode_text(bind, {14, 1, 9}));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  EXPECT_THROW(encode_text(bind, {}), std::invalid_argument);
  EXPECT_THROW(encode_text(bind, {19}), std::out_of_range);
}

namespace {

// Identity projections on a D = C = 2 space.
ParamStore identity_contrastive(std::size_t d) {
  ParamStore s;
  Rng rng(0);
  init_contrastive_params(s, d, d, d, rng);
  for (const char* n : {"wrec.proj_a.w", "wrec.proj_t.w"}) {
    auto& w = s.get(n);
    std::fill(w.data().begin(), w.data().end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1;
  }
  return s;
}

}  // namespace

TEST(Similarities, HandBuiltTwoCells) {
  const ParamStore s = identity_contrastive(2);
  Graph g;
  nc::Binder bind(g, s, nc::Binder::none());
  // Grid (D=2, 1, 2): cell 0 = (1, 0), cell 1 = (0, 1).
  Var grid = g.constant(Tensor::from({2, 1, 2}, {1, 0, 0, 1}));
  auto m = similarities(bind, grid, g.constant(Tensor::vector({1, 0})));
  const Tensor& sc = g.value(m.scores);
  EXPECT_EQ(sc[0], 1.0);
  EXPECT_EQ(sc[1], 0.0);
  auto zero = similarities(bind, grid, g.constant(Tensor::vector({0, 0})));
  for (auto v : g.value(zero.scores).data()) EXPECT_EQ(v, 0.0);
}

TEST(Similarities, DimensionMismatchRejected) {
  const ParamStore s = identity_contrastive(2);
  Graph g;
  nc::Binder bind(g, s, nc::Binder::none());
  EXPECT_ANY_THROW(similarities(bind, g.constant(Tensor(Shape{3, 2, 2})), g.constant(Tensor::vector({1, 0}))));
}

TEST(Similarities, ArgmaxInvariantToTextRescaling) {
  Rng rng(5);
  ParamStore s;
  init_contrastive_params(s, 6, 4, 5, rng);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    nc::Binder bind(g, s, nc::Binder::none());
    Var grid = g.constant(random_tensor({6, 3, 3}, rng));
    Tensor t = random_tensor({4}, rng);
    Tensor t2 = t;
    for (auto& v : t2.data()) v *= 3.7;
    const auto a = argmax(g.value(similarities(bind, grid, g.constant(t)).scores).data());
    const auto b = argmax(g.value(similarities(bind, grid, g.constant(t2)).scores).data());
    EXPECT_EQ(a, b);
  }
}

TEST(TopK, Examples) {
  const std::vector<Real> s{0.9, 0.5, 0.7};
  EXPECT_EQ(topk_select(s, 2), (std::vector<std::size_t>{0, 2}));
  const std::vector<Real> eq{0.3, 0.3, 0.3};
  EXPECT_EQ(topk_select(eq, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(topk_select(s, 0), std::invalid_argument);
  EXPECT_THROW(topk_select(s, 4), std::invalid_argument);
}

// Property: exactly k distinct indices, descending scores, first element is argmax.
TEST(Properties, TopKContract) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(0, 15);
    std::vector<Real> s(n);
    for (auto& v : s) v = std::round(rng.uniform(-3, 3));  // ties common
    const std::size_t k = 1 + rng.uniform_int(0, n - 1);
    const auto idx = topk_select(s, k);
    ASSERT_EQ(idx.size(), k);
    EXPECT_EQ(idx[0], argmax(s));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) EXPECT_NE(idx[i], idx[j]);
      if (i + 1 < k) {
        EXPECT_GE(s[idx[i]], s[idx[i + 1]]);
        if (s[idx[i]] == s[idx[i + 1]]) EXPECT_LT(idx[i], idx[i + 1]);
      }
    }
  }
}

TEST(Atc, Examples) {
  EXPECT_NEAR(atc_value({1}, {{0}}, 1.0), std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(atc_value({1}, {{0}}, 1.0), 0.31326, 1e-5);
  EXPECT_NEAR(atc_value({0.4}, {{0.4, 0.4, 0.4, 0.4}}, 0.1), std::log(5.0), 1e-12);
  EXPECT_NEAR(atc_value({0.4, 0.2}, {{0.4, 0.4}, {0.2, 0.2}}, 0.5), std::log(3.0), 1e-12);
}

TEST(Atc, MonotoneInPositive) {
  double prev = atc_value({-1}, {{0.3, -0.2}}, 0.1);
  for (double p = -0.9; p < 1.0; p += 0.1) {
    const double cur = atc_value({p}, {{0.3, -0.2}}, 0.1);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(Atc, LiteralFormCanBeNegative) {
  EXPECT_LT(atc_value({1}, {{0}}, 0.1, true), 0.0);
  EXPECT_NEAR(atc_value({1}, {{0}}, 1.0, true), -1.0, 1e-12);
}

TEST(Atc, Errors) {
  Graph g;
  Var p = g.constant(Tensor::vector({1, 0}));
  Var n = g.constant(Tensor::from({1, 2}, {0, 1}));
  EXPECT_THROW(atc_loss(g, {{p, p, n}}, 0.0), std::invalid_argument);
  EXPECT_THROW(atc_loss(g, {{p, p, n}}, -1.0), std::invalid_argument);
  EXPECT_THROW(atc_loss(g, {{p, p, g.constant(Tensor(Shape{0, 2}))}}, 0.1), std::invalid_argument);
}

// Property: standard form is non-negative on random inputs.
TEST(Properties, AtcNonNegative) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> pos{rng.uniform(-5, 5)};
    std::vector<std::vector<double>> neg(1);
    for (std::size_t j = 0, m = 1 + rng.uniform_int(0, 6); j < m; ++j) neg[0].push_back(rng.uniform(-5, 5));
    EXPECT_GE(atc_value(pos, neg, rng.uniform(0.05, 2)), 0.0);
  }
}

TEST(Atc, GradcheckAnchorsTextAndProjections) {
  Rng rng(8);
  const std::size_t d = 4, dt = 3, c = 5, cells = 4, batch = 3;
  int passed = 0, total = 0;
  for (int inst = 0; inst < 100; ++inst) {
    ParamStore s;
    init_contrastive_params(s, d, dt, c, rng);
    std::vector<Tensor> grids, texts;
    for (std::size_t b = 0; b < batch; ++b) {
      grids.push_back(random_tensor({d, 2, 2}, rng));
      texts.push_back(random_tensor({dt}, rng));
    }
    const bool cosine = inst % 2 == 1;
    // Positives and negative pools are fixed at the unperturbed point; the loss is smooth in the inputs.
    std::vector<std::size_t> top1(batch);
    std::vector<std::vector<std::size_t>> topk(batch);
    {
      Graph g;
      nc::Binder bind(g, s, nc::Binder::none());
      for (std::size_t b = 0; b < batch; ++b) {
        auto m = similarities(bind, g.constant(grids[b]), g.constant(texts[b]), cosine);
        top1[b] = argmax(g.value(m.scores).data());
        topk[b] = topk_select(g.value(m.scores).data(), 2);
      }
    }
    auto loss = [&](Graph& g, nc::Binder& bind, std::function<Var(std::size_t)> grid_of,
                    std::function<Var(std::size_t)> text_of) {
      std::vector<AnchorMatch> ms;
      for (std::size_t b = 0; b < batch; ++b) ms.push_back(similarities(bind, grid_of(b), text_of(b), cosine));
      std::vector<AtcSample> samples;
      for (std::size_t b = 0; b < batch; ++b) {
        std::vector<Var> negs;
        for (std::size_t o = 0; o < batch; ++o)
          if (o != b) negs.push_back(g.index_select(ms[o].anchors, topk[o]));
        samples.push_back({g.reshape(g.index_select(ms[b].anchors, {top1[b]}), Shape{c}), ms[b].text,
                           g.concat(negs, 0)});
      }
      // Scale keeps logits O(1) so the gradient stays above finite-difference noise.
      return atc_loss(g, samples, cosine ? 0.5 : 2.0);
    };
    auto check = [&](const char* name, const Tensor& x, nc::ScalarFn f) {
      auto r = nc::gradcheck(name, f, x);
      ++total;
      passed += r.passed;
      if (!r.passed) ADD_FAILURE() << r.to_json();
    };
    check("grid", grids[0], [&](Graph& g, Var v) {
      nc::Binder bind(g, s, nc::Binder::none());
      return loss(g, bind, [&](std::size_t b) { return b == 0 ? v : g.constant(grids[b]); },
                  [&](std::size_t b) { return g.constant(texts[b]); });
    });
    check("text", texts[1], [&](Graph& g, Var v) {
      nc::Binder bind(g, s, nc::Binder::none());
      return loss(g, bind, [&](std::size_t b) { return g.constant(grids[b]); },
                  [&](std::size_t b) { return b == 1 ? v : g.constant(texts[b]); });
    });
    for (const char* name : {"wrec.proj_a.w", "wrec.proj_t.w"}) {
      check(name, s.get(name), [&](Graph& g, Var v) {
        nc::Binder bind(g, s, nc::Binder::none());
        bind.bind_as(name, v);
        return loss(g, bind, [&](std::size_t b) { return g.constant(grids[b]); },
                    [&](std::size_t b) { return g.constant(texts[b]); });
      });
    }
  }
  EXPECT_EQ(passed, total);
}

TEST(DecodeBox, Examples) {
  GridGeometry grid{.rows = 2, .cols = 2, .stride = 32, .image_h = 64, .image_w = 64};
  auto p = decode_box(0, {0, 0, 0, 0}, 16, 16, grid);
  EXPECT_EQ(p.box, (Box{8, 8, 16, 16}));
  auto wide = decode_box(0, {0, 0, static_cast<Real>(std::log(2.0)), 0}, 16, 16, grid);
  EXPECT_NEAR(wide.box.w, 32, 1e-12);
}

// Property: decoded boxes stay inside the image for wild offsets.
TEST(Properties, DecodeClampedToImage) {
  Rng rng(9);
  GridGeometry grid{.rows = 2, .cols = 2, .stride = 32, .image_h = 64, .image_w = 64};
  for (int i = 0; i < 1000; ++i) {
    std::array<Real, 4> off{};
    for (auto& v : off) v = rng.uniform(-10, 10);
    const auto b = decode_box(rng.uniform_int(0, 3), off, grid.prior(), grid.prior(), grid).box;
    EXPECT_GE(b.x, 0);
    EXPECT_GE(b.y, 0);
    EXPECT_GT(b.w, 0);
    EXPECT_GT(b.h, 0);
    EXPECT_LE(b.x + b.w, 64 + 1e-9);
    EXPECT_LE(b.y + b.h, 64 + 1e-9);
  }
}

// Property: encode then decode at the centre cell reproduces the box within 0.5 px.
TEST(Properties, EncodeDecodeRoundTrip) {
  Rng rng(10);
  GridGeometry grid{.rows = 4, .cols = 4, .stride = 16, .image_h = 64, .image_w = 64};
  for (int i = 0; i < 1000; ++i) {
    const double w = rng.uniform(2, 30), h = rng.uniform(2, 30);
    const double x = rng.uniform(0, 64 - w), y = rng.uniform(0, 64 - h);
    const Box box{x, y, w, h};
    const auto cell = cell_of(box.center_x(), box.center_y(), grid);
    const double fx = box.center_x() / 16 - std::floor(box.center_x() / 16);
    const double fy = box.center_y() / 16 - std::floor(box.center_y() / 16);
    if (fx < 1e-6 || fy < 1e-6) continue;
    const auto back = decode_box(cell, encode_box(box, cell, 8, 8, grid), 8, 8, grid).box;
    EXPECT_NEAR(back.x, box.x, 0.5);
    EXPECT_NEAR(back.y, box.y, 0.5);
    EXPECT_NEAR(back.w, box.w, 0.5);
    EXPECT_NEAR(back.h, box.h, 0.5);
  }
}

TEST(Predict, UsesArgmaxCellAndIsDeterministic) {
  GridGeometry grid{.rows = 2, .cols = 2, .stride = 32, .image_h = 64, .image_w = 64};
  Tensor offsets(Shape{4, 2, 2});
  const std::vector<Real> scores{0.1, 0.8, 0.8, -1};
  const auto p = predict_box(scores, offsets, grid);
  EXPECT_EQ(p.cell, 1u);
  EXPECT_EQ(p.box, (Box{40, 8, 16, 16}));
  EXPECT_EQ(predict_box(scores, offsets, grid).box, p.box);
}

TEST(Detector, TargetsMarkCentreCells) {
  auto ds = scenes::generate(3, 50, scenes::GeneratorConfig{});
  const auto grid = coarse_grid(64, 64);
  EXPECT_EQ(grid.rows, 2u);
  EXPECT_EQ(grid.stride, 32.0);
  for (const auto& p : ds.train) {
    const auto t = detector_targets(p.scene, grid);
    for (std::size_t c = 0; c < 4; ++c) {
      bool has_centre = false;
      for (const auto& o : p.scene.objects) has_centre |= cell_of(o.gt_box.center_x(), o.gt_box.center_y(), grid) == c;
      EXPECT_EQ(t.objectness[c], has_centre ? 1.0 : 0.0);
      EXPECT_EQ(t.positive[c], t.objectness[c]);
    }
  }
}

TEST(Detector, ZeroEpochsLeavesParamsUnchanged) {
  auto ds = scenes::generate(3, 20, scenes::GeneratorConfig{});
  DetectorConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(pretrain_detector(ds.train, cfg), init_detector_params(cfg));
}

TEST(Detector, ShortPretrainReducesLoss) {
  auto ds = scenes::generate(3, 120, scenes::GeneratorConfig{});
  DetectorConfig cfg;
  cfg.epochs = 3;
  cfg.dark.channels = {8, 8, 16, 16, 16};
  cfg.unified_dim = 16;
  cfg.head_hidden = 8;
  std::vector<double> losses;
  const auto params = pretrain_detector(ds.train, cfg, [&](const PretrainLog& l) { losses.push_back(l.loss); });
  ASSERT_EQ(losses.size(), 3u);
  EXPECT_LT(losses.back(), losses.front());
  for (const auto& name : params.names()) EXPECT_TRUE(params.get(name).all_finite()) << name;
}
