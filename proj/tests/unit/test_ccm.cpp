#include <gtest/gtest.h>

#include <cmath>

#include "weakmcn/ccm/consistency.hpp"
#include "weakmcn/error.hpp"
#include "weakmcn/numcore/gradcheck.hpp"
#include "weakmcn/rng.hpp"
#include "weakmcn/wres/wres.hpp"

using namespace weakmcn;
using namespace weakmcn::ccm;
using nc::Shape;

namespace {

Mask from_rows(std::vector<std::vector<int>> rows) {
  Mask m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) m.at(i, j) = static_cast<std::uint8_t>(rows[i][j]);
  return m;
}

Tensor mask_tensor(const Mask& m) {
  Tensor t(Shape{m.height, m.width});
  for (std::size_t i = 0; i < m.bits.size(); ++i) t[i] = m.bits[i];
  return t;
}

Tensor vec(std::initializer_list<Real> v) { return Tensor::vector(v); }

double dice_of(const Tensor& p, const Tensor& q) {
  Graph g;
  return g.value(dice(g, g.constant(p), g.constant(q))).item();
}

double scl_of(const Tensor& o, const Box& b) {
  Graph g;
  return g.value(scl_loss(g, g.constant(o), b)).item();
}

}  // namespace

TEST(Rasterize, Examples) {
  const Mask m = rasterize(Box{1, 1, 2, 2}, 4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.at(i, j), (i >= 1 && i <= 2 && j >= 1 && j <= 2));
  EXPECT_TRUE(rasterize(Box{10, 10, 3, 3}, 4, 4).empty());
  EXPECT_TRUE(rasterize(Box{-8, 0, 3, 3}, 4, 4).empty());
  EXPECT_EQ(rasterize(Box{0, 0, 5, 4}, 4, 5).count(), 20u);
  EXPECT_TRUE(rasterize(Box{1, 1, 0, 2}, 4, 4).empty());
}

TEST(Rasterize, HalfUpRoundingAndClamp) {
  // x = 0.5 rounds to 1, x + w = 2.5 rounds to 3.
  const Mask m = rasterize(Box{0.5, 0, 2, 1}, 1, 5);
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 1, 1, 0, 0}));
  const Mask c = rasterize(Box{-2, -2, 4, 4}, 3, 3);
  EXPECT_EQ(c.count(), 4u);
  EXPECT_EQ(c.at(0, 0), 1);
  EXPECT_EQ(c.at(1, 1), 1);
}

TEST(Projections, Examples) {
  const Mask m = from_rows({{0, 1, 0}, {0, 1, 1}, {0, 0, 0}});
  EXPECT_EQ(project_x(m), (std::vector<std::uint8_t>{0, 1, 1}));
  EXPECT_EQ(project_y(m), (std::vector<std::uint8_t>{1, 1, 0}));
  const Mask box = rasterize(Box{2, 1, 3, 2}, 6, 7);
  EXPECT_EQ(project_x(box), (std::vector<std::uint8_t>{0, 0, 1, 1, 1, 0, 0}));
  EXPECT_EQ(project_y(Mask(3, 4)), (std::vector<std::uint8_t>{0, 0, 0}));
}

// Property: soft and hard projections agree with a brute-force per-axis max.
TEST(Properties, ProjectionsMatchOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    Mask m(8, 8);
    for (auto& b : m.bits) b = rng.bernoulli(0.2);
    Tensor soft(Shape{8, 8});
    for (auto& v : soft.data()) v = rng.uniform();
    Graph g;
    const Tensor& sx = g.value(project_x(g, g.constant(soft)));
    const Tensor& sy = g.value(project_y(g, g.constant(soft)));
    const auto hx = project_x(m), hy = project_y(m);
    for (std::size_t a = 0; a < 8; ++a) {
      std::uint8_t cmax = 0, rmax = 0;
      Real cs = 0, rs = 0;
      for (std::size_t b = 0; b < 8; ++b) {
        cmax = std::max(cmax, m.at(b, a));
        rmax = std::max(rmax, m.at(a, b));
        cs = std::max(cs, soft[b * 8 + a]);
        rs = std::max(rs, soft[a * 8 + b]);
      }
      EXPECT_EQ(hx[a], cmax);
      EXPECT_EQ(hy[a], rmax);
      EXPECT_EQ(sx[a], cs);
      EXPECT_EQ(sy[a], rs);
    }
  }
}

TEST(Dice, Examples) {
  EXPECT_NEAR(dice_of(vec({1, 0, 1}), vec({1, 0, 1})), 2.5e-7, 1e-12);
  EXPECT_NEAR(dice_of(vec({1, 0}), vec({0, 1})), 1.0, 1e-12);
  EXPECT_NEAR(dice_of(vec({0.5, 0.5}), vec({1, 0})), 1.0 / 3, 1e-6);
  Graph g;
  EXPECT_THROW(dice(g, g.constant(vec({1, 0})), g.constant(vec({1, 0, 0}))), ShapeError);
  const std::vector<Real> a{0.2, 0.9}, b{0.4, 0.1};
  EXPECT_NEAR(dice(a, b), dice_of(vec({0.2, 0.9}), vec({0.4, 0.1})), 1e-15);
}

// Property: range, symmetry and the self-dice bound.
TEST(Properties, DiceRangeSymmetry) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(0, 20);
    Tensor p(Shape{n}), q(Shape{n});
    double sp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      q[i] = rng.uniform();
      sp += p[i] * p[i];
    }
    const double d = dice_of(p, q);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_EQ(d, dice_of(q, p));
    EXPECT_LE(dice_of(p, p), kDiceEps / (2 * sp + kDiceEps) + 1e-15);
  }
}

TEST(Scl, Examples) {
  const Box box{2, 3, 4, 3};
  EXPECT_LT(scl_of(mask_tensor(rasterize(box, 8, 8)), box), 1e-6);
  EXPECT_NEAR(scl_of(Tensor(Shape{8, 8}), box), 2.0, 1e-6);
  // A diagonal-ish mask touching every row and column of the box.
  Mask diag(8, 8);
  for (std::size_t k = 0; k < 4; ++k) diag.at(3 + std::min<std::size_t>(k, 2), 2 + k) = 1;
  EXPECT_EQ(project_x(diag), project_x(rasterize(box, 8, 8)));
  EXPECT_EQ(project_y(diag), project_y(rasterize(box, 8, 8)));
  EXPECT_LT(scl_of(mask_tensor(diag), box), 1e-6);
  EXPECT_NE(diag, rasterize(box, 8, 8));
}

TEST(Scl, EmptyBox) {
  const Box empty{100, 100, 2, 2};
  Tensor o(Shape{6, 6}, 0.7);
  EXPECT_NEAR(scl_of(o, empty), 2.0, 1e-6);
  // Two zero vectors: 1 - 0 / eps = 1 per axis.
  EXPECT_EQ(scl_of(Tensor(Shape{6, 6}), empty), 2.0);
}

// Property: projections that match the box give zero SCL, whatever the interior looks like.
TEST(Properties, SclZeroForMatchingProjections) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t x = rng.uniform_int(0, 5), y = rng.uniform_int(0, 5);
    const std::size_t w = 1 + rng.uniform_int(0, 9 - x), h = 1 + rng.uniform_int(0, 9 - y);
    const Box box{double(x), double(y), double(w), double(h)};
    Mask m(12, 12);
    // Random interior pixels, then make sure every row and column of the box is touched.
    for (std::size_t i = y; i < y + h; ++i)
      for (std::size_t j = x; j < x + w; ++j) m.at(i, j) = rng.bernoulli(0.3);
    for (std::size_t i = y; i < y + h; ++i) m.at(i, x + rng.uniform_int(0, w - 1)) = 1;
    for (std::size_t j = x; j < x + w; ++j) m.at(y + rng.uniform_int(0, h - 1), j) = 1;
    EXPECT_LT(scl_of(mask_tensor(m), box), 1e-6);
  }
}

TEST(Scl, GradcheckWrtO) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor o(Shape{10, 10});
    for (auto& v : o.data()) v = rng.uniform(0.05, 0.95);
    const Box box{rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(2, 6), rng.uniform(2, 6)};
    auto r = nc::gradcheck("scl", [&](Graph& g, Var v) { return scl_loss(g, v, box); }, o);
    EXPECT_TRUE(r.passed) << r.to_json();
  }
}

TEST(Iou, Examples) {
  const Mask a = rasterize(Box{0, 0, 2, 2}, 4, 4);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, rasterize(Box{2, 2, 2, 2}, 4, 4)), 0.0);
  EXPECT_NEAR(iou(a, rasterize(Box{1, 1, 2, 2}, 4, 4)), 1.0 / 7, 1e-15);
  EXPECT_EQ(iou(Mask(4, 4), Mask(4, 4)), 1.0);
  EXPECT_EQ(iou(a, Mask(4, 4)), 0.0);
  EXPECT_THROW(iou(a, Mask(4, 5)), ShapeError);
}

// Property: iou agrees with pixel enumeration and is symmetric.
TEST(Properties, IouMatchesEnumeration) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 8 + rng.uniform_int(0, 56), w = 8 + rng.uniform_int(0, 56);
    auto rbox = [&] {
      return Box{rng.uniform(-4, double(w)), rng.uniform(-4, double(h)), rng.uniform(0, double(w)),
                 rng.uniform(0, double(h))};
    };
    const Box ba = rbox(), bb = rbox();
    const Mask a = rasterize(ba, h, w), b = rasterize(bb, h, w);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        auto in = [&](const Box& bx) {
          const double y0 = std::floor(bx.y + 0.5), y1 = std::floor(bx.y + bx.h + 0.5);
          const double x0 = std::floor(bx.x + 0.5), x1 = std::floor(bx.x + bx.w + 0.5);
          return double(i) >= y0 && double(i) < y1 && double(j) >= x0 && double(j) < x1;
        };
        EXPECT_EQ(a.at(i, j) != 0, in(ba));
        inter += in(ba) && in(bb);
        uni += in(ba) || in(bb);
      }
    const double want = uni == 0 ? 1.0 : double(inter) / double(uni);
    EXPECT_EQ(iou(a, b), want);
    EXPECT_EQ(iou(a, b), iou(b, a));
  }
}

TEST(Binarize, Threshold) {
  const Mask m = binarize(Tensor::from({1, 4}, {0.49, 0.5, 0.51, 0.0}));
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

namespace {

// A 10x10 probability map whose binarization is rows [0, 10) x cols [0, k),
// compared with the box covering all columns: IoU = k / 10.
Tensor probs_with_iou(std::size_t k) {
  Tensor o(Shape{10, 10}, 0.2);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < k; ++j) o[i * 10 + j] = 0.8;
  return o;
}

}  // namespace

TEST(Isl, GateClosedIsExactlyZero) {
  Mask pseudo(10, 10);
  for (std::size_t i = 0; i < 30; ++i) pseudo.bits[i] = 1;
  Graph g;
  Var o = g.param(probs_with_iou(2));
  auto t = isl_loss(g, o, Box{0, 0, 10, 10}, pseudo, 0.3);
  EXPECT_NEAR(t.gate.iou, 0.2, 1e-15);
  EXPECT_FALSE(t.gate.open);
  EXPECT_EQ(g.value(t.loss).item(), 0.0);
  EXPECT_GT(g.value(t.raw).item(), 0.0);
  auto grads = g.backward(t.loss);
  for (auto v : grads[o].data()) EXPECT_EQ(v, 0.0);
}

TEST(Isl, GateOpenEqualsResLossIncludingBoundary) {
  Mask pseudo(10, 10);
  for (std::size_t i = 0; i < 30; ++i) pseudo.bits[i] = 1;
  for (std::size_t k : {3u, 5u}) {
    Graph g;
    Var o = g.param(probs_with_iou(k));
    auto t = isl_loss(g, o, Box{0, 0, 10, 10}, pseudo, 0.3);
    EXPECT_TRUE(t.gate.open) << k;
    EXPECT_EQ(g.value(t.loss).item(), g.value(wres::res_loss(g, o, pseudo)).item());
  }
}

TEST(Isl, PseudoMaskGateSource) {
  Mask pseudo(10, 10);
  for (std::size_t i = 0; i < 10; ++i) pseudo.at(i, 0) = 1;
  Graph g;
  // The prediction covers the box fully, the pseudo mask only a tenth of it.
  auto pred = isl_loss(g, g.param(probs_with_iou(10)), Box{0, 0, 10, 10}, pseudo, 0.3, GateSource::kPredictedMask);
  auto ps = isl_loss(g, g.param(probs_with_iou(10)), Box{0, 0, 10, 10}, pseudo, 0.3, GateSource::kPseudoMask);
  EXPECT_TRUE(pred.gate.open);
  EXPECT_FALSE(ps.gate.open);
  EXPECT_EQ(gate_source_from_name("pseudo_mask"), GateSource::kPseudoMask);
  EXPECT_THROW(gate_source_from_name("box"), ConfigError);
}

// Property: open iff iou >= alpha across random masks and thresholds.
TEST(Properties, GateIsInclusiveThreshold) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    Mask m(10, 10);
    for (auto& b : m.bits) b = rng.bernoulli(0.5);
    const Box box{rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(1, 5), rng.uniform(1, 5)};
    const double alpha = std::round(rng.uniform(0, 1) * 20) / 20;
    const auto s = gate(m, box, alpha);
    EXPECT_EQ(s.iou, iou(m, rasterize(box, 10, 10)));
    EXPECT_EQ(s.open, s.iou >= alpha);
  }
}
