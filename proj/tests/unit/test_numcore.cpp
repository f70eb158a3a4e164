#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "weakmcn/error.hpp"
#include "weakmcn/numcore/gradcheck.hpp"
#include "weakmcn/numcore/graph.hpp"
#include "weakmcn/numcore/optim.hpp"
#include "weakmcn/numcore/params.hpp"
#include "weakmcn/rng.hpp"

using namespace weakmcn;
using namespace weakmcn::nc;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void expect_near_all(const Tensor& a, std::initializer_list<double> want, double tol = 1e-12) {
  ASSERT_EQ(a.size(), want.size());
  std::size_t i = 0;
  for (double w : want) EXPECT_NEAR(a[i++], w, tol) << "at " << i - 1;
}

// Sum of elementwise product with a fixed random weight turns any op output into a scalar
// whose gradient exercises every output coordinate.
Var weighted_sum(Graph& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return g.sum_all(g.mul(y, g.constant(random_tensor(g.shape(y), rng))));
}

}  // namespace

TEST(Tensor, DataLengthMatchesShape) {
  Tensor t(Shape{2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<Real>{1, 2, 3}), ShapeError);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW((void)Tensor(Shape{2}).item(), ShapeError);
}

TEST(ForwardOps, SoftmaxOfUniformLogits) {
  Graph g;
  Var s = g.softmax(g.constant(Tensor::vector({0, 0, 0})), 0);
  expect_near_all(g.value(s), {1.0 / 3, 1.0 / 3, 1.0 / 3});
}

TEST(ForwardOps, MaxOverRows) {
  Graph g;
  Var m = g.max(g.constant(Tensor::from({2, 2}, {0, 1, 3, 2})), 0);
  EXPECT_EQ(g.shape(m), (Shape{2}));
  expect_near_all(g.value(m), {3, 2}, 0);
}

TEST(ForwardOps, ResizeToSameExtentIsIdentity) {
  Rng rng(3);
  Graph g;
  Tensor x = random_tensor({2, 4, 4}, rng);
  EXPECT_EQ(g.value(g.resize(g.constant(x), 4, 4)), x);
}

TEST(ForwardOps, ResizeWeightRowsSumToOne) {
  for (std::size_t in : {1u, 2u, 5u, 8u, 16u}) {
    for (std::size_t out : {1u, 2u, 3u, 8u, 64u}) {
      auto w = resize_weights(in, out);
      for (std::size_t i = 0; i < out; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < in; ++j) s += w[i * in + j];
        EXPECT_NEAR(s, 1.0, 1e-12) << in << "->" << out;
      }
    }
  }
}

TEST(ForwardOps, ShapeMismatchNamesBothShapes) {
  Graph g;
  Var a = g.constant(Tensor(Shape{2, 3}));
  Var b = g.constant(Tensor(Shape{4, 5}));
  try {
    g.add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("(2, 3)"), std::string::npos) << what;
    EXPECT_NE(what.find("(4, 5)"), std::string::npos) << what;
  }
  EXPECT_THROW(g.matmul(a, b), ShapeError);
}

TEST(ForwardOps, DomainViolationsRejected) {
  Graph g;
  EXPECT_THROW(g.log(g.constant(Tensor::vector({1, 0}))), DomainError);
  EXPECT_THROW(g.log(g.constant(Tensor::vector({-1}))), DomainError);
  EXPECT_THROW(g.div(g.constant(Tensor::vector({1})), g.constant(Tensor::vector({0}))), DomainError);
}

TEST(ForwardOps, BroadcastingArithmetic) {
  Graph g;
  Var a = g.constant(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = g.constant(Tensor::vector({10, 20, 30}));
  expect_near_all(g.value(g.add(a, b)), {11, 22, 33, 14, 25, 36}, 0);
  Var col = g.constant(Tensor::from({2, 1}, {2, 3}));
  expect_near_all(g.value(g.mul(a, col)), {2, 4, 6, 12, 15, 18}, 0);
}

TEST(ForwardOps, ConvMatchesDirectSum) {
  Rng rng(11);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t dil : {1u, 2u, 3u}) {
      const std::size_t c = 3, h = 7, w = 6, o = 2, k = 3;
      Tensor x = random_tensor({c, h, w}, rng), wt = random_tensor({o, c, k, k}, rng), b = random_tensor({o}, rng);
      Graph g;
      const Tensor& y = g.value(g.conv2d(g.constant(x), g.constant(wt), g.constant(b), {stride, dil}));
      const std::size_t pad = dil * (k - 1) / 2;
      const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
      ASSERT_EQ(y.shape(), (Shape{o, oh, ow}));
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            double acc = b[oc];
            for (std::size_t ci = 0; ci < c; ++ci)
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const long iy = long(i * stride + ky * dil) - long(pad), ix = long(j * stride + kx * dil) - long(pad);
                  if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                  acc += wt[((oc * c + ci) * k + ky) * k + kx] * x[(ci * h + iy) * w + ix];
                }
            EXPECT_NEAR(y[(oc * oh + i) * ow + j], acc, 1e-12);
          }
    }
  }
}

TEST(ForwardOps, FiniteOutputsOnFiniteInputs) {
  Rng rng(5);
  Graph g;
  Var x = g.constant(random_tensor({3, 4}, rng, -50, 50));
  for (Var y : {g.sigmoid(x), g.softmax(x, 1), g.exp(g.clamp(x, -30, 30)), g.relu(x)}) {
    EXPECT_TRUE(g.value(y).all_finite());
  }
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  Var x = g.param(Tensor::vector({1, 2, 3}));
  auto grads = g.backward(g.sum_all(x));
  expect_near_all(grads[x], {1, 1, 1}, 0);
}

TEST(Backward, SigmoidAtZero) {
  Graph g;
  Var x = g.param(Tensor::scalar(0));
  auto grads = g.backward(g.sigmoid(x));
  EXPECT_DOUBLE_EQ(grads[x].item(), 0.25);
}

TEST(Backward, MaxRoutesToUniqueMax) {
  Graph g;
  Var x = g.param(Tensor::vector({2, 5, 3}));
  auto grads = g.backward(g.max(x, 0));
  expect_near_all(grads[x], {0, 1, 0}, 0);
}

TEST(Backward, MaxTieGoesToFirstIndex) {
  Graph g;
  Var x = g.param(Tensor::vector({4, 1, 4}));
  auto grads = g.backward(g.max(x, 0));
  expect_near_all(grads[x], {1, 0, 0}, 0);
}

TEST(Backward, NonScalarRootRejected) {
  Graph g;
  Var x = g.param(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(x), ShapeError);
}

TEST(Backward, EveryReachableLeafGetsSameShapeGradient) {
  Rng rng(2);
  Graph g;
  Var a = g.param(random_tensor({3, 4}, rng));
  Var b = g.param(random_tensor({4, 2}, rng));
  Var unused = g.param(random_tensor({5}, rng));
  Var c = g.constant(random_tensor({3, 2}, rng));
  auto grads = g.backward(g.sum_all(g.mul(g.matmul(a, b), c)));
  EXPECT_EQ(grads[a].shape(), g.shape(a));
  EXPECT_EQ(grads[b].shape(), g.shape(b));
  EXPECT_EQ(grads[unused].shape(), g.shape(unused));
  for (auto v : grads[unused].data()) EXPECT_EQ(v, 0);
}

TEST(Backward, TopologicalOrder) {
  Rng rng(9);
  Graph g;
  Var x = g.param(random_tensor({2, 3}, rng));
  Var y = g.softmax(g.add(g.matmul(x, g.transpose(x)), g.constant(Tensor::scalar(1))), 1);
  g.backward(g.mean_all(y));
  for (std::size_t id = 0; id < g.size(); ++id) {
    for (auto in : g.inputs(Var{id})) EXPECT_LT(in, id);
  }
}

// Property: softmax rows sum to one and live strictly inside (0, 1).
TEST(Properties, SoftmaxRowsAreDistributions) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Graph g;
    const Tensor& s = g.value(g.softmax(g.constant(random_tensor({4, 7}, rng, -20, 20)), 1));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        const double v = s[r * 7 + c];
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

// Property: max backward conserves the incoming gradient and deposits it on argmax positions only.
TEST(Properties, MaxBackwardConservesMass) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    Graph g;
    Tensor xt = random_tensor({5, 6}, rng);
    // Integer-valued entries make ties common.
    for (auto& v : xt.data()) v = std::round(v * 2);
    Var x = g.param(xt);
    const std::size_t axis = trial % 2;
    Var m = g.max(x, axis);
    Tensor up = random_tensor(g.shape(m), rng);
    auto grads = g.backward(g.sum_all(g.mul(m, g.constant(up))));
    const Tensor& gx = grads[x];
    double in_mass = 0, out_mass = 0;
    for (auto v : up.data()) in_mass += v;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        const double gv = gx[i * 6 + j];
        out_mass += gv;
        if (gv != 0) EXPECT_EQ(xt[i * 6 + j], g.value(m)[axis == 0 ? j : i]);
      }
    EXPECT_NEAR(in_mass, out_mass, 1e-12);
  }
}

// Property: forward values and gradients are bit-identical across repeated runs.
TEST(Properties, Determinism) {
  auto run = [] {
    Rng rng(99);
    Graph g;
    Var x = g.param(random_tensor({2, 6, 6}, rng));
    Var w = g.param(random_tensor({3, 2, 3, 3}, rng));
    Var y = g.sigmoid(g.conv2d(x, w, std::nullopt, {1, 2}));
    Var r = g.mean_all(g.resize(y, 9, 9));
    auto grads = g.backward(r);
    return std::make_tuple(g.value(r), grads[x], grads[w]);
  };
  EXPECT_EQ(run(), run());
}

TEST(Gradcheck, SumOfSquares) {
  auto report = gradcheck("sumsq", [](Graph& g, Var x) { return g.sum_all(g.mul(x, x)); }, Tensor::vector({1, 2}));
  EXPECT_TRUE(report.passed);
  expect_near_all(Tensor::vector({report.analytic[0], report.analytic[1]}), {2, 4}, 1e-12);
  EXPECT_NEAR(report.numeric[0], 2, 1e-7);
  EXPECT_NEAR(report.numeric[1], 4, 1e-7);
}

TEST(Gradcheck, NonFiniteProbeIsReportedFailure) {
  // log(x) at x = 1e-6 with h = 1e-5: the minus probe is negative.
  auto report = gradcheck("log", [](Graph& g, Var x) { return g.sum_all(g.log(x)); }, Tensor::vector({1e-6, 1}));
  EXPECT_FALSE(report.passed);
  ASSERT_EQ(report.failing_coords.size(), 1u);
  EXPECT_EQ(report.failing_coords[0], 0u);
  const auto j = report.to_json();
  EXPECT_NE(j.find("\"failing_coords\":[0]"), std::string::npos) << j;
}

TEST(Gradcheck, DetectsWrongGradient) {
  // relu at a kink: the subgradient 0 at x = 0 disagrees with the central difference 0.5.
  auto report = gradcheck("relu", [](Graph& g, Var x) { return g.sum_all(g.relu(x)); }, Tensor::vector({0.0}));
  EXPECT_FALSE(report.passed);
}

// Property: chain rule holds for every forward op on >= 100 random inputs.
TEST(Properties, ChainRulePerOp) {
  struct Case {
    const char* name;
    Shape shape;
    std::function<Var(Graph&, Var, Rng&)> f;
    double lo = -1, hi = 1;
  };
  std::vector<Case> cases = {
      {"add", {3, 4}, [](Graph& g, Var x, Rng& r) { return g.add(x, g.constant(random_tensor({4}, r))); }},
      {"sub", {3, 4}, [](Graph& g, Var x, Rng& r) { return g.sub(g.constant(random_tensor({3, 1}, r)), x); }},
      {"mul", {3, 4}, [](Graph& g, Var x, Rng&) { return g.mul(x, x); }},
      {"div", {3, 4}, [](Graph& g, Var x, Rng& r) { return g.div(g.constant(random_tensor({3, 4}, r)), x); }, 0.5, 2},
      {"scale", {5}, [](Graph& g, Var x, Rng&) { return g.add_scalar(g.scale(x, -1.5), 2); }},
      {"matmul", {3, 4}, [](Graph& g, Var x, Rng& r) { return g.matmul(x, g.constant(random_tensor({4, 2}, r))); }},
      {"matmul_rhs", {4, 2}, [](Graph& g, Var x, Rng& r) { return g.matmul(g.constant(random_tensor({3, 4}, r)), x); }},
      {"conv2d_x", {2, 5, 5},
       [](Graph& g, Var x, Rng& r) {
         return g.conv2d(x, g.constant(random_tensor({3, 2, 3, 3}, r)), g.constant(random_tensor({3}, r)), {1, 2});
       }},
      {"conv2d_w", {3, 2, 3, 3},
       [](Graph& g, Var w, Rng& r) { return g.conv2d(g.constant(random_tensor({2, 6, 5}, r)), w, std::nullopt, {2, 1}); }},
      {"relu", {10}, [](Graph& g, Var x, Rng&) { return g.relu(x); }},
      {"sigmoid", {10}, [](Graph& g, Var x, Rng&) { return g.sigmoid(x); }, -4, 4},
      {"exp", {10}, [](Graph& g, Var x, Rng&) { return g.exp(x); }},
      {"log", {10}, [](Graph& g, Var x, Rng&) { return g.log(x); }, 0.2, 3},
      {"clamp", {10}, [](Graph& g, Var x, Rng&) { return g.clamp(x, -0.5, 0.5); }},
      {"softmax", {3, 5}, [](Graph& g, Var x, Rng&) { return g.softmax(x, 1); }, -2, 2},
      {"softmax0", {3, 5}, [](Graph& g, Var x, Rng&) { return g.softmax(x, 0); }, -2, 2},
      {"sum", {2, 3, 4}, [](Graph& g, Var x, Rng&) { return g.sum(x, {0, 2}); }},
      {"mean", {2, 3, 4}, [](Graph& g, Var x, Rng&) { return g.mean(x, {1}); }},
      {"max", {4, 5}, [](Graph& g, Var x, Rng&) { return g.max(x, 1); }},
      {"broadcast", {3, 1}, [](Graph& g, Var x, Rng&) { return g.broadcast_to(x, {2, 3, 4}); }},
      {"concat", {2, 3},
       [](Graph& g, Var x, Rng& r) { return g.concat({x, g.constant(random_tensor({1, 3}, r)), x}, 0); }},
      {"resize_up", {2, 3, 4}, [](Graph& g, Var x, Rng&) { return g.resize(x, 7, 9); }},
      {"resize_down", {2, 8, 6}, [](Graph& g, Var x, Rng&) { return g.resize(x, 3, 2); }},
      {"reshape", {2, 6}, [](Graph& g, Var x, Rng&) { return g.reshape(x, {3, 4}); }},
      {"transpose", {2, 5}, [](Graph& g, Var x, Rng&) { return g.transpose(x); }},
      {"index_select", {4, 3}, [](Graph& g, Var x, Rng&) { return g.index_select(x, {2, 0, 2}); }},
  };
  Rng rng(1234);
  for (const auto& c : cases) {
    int passed = 0;
    for (int inst = 0; inst < 100; ++inst) {
      Tensor x = random_tensor(c.shape, rng, c.lo, c.hi);
      if (std::string(c.name) == "relu" || std::string(c.name) == "clamp") {
        // Keep probes away from the kinks.
        for (auto& v : x.data()) {
          if (std::abs(v) < 1e-3) v += 0.01;
          if (std::abs(std::abs(v) - 0.5) < 1e-3) v += 0.01;
        }
      }
      const std::uint64_t seed = rng.next();
      auto report = gradcheck(c.name, [&](Graph& g, Var v) {
        Rng local(seed);
        return weighted_sum(g, c.f(g, v, local), seed + 1);
      }, x);
      passed += report.passed ? 1 : 0;
      if (!report.passed) ADD_FAILURE() << c.name << " " << report.to_json();
    }
    EXPECT_EQ(passed, 100) << c.name;
  }
}

TEST(Params, StoreAndBinder) {
  ParamStore s;
  s.add("a.w", Tensor::vector({1, 2}));
  s.add("b.w", Tensor::vector({3}));
  EXPECT_THROW(s.add("a.w", Tensor::vector({0})), std::invalid_argument);
  EXPECT_EQ(s.numel(), 3u);
  EXPECT_EQ(s.names_with_prefix("a."), std::vector<std::string>{"a.w"});
  Graph g;
  Binder bind(g, s, Binder::prefixes({"a."}));
  Var a = bind("a.w");
  Var b = bind("b.w");
  EXPECT_TRUE(g.requires_grad(a));
  EXPECT_FALSE(g.requires_grad(b));
  EXPECT_EQ(bind("a.w").id, a.id);
  EXPECT_EQ(bind.trainable().size(), 1u);
  EXPECT_THROW(bind("missing"), std::out_of_range);
}

TEST(Optim, ZeroGradientLeavesParametersUnchanged) {
  ParamStore s;
  s.add("p", Tensor::vector({0.5, -1.25, 3}));
  const ParamStore before = s;
  Adam adam;
  std::map<std::string, Tensor, std::less<>> grads{{"p", Tensor(Shape{3})}};
  for (int i = 0; i < 5; ++i) adam.step(s, grads, 1e-2);
  EXPECT_EQ(s, before);
}

TEST(Optim, AdamFirstStepMovesByLr) {
  ParamStore s;
  s.add("p", Tensor::vector({1, 1}));
  Adam adam;
  adam.step(s, {{"p", Tensor::vector({2, -3})}}, 0.1);
  EXPECT_NEAR(s.get("p")[0], 0.9, 1e-7);
  EXPECT_NEAR(s.get("p")[1], 1.1, 1e-7);
}

TEST(Optim, CosineSchedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 50, 100), 5e-4, 1e-15);
  EXPECT_NEAR(cosine_lr(1e-3, 100, 100), 0, 1e-18);
  EXPECT_NEAR(cosine_lr(1e-3, 200, 100), 0, 1e-18);
}
