#include "weakmcn/wrec/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "weakmcn/error.hpp"

namespace weakmcn::wrec {

using nc::Shape;

void init_contrastive_params(ParamStore& store, std::size_t anchor_dim, std::size_t text_dim,
                             std::size_t contrastive_dim, Rng& rng) {
  store.add("wrec.proj_a.w", nc::init_normal(Shape{contrastive_dim, anchor_dim},
                                             1.0 / std::sqrt(static_cast<double>(anchor_dim)), rng));
  // Small text side so initial similarities are O(tau) and the softmax starts unsaturated.
  store.add("wrec.proj_t.w", nc::init_normal(Shape{contrastive_dim, text_dim},
                                             0.25 / std::sqrt(static_cast<double>(text_dim)), rng));
}

namespace {

// Row-wise L2 normalisation of (n, c).
Var normalize_rows(Graph& g, Var x) {
  Var sq = g.sum(g.mul(x, x), {1});
  const std::size_t n = g.shape(sq)[0];
  Var inv = g.exp(g.scale(g.log(g.add_scalar(sq, 1e-12)), -0.5));
  return g.mul(x, g.reshape(inv, Shape{n, 1}));
}

}  // namespace

AnchorMatch similarities(Binder& bind, Var anchor_grid, Var text_feature, bool cosine) {
  auto& g = bind.graph();
  const auto& s = g.shape(anchor_grid);
  if (s.size() != 3) throw ShapeError("similarities: anchor grid must be (D, h, w), got " + nc::shape_str(s));
  Var wa = bind("wrec.proj_a.w");
  Var wt = bind("wrec.proj_t.w");
  if (g.shape(wa)[1] != s[0]) {
    throw ConfigError("similarities: anchor width " + std::to_string(s[0]) + " vs projection " +
                      nc::shape_str(g.shape(wa)));
  }
  const auto& ts = g.shape(text_feature);
  if (ts.size() != 1 || g.shape(wt)[1] != ts[0]) {
    throw ConfigError("similarities: text width " + nc::shape_str(ts) + " vs projection " + nc::shape_str(g.shape(wt)));
  }
  const std::size_t cells = s[1] * s[2];
  const std::size_t c = g.shape(wa)[0];
  Var anchors = g.transpose(g.matmul(wa, g.reshape(anchor_grid, Shape{s[0], cells})));  // (cells, C)
  Var text = g.matmul(wt, g.reshape(text_feature, Shape{ts[0], 1}));                    // (C, 1)
  if (cosine) {
    anchors = normalize_rows(g, anchors);
    text = g.reshape(normalize_rows(g, g.reshape(text, Shape{1, c})), Shape{c, 1});
  }
  Var scores = g.reshape(g.matmul(anchors, text), Shape{cells});
  return {anchors, g.reshape(text, Shape{c}), scores};
}

std::vector<std::size_t> topk_select(std::span<const Real> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw std::invalid_argument("topk_select: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

std::size_t argmax(std::span<const Real> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of empty span");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

Var atc_loss(Graph& g, const std::vector<AtcSample>& samples, double tau, bool literal) {
  if (!(tau > 0)) throw std::invalid_argument("atc_loss: temperature must be positive");
  if (samples.empty()) throw std::invalid_argument("atc_loss: empty batch");
  Var total{};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto& ns = g.shape(s.negatives);
    const std::size_t c = g.shape(s.text)[0];
    if (ns.size() != 2 || ns[0] == 0) throw std::invalid_argument("atc_loss: empty negative set");
    if (ns[1] != c || g.shape(s.positive) != Shape{c}) {
      throw ShapeError("atc_loss: feature widths " + nc::shape_str(g.shape(s.positive)) + " / " +
                       nc::shape_str(ns) + " / " + nc::shape_str(g.shape(s.text)));
    }
    Var pos = g.scale(g.reshape(g.sum(g.mul(s.positive, s.text), {0}), Shape{1}), 1.0 / tau);
    Var neg = g.scale(g.reshape(g.matmul(s.negatives, g.reshape(s.text, Shape{c, 1})), Shape{ns[0]}), 1.0 / tau);
    Var candidates = literal ? neg : g.concat({pos, neg}, 0);
    // log-sum-exp shifted by the (constant) maximum candidate.
    const auto cv = g.value(candidates).data();
    const Real shift = *std::max_element(cv.begin(), cv.end());
    Var lse = g.add_scalar(g.log(g.sum_all(g.exp(g.add_scalar(candidates, -shift)))), shift);
    Var term = g.sub(lse, g.reshape(pos, Shape{}));
    total = i == 0 ? term : g.add(total, term);
  }
  return g.scale(total, 1.0 / static_cast<double>(samples.size()));
}

namespace {

double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

BoxPred decode_box(std::size_t cell, std::array<Real, 4> offsets, double prior_w, double prior_h,
                   const GridGeometry& grid) {
  const std::size_t row = cell / grid.cols, col = cell % grid.cols;
  const double cx = (static_cast<double>(col) + sigmoid(offsets[0])) * grid.stride;
  const double cy = (static_cast<double>(row) + sigmoid(offsets[1])) * grid.stride;
  const double w = prior_w * std::exp(std::clamp(static_cast<double>(offsets[2]), -30.0, 30.0));
  const double h = prior_h * std::exp(std::clamp(static_cast<double>(offsets[3]), -30.0, 30.0));
  const double iw = static_cast<double>(grid.image_w), ih = static_cast<double>(grid.image_h);
  const double x0 = std::clamp(cx - w / 2, 0.0, iw), x1 = std::clamp(cx + w / 2, 0.0, iw);
  const double y0 = std::clamp(cy - h / 2, 0.0, ih), y1 = std::clamp(cy + h / 2, 0.0, ih);
  BoxPred p;
  p.box = Box{x0, y0, x1 - x0, y1 - y0};
  p.cell = cell;
  return p;
}

std::array<Real, 4> encode_box(const Box& box, std::size_t cell, double prior_w, double prior_h,
                               const GridGeometry& grid) {
  const std::size_t row = cell / grid.cols, col = cell % grid.cols;
  const double fx = box.center_x() / grid.stride - static_cast<double>(col);
  const double fy = box.center_y() / grid.stride - static_cast<double>(row);
  if (!(fx > 0 && fx < 1 && fy > 0 && fy < 1)) throw std::invalid_argument("encode_box: centre outside cell");
  auto logit = [](double p) { return std::log(p / (1 - p)); };
  return {static_cast<Real>(logit(fx)), static_cast<Real>(logit(fy)), static_cast<Real>(std::log(box.w / prior_w)),
          static_cast<Real>(std::log(box.h / prior_h))};
}

std::size_t cell_of(double x, double y, const GridGeometry& grid) {
  const auto col = static_cast<std::size_t>(std::clamp(std::floor(x / grid.stride), 0.0, static_cast<double>(grid.cols - 1)));
  const auto row = static_cast<std::size_t>(std::clamp(std::floor(y / grid.stride), 0.0, static_cast<double>(grid.rows - 1)));
  return row * grid.cols + col;
}

BoxPred predict_box(std::span<const Real> scores, const Tensor& offsets, const GridGeometry& grid) {
  const std::size_t cells = grid.rows * grid.cols;
  if (scores.size() != cells || offsets.shape() != nc::Shape{4, grid.rows, grid.cols}) {
    throw ShapeError("predict_box: scores/offsets do not match the anchor grid");
  }
  const std::size_t best = argmax(scores);
  std::array<Real, 4> off{};
  for (std::size_t k = 0; k < 4; ++k) off[k] = offsets[k * cells + best];
  BoxPred p = decode_box(best, off, grid.prior(), grid.prior(), grid);
  p.score = static_cast<double>(scores[best]);
  return p;
}

}  // namespace weakmcn::wrec
