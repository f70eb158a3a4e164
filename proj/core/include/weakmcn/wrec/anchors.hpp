#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "weakmcn/geometry.hpp"
#include "weakmcn/numcore/params.hpp"

namespace weakmcn::wrec {

using nc::Binder;
using nc::Graph;
using nc::ParamStore;
using nc::Real;
using nc::Tensor;
using nc::Var;

void init_contrastive_params(ParamStore& store, std::size_t anchor_dim, std::size_t text_dim,
                             std::size_t contrastive_dim, Rng& rng);

struct AnchorMatch {
  Var anchors;  // (cells, C): projected anchor features, row-major cell order
  Var text;     // (C): projected text feature
  Var scores;   // (cells): <anchor, text>
};

// Projects the (D, h, w) anchor grid and f_t into the shared contrastive
// space and scores every cell by dot product (optionally after L2
// normalisation of both sides).
AnchorMatch similarities(Binder& bind, Var anchor_grid, Var text_feature, bool cosine = false);

// The k highest-scoring cells in descending score order, ties to the lower
// index. Throws std::invalid_argument unless 1 <= k <= scores.size().
std::vector<std::size_t> topk_select(std::span<const Real> scores, std::size_t k);

// Index of the maximum, first index on ties.
std::size_t argmax(std::span<const Real> scores);

struct AtcSample {
  Var positive;   // (C)
  Var text;       // (C)
  Var negatives;  // (M, C), M >= 1
};

// Mean over samples of -log(exp(<p,t>/tau) / sum_c exp(<c,t>/tau)). The
// candidate set holds the positive and the negatives; with `literal` the
// positive is left out of the denominator.
Var atc_loss(Graph& g, const std::vector<AtcSample>& samples, double tau, bool literal = false);

struct BoxPred {
  Box box;
  std::size_t cell = 0;
  double score = 0.0;
};

struct GridGeometry {
  std::size_t rows = 0, cols = 0;
  double stride = 0;  // image pixels per cell
  std::size_t image_h = 0, image_w = 0;

  // One square prior per cell, half the stride.
  double prior() const { return stride / 2; }
};

// center = ((col + sigmoid(tx)) * stride, (row + sigmoid(ty)) * stride),
// size = (pw * exp(tw), ph * exp(th)); returned top-left and clamped to the image.
BoxPred decode_box(std::size_t cell, std::array<Real, 4> offsets, double prior_w, double prior_h,
                   const GridGeometry& grid);

// Offsets that decode back to `box` at `cell` (no clamping). The centre must
// lie strictly inside the cell.
std::array<Real, 4> encode_box(const Box& box, std::size_t cell, double prior_w, double prior_h,
                               const GridGeometry& grid);

// Cell containing a point, clamped to the grid.
std::size_t cell_of(double x, double y, const GridGeometry& grid);

// Decodes at the argmax-similarity cell. offsets: (4, rows, cols).
BoxPred predict_box(std::span<const Real> scores, const Tensor& offsets, const GridGeometry& grid);

}  // namespace weakmcn::wrec
