#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "weakmcn/geometry.hpp"
#include "weakmcn/numcore/graph.hpp"

namespace weakmcn::ccm {

using nc::Graph;
using nc::Real;
using nc::Tensor;
using nc::Var;

inline constexpr double kDiceEps = 1e-6;
inline constexpr double kDefaultAlpha = 0.3;

// Pixel (i, j) is set iff round(y) <= i < round(y + h) and round(x) <= j < round(x + w),
// rounding half-up and clamping to the image. Degenerate boxes give an empty mask.
Mask rasterize(const Box& box, std::size_t height, std::size_t width);

// Column-wise (length W) and row-wise (length H) maxima of a hard mask.
std::vector<std::uint8_t> project_x(const Mask& mask);
std::vector<std::uint8_t> project_y(const Mask& mask);

// Differentiable versions on an (H, W) probability map.
Var project_x(Graph& g, Var probs);
Var project_y(Graph& g, Var probs);

// 1 - 2 sum(p q) / (sum(p^2) + sum(q^2) + eps).
Var dice(Graph& g, Var p, Var q, double eps = kDiceEps);
double dice(std::span<const Real> p, std::span<const Real> q, double eps = kDiceEps);

// Dice on the x projections plus dice on the y projections of O and the
// rasterized box. The box mask is a constant.
Var scl_loss(Graph& g, Var probs, const Box& box, double eps = kDiceEps);

// Hard mask from probabilities: 1 where p >= 0.5. probs: (H, W).
Mask binarize(const Tensor& probs);

// |A and B| / |A or B|; 1 when both are empty.
double iou(const Mask& a, const Mask& b);

enum class GateSource { kPredictedMask, kPseudoMask };
const char* gate_source_name(GateSource s);
GateSource gate_source_from_name(std::string_view name);

struct GateState {
  double iou = 0.0;
  double alpha = kDefaultAlpha;
  bool open = false;
};

GateState gate(const Mask& compared, const Box& box, double alpha);

struct IslTerm {
  Var loss;  // gate * res_loss(O, M^); exactly zero (with zero gradients) when closed
  Var raw;   // res_loss(O, M^) without the gate
  GateState gate;
};

// The gate compares the binarized prediction (or the pseudo mask) with the
// rasterized box and is a constant for backpropagation.
IslTerm isl_loss(Graph& g, Var probs, const Box& box, const Mask& pseudo, double alpha,
                 GateSource source = GateSource::kPredictedMask);

}  // namespace weakmcn::ccm
