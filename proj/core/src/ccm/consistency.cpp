#include "weakmcn/ccm/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "weakmcn/error.hpp"
#include "weakmcn/wres/wres.hpp"

namespace weakmcn::ccm {

using nc::Shape;

namespace {

std::size_t round_clamp(double v, std::size_t hi) {
  const double r = std::floor(v + 0.5);
  if (!(r > 0)) return 0;  // also catches NaN
  return r >= static_cast<double>(hi) ? hi : static_cast<std::size_t>(r);
}

Tensor mask_tensor(const Mask& m) {
  Tensor t(Shape{m.height, m.width});
  auto d = t.data();
  for (std::size_t k = 0; k < m.bits.size(); ++k) d[k] = m.bits[k] ? 1 : 0;
  return t;
}

}  // namespace

Mask rasterize(const Box& box, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw std::invalid_argument("rasterize: image extents must be positive");
  Mask m(height, width);
  const std::size_t r0 = round_clamp(box.y, height), r1 = round_clamp(box.y + box.h, height);
  const std::size_t c0 = round_clamp(box.x, width), c1 = round_clamp(box.x + box.w, width);
  for (std::size_t i = r0; i < r1; ++i) {
    for (std::size_t j = c0; j < c1; ++j) m.at(i, j) = 1;
  }
  return m;
}

std::vector<std::uint8_t> project_x(const Mask& mask) {
  std::vector<std::uint8_t> out(mask.width, 0);
  for (std::size_t i = 0; i < mask.height; ++i) {
    for (std::size_t j = 0; j < mask.width; ++j) out[j] = out[j] | (mask.at(i, j) ? 1 : 0);
  }
  return out;
}

std::vector<std::uint8_t> project_y(const Mask& mask) {
  std::vector<std::uint8_t> out(mask.height, 0);
  for (std::size_t i = 0; i < mask.height; ++i) {
    for (std::size_t j = 0; j < mask.width; ++j) out[i] = out[i] | (mask.at(i, j) ? 1 : 0);
  }
  return out;
}

Var project_x(Graph& g, Var probs) {
  if (g.shape(probs).size() != 2) throw ShapeError("project_x expects (H, W), got " + nc::shape_str(g.shape(probs)));
  return g.max(probs, 0);
}

Var project_y(Graph& g, Var probs) {
  if (g.shape(probs).size() != 2) throw ShapeError("project_y expects (H, W), got " + nc::shape_str(g.shape(probs)));
  return g.max(probs, 1);
}

Var dice(Graph& g, Var p, Var q, double eps) {
  if (g.shape(p) != g.shape(q)) {
    throw ShapeError("dice: length mismatch " + nc::shape_str(g.shape(p)) + " vs " + nc::shape_str(g.shape(q)));
  }
  if (!(eps > 0)) throw std::invalid_argument("dice: eps must be positive");
  Var inter = g.sum_all(g.mul(p, q));
  Var denom = g.add_scalar(g.add(g.sum_all(g.mul(p, p)), g.sum_all(g.mul(q, q))), eps);
  return g.add_scalar(g.scale(g.div(inter, denom), -2), 1);
}

double dice(std::span<const Real> p, std::span<const Real> q, double eps) {
  if (p.size() != q.size()) {
    throw ShapeError("dice: length mismatch " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  }
  double pq = 0, pp = 0, qq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pq += static_cast<double>(p[i]) * q[i];
    pp += static_cast<double>(p[i]) * p[i];
    qq += static_cast<double>(q[i]) * q[i];
  }
  return 1 - 2 * pq / (pp + qq + eps);
}

Var scl_loss(Graph& g, Var probs, const Box& box, double eps) {
  const auto& s = g.shape(probs);
  if (s.size() != 2) throw ShapeError("scl_loss expects (H, W), got " + nc::shape_str(s));
  Var target = g.constant(mask_tensor(rasterize(box, s[0], s[1])));
  Var lx = dice(g, project_x(g, probs), project_x(g, target), eps);
  Var ly = dice(g, project_y(g, probs), project_y(g, target), eps);
  return g.add(lx, ly);
}

Mask binarize(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("binarize expects (H, W), got " + nc::shape_str(probs.shape()));
  Mask m(probs.dim(0), probs.dim(1));
  auto d = probs.data();
  for (std::size_t k = 0; k < d.size(); ++k) m.bits[k] = d[k] >= Real{0.5} ? 1 : 0;
  return m;
}

double iou(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("iou: mask shapes " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < a.bits.size(); ++k) {
    const bool x = a.bits[k], y = b.bits[k];
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

const char* gate_source_name(GateSource s) {
  return s == GateSource::kPredictedMask ? "predicted_mask" : "pseudo_mask";
}

GateSource gate_source_from_name(std::string_view name) {
  if (name == "predicted_mask") return GateSource::kPredictedMask;
  if (name == "pseudo_mask") return GateSource::kPseudoMask;
  throw ConfigError("unknown gate source '" + std::string(name) + "'");
}

GateState gate(const Mask& compared, const Box& box, double alpha) {
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("gate threshold alpha must lie in [0, 1]");
  GateState s;
  s.iou = iou(compared, rasterize(box, compared.height, compared.width));
  s.alpha = alpha;
  s.open = s.iou >= alpha;
  return s;
}

IslTerm isl_loss(Graph& g, Var probs, const Box& box, const Mask& pseudo, double alpha, GateSource source) {
  const GateState st =
      source == GateSource::kPredictedMask ? gate(binarize(g.value(probs)), box, alpha) : gate(pseudo, box, alpha);
  Var res = wres::res_loss(g, probs, pseudo);
  return {st.open ? res : g.scale(res, 0), res, st};
}

}  // namespace weakmcn::ccm
