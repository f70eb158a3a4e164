#include "weakmcn/numcore/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kernels.hpp"
#include "weakmcn/error.hpp"

namespace weakmcn::nc {

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) shape_mismatch(op, a, b);
    out[i] = std::max(da, db);
  }
  return out;
}

// For each flat index of `out`, the flat index of the broadcast source `in`.
std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> eff(rank, 0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != 1) eff[i + offset] = in_strides[i];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t f = 0; f < n; ++f) {
    map[f] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      src += eff[ax];
      if (idx[ax] < out[ax]) break;
      src -= eff[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Splits shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void check_axis(std::string_view op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(s));
  }
}

// Maps each input flat index to its reduced output index (reduced axes dropped).
std::pair<Shape, std::vector<std::size_t>> reduction_map(std::string_view op, const Shape& in,
                                                         std::vector<std::size_t> axes) {
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (auto ax : axes) check_axis(op, in, ax);
  Shape out;
  std::vector<bool> reduced(in.size(), false);
  for (auto ax : axes) reduced[ax] = true;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!reduced[i]) out.push_back(in[i]);
  }
  // Input index -> output index via a broadcast map of the kept axes.
  Shape kept_as_in(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) kept_as_in[i] = reduced[i] ? 1 : in[i];
  auto map = broadcast_map(kept_as_in, in);
  return {out, std::move(map)};
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kMax: return "max";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kConcat: return "concat";
    case OpKind::kResize: return "resize";
    case OpKind::kClamp: return "clamp";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kIndexSelect: return "index_select";
  }
  return "unknown";
}

const Tensor& Gradients::operator[](Var v) const {
  if (v.id < grads_.size() && grads_[v.id]) return *grads_[v.id];
  if (v.id < shapes_.size()) {
    if (!zeros_[v.id]) zeros_[v.id] = Tensor(shapes_[v.id]);
    return *zeros_[v.id];
  }
  throw std::out_of_range("gradient lookup for unknown node " + std::to_string(v.id));
}

bool Gradients::has(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }

Var Graph::push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn) {
  Node node;
  node.kind = kind;
  node.requires_grad = any_requires_grad(inputs);
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

bool Graph::any_requires_grad(const std::vector<std::size_t>& inputs) const {
  return std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
}

Var Graph::leaf(Tensor t) {
  Node node;
  node.requires_grad = t.requires_grad();
  node.value = std::move(t);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Graph::param(Tensor t) {
  t.set_requires_grad(true);
  return leaf(std::move(t));
}

Var Graph::constant(Tensor t) {
  t.set_requires_grad(false);
  return leaf(std::move(t));
}

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

Var Graph::binary(OpKind kind, Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const auto op = op_name(kind);
  const bool same = ta.shape() == tb.shape();
  const Shape out_shape = same ? ta.shape() : broadcast_shape(op, ta.shape(), tb.shape());
  const std::size_t n = shape_numel(out_shape);
  std::vector<std::size_t> ma, mb;
  if (!same) {
    ma = broadcast_map(ta.shape(), out_shape);
    mb = broadcast_map(tb.shape(), out_shape);
  }
  auto ia = [&](std::size_t i) { return same ? i : ma[i]; };
  auto ib = [&](std::size_t i) { return same ? i : mb[i]; };

  Tensor out(out_shape);
  auto o = out.data();
  auto da = ta.data();
  auto db = tb.data();
  switch (kind) {
    case OpKind::kAdd:
      for (std::size_t i = 0; i < n; ++i) o[i] = da[ia(i)] + db[ib(i)];
      break;
    case OpKind::kSub:
      for (std::size_t i = 0; i < n; ++i) o[i] = da[ia(i)] - db[ib(i)];
      break;
    case OpKind::kMul:
      for (std::size_t i = 0; i < n; ++i) o[i] = da[ia(i)] * db[ib(i)];
      break;
    case OpKind::kDiv:
      for (auto v : db) {
        if (v == Real{0}) throw DomainError("div: zero in denominator");
      }
      for (std::size_t i = 0; i < n; ++i) o[i] = da[ia(i)] / db[ib(i)];
      break;
    default:
      throw std::logic_error("binary: unsupported op");
  }

  auto fn = [kind, a = a.id, b = b.id, same, ma = std::move(ma), mb = std::move(mb)](
                const Graph& g, std::size_t self, const Tensor& go, std::vector<Tensor*>& gi) {
    auto gd = go.data();
    auto xa = g.nodes_[a].value.data();
    auto xb = g.nodes_[b].value.data();
    auto idx_a = [&](std::size_t i) { return same ? i : ma[i]; };
    auto idx_b = [&](std::size_t i) { return same ? i : mb[i]; };
    const std::size_t n = gd.size();
    if (gi[0]) {
      auto ga = gi[0]->data();
      switch (kind) {
        case OpKind::kAdd:
        case OpKind::kSub:
          for (std::size_t i = 0; i < n; ++i) ga[idx_a(i)] += gd[i];
          break;
        case OpKind::kMul:
          for (std::size_t i = 0; i < n; ++i) ga[idx_a(i)] += gd[i] * xb[idx_b(i)];
          break;
        case OpKind::kDiv:
          for (std::size_t i = 0; i < n; ++i) ga[idx_a(i)] += gd[i] / xb[idx_b(i)];
          break;
        default:
          break;
      }
    }
    if (gi[1]) {
      auto gb = gi[1]->data();
      switch (kind) {
        case OpKind::kAdd:
          for (std::size_t i = 0; i < n; ++i) gb[idx_b(i)] += gd[i];
          break;
        case OpKind::kSub:
          for (std::size_t i = 0; i < n; ++i) gb[idx_b(i)] -= gd[i];
          break;
        case OpKind::kMul:
          for (std::size_t i = 0; i < n; ++i) gb[idx_b(i)] += gd[i] * xa[idx_a(i)];
          break;
        case OpKind::kDiv: {
          auto y = g.nodes_[self].value.data();
          for (std::size_t i = 0; i < n; ++i) gb[idx_b(i)] -= gd[i] * y[i] / xb[idx_b(i)];
          break;
        }
        default:
          break;
      }
    }
  };
  return push(kind, {a.id, b.id}, std::move(out), std::move(fn));
}

Var Graph::add(Var a, Var b) { return binary(OpKind::kAdd, a, b); }
Var Graph::sub(Var a, Var b) { return binary(OpKind::kSub, a, b); }
Var Graph::mul(Var a, Var b) { return binary(OpKind::kMul, a, b); }
Var Graph::div(Var a, Var b) { return binary(OpKind::kDiv, a, b); }

Var Graph::scale(Var a, Real s) {
  Tensor out = value(a);
  out.set_requires_grad(false);
  for (auto& v : out.data()) v *= s;
  return push(OpKind::kScale, {a.id}, std::move(out),
              [s](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto g = gi[0]->data();
                auto d = go.data();
                for (std::size_t i = 0; i < d.size(); ++i) g[i] += s * d[i];
              });
}

Var Graph::add_scalar(Var a, Real s) {
  Tensor out = value(a);
  out.set_requires_grad(false);
  for (auto& v : out.data()) v += s;
  return push(OpKind::kAddScalar, {a.id}, std::move(out),
              [](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                accumulate(gi[0], go);
              });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0]) {
    shape_mismatch("matmul", ta.shape(), tb.shape());
  }
  const std::size_t n = ta.shape()[0], k = ta.shape()[1], m = tb.shape()[1];
  Tensor out(Shape{n, m});
  kernels::gemm_nn(n, k, m, ta.data().data(), tb.data().data(), out.data().data());
  return push(OpKind::kMatMul, {a.id, b.id}, std::move(out),
              [a = a.id, b = b.id, n, k, m](const Graph& g, std::size_t, const Tensor& go,
                                            std::vector<Tensor*>& gi) {
                const Real* xa = g.nodes_[a].value.data().data();
                const Real* xb = g.nodes_[b].value.data().data();
                if (gi[0]) kernels::gemm_nt(n, m, k, go.data().data(), xb, gi[0]->data().data());
                if (gi[1]) kernels::gemm_tn(k, n, m, xa, go.data().data(), gi[1]->data().data());
              });
}

namespace {

struct ConvGeometry {
  std::size_t c, h, w, o, kk, stride, dil, pad, oh, ow;
};

// cols: (c*kk*kk) x (oh*ow)
void im2col(const ConvGeometry& q, const Real* x, Real* cols) {
  const std::size_t plane = q.oh * q.ow;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < q.c; ++ci) {
    const Real* xc = x + ci * q.h * q.w;
    for (std::size_t ky = 0; ky < q.kk; ++ky) {
      for (std::size_t kx = 0; kx < q.kk; ++kx, ++row) {
        Real* dst = cols + row * plane;
        for (std::size_t oy = 0; oy < q.oh; ++oy) {
          const long iy = static_cast<long>(oy * q.stride + ky * q.dil) - static_cast<long>(q.pad);
          Real* drow = dst + oy * q.ow;
          if (iy < 0 || iy >= static_cast<long>(q.h)) {
            std::fill(drow, drow + q.ow, Real{0});
            continue;
          }
          const Real* srow = xc + static_cast<std::size_t>(iy) * q.w;
          for (std::size_t ox = 0; ox < q.ow; ++ox) {
            const long ix = static_cast<long>(ox * q.stride + kx * q.dil) - static_cast<long>(q.pad);
            drow[ox] = (ix < 0 || ix >= static_cast<long>(q.w)) ? Real{0} : srow[ix];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& q, const Real* cols, Real* dx) {
  const std::size_t plane = q.oh * q.ow;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < q.c; ++ci) {
    Real* xc = dx + ci * q.h * q.w;
    for (std::size_t ky = 0; ky < q.kk; ++ky) {
      for (std::size_t kx = 0; kx < q.kk; ++kx, ++row) {
        const Real* src = cols + row * plane;
        for (std::size_t oy = 0; oy < q.oh; ++oy) {
          const long iy = static_cast<long>(oy * q.stride + ky * q.dil) - static_cast<long>(q.pad);
          if (iy < 0 || iy >= static_cast<long>(q.h)) continue;
          Real* drow = xc + static_cast<std::size_t>(iy) * q.w;
          const Real* srow = src + oy * q.ow;
          for (std::size_t ox = 0; ox < q.ow; ++ox) {
            const long ix = static_cast<long>(ox * q.stride + kx * q.dil) - static_cast<long>(q.pad);
            if (ix >= 0 && ix < static_cast<long>(q.w)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var Graph::conv2d(Var x, Var weight, std::optional<Var> bias, Conv2dOptions opts) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(weight);
  if (tx.rank() != 3 || tw.rank() != 4 || tw.shape()[1] != tx.shape()[0] || tw.shape()[2] != tw.shape()[3] ||
      tw.shape()[2] % 2 == 0) {
    shape_mismatch("conv2d", tx.shape(), tw.shape());
  }
  if (opts.stride == 0 || opts.dilation == 0) throw ShapeError("conv2d: stride and dilation must be >= 1");
  ConvGeometry q{};
  q.c = tx.shape()[0];
  q.h = tx.shape()[1];
  q.w = tx.shape()[2];
  q.o = tw.shape()[0];
  q.kk = tw.shape()[2];
  q.stride = opts.stride;
  q.dil = opts.dilation;
  q.pad = q.dil * (q.kk - 1) / 2;
  q.oh = (q.h + 2 * q.pad - q.dil * (q.kk - 1) - 1) / q.stride + 1;
  q.ow = (q.w + 2 * q.pad - q.dil * (q.kk - 1) - 1) / q.stride + 1;
  if (bias) {
    const Tensor& tb = value(*bias);
    if (tb.rank() != 1 || tb.shape()[0] != q.o) shape_mismatch("conv2d bias", tb.shape(), Shape{q.o});
  }

  const std::size_t rows = q.c * q.kk * q.kk;
  const std::size_t plane = q.oh * q.ow;
  std::vector<Real> cols(rows * plane);
  im2col(q, tx.data().data(), cols.data());
  Tensor out(Shape{q.o, q.oh, q.ow});
  Real* po = out.data().data();
  if (bias) {
    auto b = value(*bias).data();
    for (std::size_t oc = 0; oc < q.o; ++oc) std::fill(po + oc * plane, po + (oc + 1) * plane, b[oc]);
  }
  kernels::gemm_nn(q.o, rows, plane, tw.data().data(), cols.data(), po);

  std::vector<std::size_t> ins{x.id, weight.id};
  if (bias) ins.push_back(bias->id);
  return push(OpKind::kConv2d, std::move(ins), std::move(out),
              [q, xid = x.id, wid = weight.id](const Graph& g, std::size_t, const Tensor& go,
                                               std::vector<Tensor*>& gi) {
                const std::size_t rows = q.c * q.kk * q.kk;
                const std::size_t plane = q.oh * q.ow;
                const Real* pg = go.data().data();
                if (gi[1]) {
                  std::vector<Real> cols(rows * plane);
                  im2col(q, g.nodes_[xid].value.data().data(), cols.data());
                  kernels::gemm_nt(q.o, plane, rows, pg, cols.data(), gi[1]->data().data());
                }
                if (gi[0]) {
                  std::vector<Real> dcols(rows * plane, Real{0});
                  kernels::gemm_tn(rows, q.o, plane, g.nodes_[wid].value.data().data(), pg, dcols.data());
                  col2im(q, dcols.data(), gi[0]->data().data());
                }
                if (gi.size() > 2 && gi[2]) {
                  auto gb = gi[2]->data();
                  for (std::size_t oc = 0; oc < q.o; ++oc) {
                    Real acc = 0;
                    for (std::size_t i = 0; i < plane; ++i) acc += pg[oc * plane + i];
                    gb[oc] += acc;
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

Var Graph::relu(Var a) {
  Tensor out = value(a);
  out.set_requires_grad(false);
  for (auto& v : out.data()) v = v > Real{0} ? v : Real{0};
  return push(OpKind::kRelu, {a.id}, std::move(out),
              [a = a.id](const Graph& g, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto x = g.nodes_[a].value.data();
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) {
                  if (x[i] > Real{0}) r[i] += d[i];
                }
              });
}

Var Graph::sigmoid(Var a) {
  Tensor out = value(a);
  out.set_requires_grad(false);
  for (auto& v : out.data()) {
    v = v >= Real{0} ? Real{1} / (Real{1} + std::exp(-v)) : std::exp(v) / (Real{1} + std::exp(v));
  }
  return push(OpKind::kSigmoid, {a.id}, std::move(out),
              [](const Graph& g, std::size_t self, const Tensor& go, std::vector<Tensor*>& gi) {
                auto y = g.nodes_[self].value.data();
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) r[i] += d[i] * y[i] * (Real{1} - y[i]);
              });
}

Var Graph::exp(Var a) {
  Tensor out = value(a);
  out.set_requires_grad(false);
  for (auto& v : out.data()) v = std::exp(v);
  return push(OpKind::kExp, {a.id}, std::move(out),
              [](const Graph& g, std::size_t self, const Tensor& go, std::vector<Tensor*>& gi) {
                auto y = g.nodes_[self].value.data();
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) r[i] += d[i] * y[i];
              });
}

Var Graph::log(Var a) {
  Tensor out = value(a);
  out.set_requires_grad(false);
  for (auto& v : out.data()) {
    if (!(v > Real{0})) throw DomainError("log: non-positive input " + std::to_string(v) + "; clamp first");
    v = std::log(v);
  }
  return push(OpKind::kLog, {a.id}, std::move(out),
              [a = a.id](const Graph& g, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto x = g.nodes_[a].value.data();
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) r[i] += d[i] / x[i];
              });
}

Var Graph::clamp(Var a, Real lo, Real hi) {
  if (lo > hi) throw DomainError("clamp: lo > hi");
  Tensor out = value(a);
  out.set_requires_grad(false);
  for (auto& v : out.data()) v = std::clamp(v, lo, hi);
  return push(OpKind::kClamp, {a.id}, std::move(out),
              [a = a.id, lo, hi](const Graph& g, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto x = g.nodes_[a].value.data();
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) {
                  if (x[i] >= lo && x[i] <= hi) r[i] += d[i];
                }
              });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Var Graph::softmax(Var a, std::size_t axis) {
  const Tensor& ta = value(a);
  check_axis("softmax", ta.shape(), axis);
  const auto sp = split_axis(ta.shape(), axis);
  Tensor out(ta.shape());
  auto x = ta.data();
  auto y = out.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      Real mx = x[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, x[base + e * sp.inner]);
      Real total = 0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const Real v = std::exp(x[base + e * sp.inner] - mx);
        y[base + e * sp.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) y[base + e * sp.inner] /= total;
    }
  }
  return push(OpKind::kSoftmax, {a.id}, std::move(out),
              [sp](const Graph& g, std::size_t self, const Tensor& go, std::vector<Tensor*>& gi) {
                auto y = g.nodes_[self].value.data();
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t o = 0; o < sp.outer; ++o) {
                  for (std::size_t in = 0; in < sp.inner; ++in) {
                    const std::size_t base = o * sp.extent * sp.inner + in;
                    Real dot = 0;
                    for (std::size_t e = 0; e < sp.extent; ++e) {
                      const std::size_t i = base + e * sp.inner;
                      dot += d[i] * y[i];
                    }
                    for (std::size_t e = 0; e < sp.extent; ++e) {
                      const std::size_t i = base + e * sp.inner;
                      r[i] += y[i] * (d[i] - dot);
                    }
                  }
                }
              });
}

Var Graph::sum(Var a, std::vector<std::size_t> axes) {
  const Tensor& ta = value(a);
  auto [out_shape, map] = reduction_map("sum", ta.shape(), std::move(axes));
  Tensor out(out_shape);
  auto x = ta.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[map[i]] += x[i];
  return push(OpKind::kSum, {a.id}, std::move(out),
              [map = std::move(map)](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < r.size(); ++i) r[i] += d[map[i]];
              });
}

Var Graph::sum_all(Var a) {
  std::vector<std::size_t> axes(value(a).rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return sum(a, std::move(axes));
}

Var Graph::mean(Var a, std::vector<std::size_t> axes) {
  const Tensor& ta = value(a);
  auto [out_shape, map] = reduction_map("mean", ta.shape(), std::move(axes));
  const Real count = static_cast<Real>(ta.size() / shape_numel(out_shape));
  Tensor out(out_shape);
  auto x = ta.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[map[i]] += x[i];
  for (auto& v : y) v /= count;
  return push(OpKind::kMean, {a.id}, std::move(out),
              [map = std::move(map), count](const Graph&, std::size_t, const Tensor& go,
                                            std::vector<Tensor*>& gi) {
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < r.size(); ++i) r[i] += d[map[i]] / count;
              });
}

Var Graph::mean_all(Var a) {
  std::vector<std::size_t> axes(value(a).rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return mean(a, std::move(axes));
}

Var Graph::max(Var a, std::size_t axis) {
  const Tensor& ta = value(a);
  check_axis("max", ta.shape(), axis);
  const auto sp = split_axis(ta.shape(), axis);
  Shape out_shape = ta.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(axis));
  Tensor out(out_shape);
  auto x = ta.data();
  auto y = out.data();
  std::vector<std::size_t> arg(out.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      std::size_t best = base;
      for (std::size_t e = 1; e < sp.extent; ++e) {
        const std::size_t i = base + e * sp.inner;
        if (x[i] > x[best]) best = i;
      }
      y[o * sp.inner + in] = x[best];
      arg[o * sp.inner + in] = best;
    }
  }
  return push(OpKind::kMax, {a.id}, std::move(out),
              [arg = std::move(arg)](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) r[arg[i]] += d[i];
              });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Var Graph::broadcast_to(Var a, Shape shape) {
  const Tensor& ta = value(a);
  if (broadcast_shape("broadcast", ta.shape(), shape) != shape) shape_mismatch("broadcast", ta.shape(), shape);
  auto map = broadcast_map(ta.shape(), shape);
  Tensor out(shape);
  auto x = ta.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[map[i]];
  return push(OpKind::kBroadcast, {a.id}, std::move(out),
              [map = std::move(map)](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) r[map[i]] += d[i];
              });
}

Var Graph::concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = shape(parts[0]);
  check_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (auto p : parts) {
    const Shape& s = shape(p);
    if (s.size() != first.size()) shape_mismatch("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) shape_mismatch("concat", first, s);
    }
    out_shape[axis] += s[axis];
    extents.push_back(s[axis]);
  }
  const auto sp = split_axis(out_shape, axis);
  Tensor out(out_shape);
  auto y = out.data();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto x = value(parts[p]).data();
    const std::size_t chunk = extents[p] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(x.begin() + static_cast<long>(o * chunk), chunk,
                  y.begin() + static_cast<long>(o * sp.extent * sp.inner + offset));
    }
    offset += chunk;
  }
  std::vector<std::size_t> ids;
  for (auto p : parts) ids.push_back(p.id);
  return push(OpKind::kConcat, std::move(ids), std::move(out),
              [sp, extents](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto d = go.data();
                std::size_t offset = 0;
                for (std::size_t p = 0; p < gi.size(); ++p) {
                  const std::size_t chunk = extents[p] * sp.inner;
                  if (gi[p]) {
                    auto r = gi[p]->data();
                    for (std::size_t o = 0; o < sp.outer; ++o) {
                      const std::size_t src = o * sp.extent * sp.inner + offset;
                      for (std::size_t i = 0; i < chunk; ++i) r[o * chunk + i] += d[src + i];
                    }
                  }
                  offset += chunk;
                }
              });
}

std::vector<Real> resize_weights(std::size_t in, std::size_t out) {
  std::vector<Real> w(out * in, Real{0});
  if (in == out) {
    for (std::size_t i = 0; i < in; ++i) w[i * in + i] = 1;
    return w;
  }
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  if (out > in) {
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      const double frac = src - static_cast<double>(i0);
      w[i * in + i0] += static_cast<Real>(1.0 - frac);
      w[i * in + i1] += static_cast<Real>(frac);
    }
    return w;
  }
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale;
    double total = 0;
    for (std::size_t j = 0; j < in; ++j) {
      const double t = (static_cast<double>(j) + 0.5 - center) / scale;
      const double v = std::max(0.0, 1.0 - std::abs(t));
      w[i * in + j] = static_cast<Real>(v);
      total += v;
    }
    for (std::size_t j = 0; j < in; ++j) w[i * in + j] = static_cast<Real>(w[i * in + j] / total);
  }
  return w;
}

Var Graph::resize(Var x, std::size_t out_h, std::size_t out_w) {
  const Tensor& tx = value(x);
  if (tx.rank() != 3) throw ShapeError("resize: expected (C, H, W), got " + shape_str(tx.shape()));
  if (out_h == 0 || out_w == 0) throw ShapeError("resize: target extents must be positive");
  const std::size_t c = tx.shape()[0], h = tx.shape()[1], w = tx.shape()[2];
  auto ry = resize_weights(h, out_h);
  auto rx = resize_weights(w, out_w);
  Tensor out(Shape{c, out_h, out_w});
  std::vector<Real> tmp(h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::fill(tmp.begin(), tmp.end(), Real{0});
    kernels::gemm_nt(h, w, out_w, tx.data().data() + ch * h * w, rx.data(), tmp.data());
    kernels::gemm_nn(out_h, h, out_w, ry.data(), tmp.data(), out.data().data() + ch * out_h * out_w);
  }
  return push(OpKind::kResize, {x.id}, std::move(out),
              [c, h, w, out_h, out_w, ry = std::move(ry), rx = std::move(rx)](
                  const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                std::vector<Real> tmp(h * out_w);
                for (std::size_t ch = 0; ch < c; ++ch) {
                  std::fill(tmp.begin(), tmp.end(), Real{0});
                  kernels::gemm_tn(h, out_h, out_w, ry.data(), go.data().data() + ch * out_h * out_w, tmp.data());
                  kernels::gemm_nn(h, out_w, w, tmp.data(), rx.data(), gi[0]->data().data() + ch * h * w);
                }
              });
}

Var Graph::reshape(Var a, Shape shape) {
  const Tensor& ta = value(a);
  if (shape_numel(shape) != ta.size()) shape_mismatch("reshape", ta.shape(), shape);
  std::vector<Real> data(ta.data().begin(), ta.data().end());
  return push(OpKind::kReshape, {a.id}, Tensor(std::move(shape), std::move(data)),
              [](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < d.size(); ++i) r[i] += d[i];
              });
}

Var Graph::transpose(Var a) {
  const Tensor& ta = value(a);
  if (ta.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(ta.shape()));
  const std::size_t n = ta.shape()[0], m = ta.shape()[1];
  Tensor out(Shape{m, n});
  auto x = ta.data();
  auto y = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) y[j * n + i] = x[i * m + j];
  }
  return push(OpKind::kTranspose, {a.id}, std::move(out),
              [n, m](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < n; ++i) {
                  for (std::size_t j = 0; j < m; ++j) r[i * m + j] += d[j * n + i];
                }
              });
}

Var Graph::index_select(Var a, const std::vector<std::size_t>& rows) {
  const Tensor& ta = value(a);
  if (ta.rank() == 0) throw ShapeError("index_select: scalar input");
  if (rows.empty()) throw ShapeError("index_select: empty index list");
  const std::size_t extent = ta.shape()[0];
  const std::size_t inner = ta.size() / extent;
  for (auto r : rows) {
    if (r >= extent) {
      throw ShapeError("index_select: row " + std::to_string(r) + " out of range for shape " +
                       shape_str(ta.shape()));
    }
  }
  Shape out_shape = ta.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  auto x = ta.data();
  auto y = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.begin() + static_cast<long>(rows[i] * inner), inner, y.begin() + static_cast<long>(i * inner));
  }
  return push(OpKind::kIndexSelect, {a.id}, std::move(out),
              [rows, inner](const Graph&, std::size_t, const Tensor& go, std::vector<Tensor*>& gi) {
                auto d = go.data();
                auto r = gi[0]->data();
                for (std::size_t i = 0; i < rows.size(); ++i) {
                  for (std::size_t j = 0; j < inner; ++j) r[rows[i] * inner + j] += d[i * inner + j];
                }
              });
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

Gradients Graph::backward(Var root) const {
  if (root.id >= nodes_.size()) throw std::out_of_range("backward: unknown root");
  const Tensor& rv = nodes_[root.id].value;
  if (rv.size() != 1) throw ShapeError("backward: root must be scalar, got shape " + shape_str(rv.shape()));

  Gradients out;
  out.grads_.resize(nodes_.size());
  out.zeros_.resize(nodes_.size());
  out.shapes_.reserve(nodes_.size());
  for (const auto& n : nodes_) out.shapes_.push_back(n.value.shape());
  if (!nodes_[root.id].requires_grad) return out;

  out.grads_[root.id] = Tensor(rv.shape(), Real{1});
  std::vector<Tensor*> gin;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || !out.grads_[id] || !node.backward) continue;
    gin.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!out.grads_[in]) out.grads_[in] = Tensor(nodes_[in].value.shape());
      gin[k] = &*out.grads_[in];
    }
    node.backward(*this, id, *out.grads_[id], gin);
  }
  return out;
}

}  // namespace weakmcn::nc
