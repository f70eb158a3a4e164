#include "weakmcn/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "weakmcn/error.hpp"

namespace weakmcn::nc {

namespace {

std::optional<double> evaluate(const ScalarFn& f, const Tensor& x) {
  try {
    Graph g;
    Var root = f(g, g.constant(x));
    const double v = static_cast<double>(g.value(root).item());
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

}  // namespace

std::string GradcheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = op;
  j["max_rel_err"] = max_rel_err;
  j["failing_coords"] = failing_coords;
  return j.dump();
}

GradcheckReport gradcheck(std::string op, const ScalarFn& f, const Tensor& x, const GradcheckOptions& opts) {
  if constexpr (sizeof(Real) != 8) {
    throw std::logic_error("gradcheck requires 64-bit tensors");
  }
  GradcheckReport report;
  report.op = std::move(op);

  Tensor analytic;
  {
    Graph g;
    Tensor leaf = x;
    Var xv = g.param(std::move(leaf));
    Var root = f(g, xv);
    if (g.value(root).size() != 1) throw ShapeError("gradcheck: function must return a scalar");
    analytic = g.backward(root)[xv];
  }

  std::vector<std::size_t> coords = opts.coords;
  if (coords.empty()) {
    coords.resize(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
  }

  Tensor probe = x;
  for (auto c : coords) {
    if (c >= x.size()) throw std::out_of_range("gradcheck: coordinate out of range");
    const Real orig = probe[c];
    probe[c] = orig + opts.step;
    const auto fp = evaluate(f, probe);
    probe[c] = orig - opts.step;
    const auto fm = evaluate(f, probe);
    probe[c] = orig;

    const double a = static_cast<double>(analytic[c]);
    report.analytic.push_back(a);
    if (!fp || !fm) {
      report.numeric.push_back(std::numeric_limits<double>::quiet_NaN());
      report.failing_coords.push_back(c);
      report.max_rel_err = std::numeric_limits<double>::infinity();
      continue;
    }
    const double n = (*fp - *fm) / (2.0 * static_cast<double>(opts.step));
    report.numeric.push_back(n);
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    const double rel = std::abs(a - n) / denom;
    report.max_rel_err = std::max(report.max_rel_err, rel);
    if (!(rel < static_cast<double>(opts.tol))) report.failing_coords.push_back(c);
  }
  report.passed = report.failing_coords.empty();
  return report;
}

}  // namespace weakmcn::nc
