#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "weakmcn/numcore/graph.hpp"

namespace weakmcn::nc {

struct GradcheckOptions {
  Real step = 1e-5;
  Real tol = 1e-4;
  // Flat coordinates to probe; empty probes every coordinate.
  std::vector<std::size_t> coords;
};

struct GradcheckReport {
  std::string op;
  double max_rel_err = 0.0;
  std::vector<std::size_t> failing_coords;
  std::vector<double> analytic;
  std::vector<double> numeric;
  bool passed = false;

  // {"op", "max_rel_err", "failing_coords"}
  std::string to_json() const;
};

// Builds a scalar from the leaf it is given, inside the graph it is given.
using ScalarFn = std::function<Var(Graph&, Var)>;

// Compares the reverse-mode gradient of f at x with central differences
// (f(x+h) - f(x-h)) / 2h. Relative error per coordinate uses the denominator
// max(|analytic|, |numeric|, 1e-8); a probe where f is not finite (or throws
// a DomainError) is a failure at that coordinate.
GradcheckReport gradcheck(std::string op, const ScalarFn& f, const Tensor& x, const GradcheckOptions& opts = {});

}  // namespace weakmcn::nc
