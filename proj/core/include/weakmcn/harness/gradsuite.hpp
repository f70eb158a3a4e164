#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "weakmcn/numcore/gradcheck.hpp"

namespace weakmcn::harness {

struct GradSuiteOptions {
  std::size_t instances = 100;  // randomized instances per entry
  std::uint64_t seed = 1;
  std::size_t coords = 4;       // probed coordinates per parameter tensor in the L_total entries
};

struct GradSuiteEntry {
  std::string name;
  std::size_t instances = 0;
  std::size_t passed = 0;
  double max_rel_err = 0;
  nc::GradcheckReport worst;  // report of the instance with the largest error

  bool ok() const { return instances > 0 && passed == instances; }
};

// Gradient checks for L_atc (w.r.t. anchor features, text features and the
// contrastive projections), L_res, Dice, L_scl, and L_total w.r.t. every
// weak-phase parameter group of a small model.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts = {});

}  // namespace weakmcn::harness
