#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "weakmcn/numcore/params.hpp"

namespace weakmcn::nc {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  // One update of every parameter present in `grads` (names into `params`).
  void step(ParamStore& params, const std::map<std::string, Tensor, std::less<>>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  AdamOptions opts_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor, std::less<>> m_;
  std::map<std::string, Tensor, std::less<>> v_;
};

// lr0 * 0.5 * (1 + cos(pi * t / total)); t is clamped to [0, total].
double cosine_lr(double lr0, double t, double total);

}  // namespace weakmcn::nc
