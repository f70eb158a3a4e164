#include "weakmcn/numcore/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "weakmcn/error.hpp"

namespace weakmcn::nc {

void Adam::step(ParamStore& params, const std::map<std::string, Tensor, std::less<>>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.get(name);
    if (p.shape() != g.shape()) throw ShapeError("adam: gradient shape mismatch for " + name);
    auto [mit, m_new] = m_.try_emplace(name, p.shape());
    auto [vit, v_new] = v_.try_emplace(name, p.shape());
    auto m = mit->second.data();
    auto v = vit->second.data();
    auto pd = p.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double gi = static_cast<double>(gd[i]);
      const double mi = opts_.beta1 * static_cast<double>(m[i]) + (1.0 - opts_.beta1) * gi;
      const double vi = opts_.beta2 * static_cast<double>(v[i]) + (1.0 - opts_.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + opts_.eps);
      pd[i] = static_cast<Real>(static_cast<double>(pd[i]) - update);
    }
  }
}

double cosine_lr(double lr0, double t, double total) {
  if (total <= 0) return lr0;
  const double r = std::clamp(t / total, 0.0, 1.0);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * r));
}

}  // namespace weakmcn::nc
