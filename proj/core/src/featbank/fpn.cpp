#include "weakmcn/featbank/fpn.hpp"

#include <string>

#include "weakmcn/error.hpp"

namespace weakmcn::featbank {

using nc::Shape;

void init_fpn_params(ParamStore& store, const DarkConfig& dark, std::size_t unified_dim, Rng& rng) {
  for (std::size_t level = 0; level < 3; ++level) {
    const std::string p = "fpn.lateral" + std::to_string(level + 1);
    store.add(p + ".w", nc::init_he(Shape{unified_dim, dark.channels[level + 2], 1, 1}, rng));
    store.add(p + ".b", Tensor(Shape{unified_dim}));
  }
}

std::array<Var, 3> fpn_fuse(Binder& bind, const std::array<Var, 3>& levels) {
  auto& g = bind.graph();
  std::array<Var, 3> lateral;
  for (std::size_t level = 0; level < 3; ++level) {
    const std::string p = "fpn.lateral" + std::to_string(level + 1);
    lateral[level] = g.conv2d(levels[level], bind(p + ".w"), bind(p + ".b"));
  }
  const std::size_t width = g.shape(lateral[0])[0];
  for (const auto& l : lateral) {
    if (g.shape(l)[0] != width) throw std::logic_error("fpn_fuse: projected channel widths disagree");
  }
  std::array<Var, 3> out;
  out[2] = lateral[2];
  for (std::size_t level = 2; level-- > 0;) {
    const auto& s = g.shape(lateral[level]);
    out[level] = g.add(lateral[level], g.resize(out[level + 1], s[1], s[2]));
  }
  return out;
}

}  // namespace weakmcn::featbank
