#pragma once

#include <array>

#include "weakmcn/featbank/encoders.hpp"

namespace weakmcn::featbank {

void init_fpn_params(ParamStore& store, const DarkConfig& dark, std::size_t unified_dim, Rng& rng);

// Top-down fusion: 1x1 projection of each level to the unified width, then
// each coarser output is bilinearly upsampled and added into the next finer
// level. Spatial extents are preserved per level.
std::array<Var, 3> fpn_fuse(Binder& bind, const std::array<Var, 3>& levels);

}  // namespace weakmcn::featbank
