#pragma once

#include <array>
#include <cstddef>

#include "weakmcn/numcore/params.hpp"
#include "weakmcn/synthscenes/scene.hpp"

namespace weakmcn::featbank {

using nc::Binder;
using nc::ParamStore;
using nc::Tensor;
using nc::Var;

// Channel widths of the five stride-2 stages of the stand-in DarkNet.
struct DarkConfig {
  std::array<std::size_t, 5> channels{16, 32, 32, 64, 64};
};

inline constexpr std::size_t kDinoChannels = 11;
inline constexpr std::size_t kDinoPatch = 8;
inline constexpr std::size_t kSamChannels = 8;
inline constexpr std::size_t kSamStride = 4;

// Throws ShapeError unless both extents are positive multiples of 32.
void check_encoder_extent(std::size_t height, std::size_t width);

// Scene image as a (3, H, W) tensor.
Tensor image_tensor(const scenes::Scene& scene);

void init_dark_params(ParamStore& store, const DarkConfig& cfg, Rng& rng);

// Multi-scale maps F_1, F_2, F_3 with extents H / 2^(i+2): stride 8, 16, 32.
// image: (3, H, W).
std::array<Var, 3> encode_dark(Binder& bind, Var image);

// Frozen per-patch colour descriptors at stride 8: fraction of patch pixels
// nearest each named colour (background excluded), then mean RGB.
// Shape (11, H/8, W/8).
Tensor encode_dino(const scenes::Scene& scene);

// Frozen edge/region descriptors averaged over 4x4 cells: gradient magnitude,
// absolute differences along 4 directions, and a 3-channel hash embedding of
// the connected same-colour region id. Shape (8, H/4, W/4).
Tensor encode_sam(const scenes::Scene& scene);

}  // namespace weakmcn::featbank
