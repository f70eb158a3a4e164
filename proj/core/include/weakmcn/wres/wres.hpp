#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "weakmcn/geometry.hpp"
#include "weakmcn/numcore/params.hpp"
#include "weakmcn/synthscenes/scene.hpp"

namespace weakmcn::wres {

using nc::Binder;
using nc::Graph;
using nc::ParamStore;
using nc::Tensor;
using nc::Var;

enum class NoiseMode { kClean, kDilate, kErode, kDistractor };
const char* noise_mode_name(NoiseMode m);

struct OracleConfig {
  double p_clean = 1.0;
  double p_dilate = 0.0;
  double p_erode = 0.0;
  double p_distractor = 0.0;
  std::size_t radius = 1;  // 1 or 2
  std::uint64_t seed = 0;

  // Throws ConfigError unless probabilities lie in [0, 1], sum to 1 within
  // 1e-9, and radius is 1 or 2.
  void validate() const;
  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

struct PseudoMask {
  Mask mask;
  NoiseMode mode = NoiseMode::kClean;
  Box prompt;
  std::optional<std::size_t> object;  // prompted object, none when the prompt misses everything
};

// Square structuring element of side 2r + 1; pixels outside the image count as background.
Mask dilate(const Mask& m, std::size_t r);
Mask erode(const Mask& m, std::size_t r);

// SAM stand-in: picks the object whose gt box has the highest IoU with the
// prompt (lower index on ties) and corrupts its mask with a sampled noise
// mode. `key` is mixed with the config seed so each call can draw its own
// mode while staying reproducible.
PseudoMask oracle_mask(const scenes::Scene& scene, const Box& prompt, const OracleConfig& cfg,
                       std::uint64_t key = 0);

struct DecoderConfig {
  std::size_t unified_dim = 64;  // D
  std::size_t text_dim = 64;     // d_t
  std::size_t branch_dim = 16;   // channels per dilated branch
};

inline constexpr std::size_t kAsppDilations[3] = {1, 2, 4};

void init_decoder_params(ParamStore& store, const DecoderConfig& cfg, Rng& rng);

// Text-gated ASPP-lite decoder. feature: (D, h, w) WRES grid, text: (d_t).
// Returns probabilities O of shape (H, W).
Var aspp_decode(Binder& bind, Var feature, Var text, std::size_t out_h, std::size_t out_w);

// Pixel-mean binary cross-entropy with O clamped to [1e-7, 1 - 1e-7].
Var res_loss(Graph& g, Var probs, const Mask& target);

// Binary P5 PGM, 255 for set pixels.
void write_pgm(const Mask& m, const std::filesystem::path& path);

}  // namespace weakmcn::wres
