#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "weakmcn/featbank/encoders.hpp"
#include "weakmcn/numcore/params.hpp"
#include "weakmcn/synthscenes/scene.hpp"
#include "weakmcn/wrec/anchors.hpp"

namespace weakmcn::wrec {

struct DetectorConfig {
  featbank::DarkConfig dark;
  std::size_t unified_dim = 64;
  std::size_t head_hidden = 32;
  std::size_t epochs = 12;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  std::uint64_t seed = 1;
};

// Stand-in encoder, FPN and the class-agnostic head (objectness + 4 offsets).
ParamStore init_detector_params(const DetectorConfig& cfg);

// Objectness logit and (tx, ty, tw, th) per cell of the coarsest map: (5, h, w).
Var detector_head(Binder& bind, Var coarse);

struct DetectorTargets {
  Tensor objectness;  // (h, w): 1 at cells containing a gt box centre
  Tensor offsets;     // (4, h, w): (frac_x, frac_y, log(w/pw), log(h/ph)) at positive cells
  Tensor positive;    // (h, w) indicator
};

// At a cell holding several centres the largest object wins (lower index on ties).
DetectorTargets detector_targets(const scenes::Scene& scene, const GridGeometry& grid);

// Objectness BCE (mean over cells) + smooth-L1 on (sigmoid(tx), sigmoid(ty),
// tw, th) at positive cells (mean over positives).
Var detector_loss(Graph& g, Var head_out, const DetectorTargets& targets);

struct PretrainLog {
  std::size_t epoch;
  double loss;
};

// Trains encoder, FPN and head on gt boxes only (no expressions). Zero
// epochs returns the initial parameters. Throws DivergenceError on a
// non-finite loss, naming seed and step.
ParamStore pretrain_detector(const std::vector<scenes::Pair>& data, const DetectorConfig& cfg,
                             const std::function<void(const PretrainLog&)>& on_epoch = {});

GridGeometry coarse_grid(std::size_t image_h, std::size_t image_w);

}  // namespace weakmcn::wrec
