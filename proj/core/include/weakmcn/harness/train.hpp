#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "weakmcn/harness/model.hpp"

namespace weakmcn::harness {

struct EpochLog {
  std::size_t epoch = 0;
  double l_atc = 0, l_res_raw = 0, l_scl = 0, l_inc = 0, gate_open_frac = 0, l_total = 0;
  std::optional<double> rec_acc, res_miou;  // present on evaluated epochs
  double lr = 0;
};

inline constexpr const char* kLogHeader = "epoch,l_atc,l_res_raw,l_scl,l_inc,gate_open_frac,l_total,rec_acc,res_miou,lr";
std::string log_row(const EpochLog& e);

struct TrainResult {
  ParamStore weak;  // rounded through float32 as stored in a checkpoint
  std::vector<EpochLog> log;
  EvalReport final_eval;  // test split, computed from the stored parameters
};

struct TrainOptions {
  // When set: config.json, dataset.json, log.csv and checkpoints/epochN under it.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

// Weak-phase training on the train split with a frozen, pretrained detector.
// Throws DivergenceError (step, seed, last loss bundle) on a non-finite loss.
TrainResult train(const Config& cfg, const scenes::Dataset& data, const ParamStore& detector,
                  const TrainOptions& opts = {});

// Same, reusing features already extracted with `detector`.
TrainResult train(const Config& cfg, const scenes::Dataset& data, const ParamStore& detector,
                  const std::vector<FrozenFeatures>& train_features, const std::vector<FrozenFeatures>& test_features,
                  const TrainOptions& opts = {});

// Dataset for a config (its data section).
scenes::Dataset make_dataset(const Config& cfg);

}  // namespace weakmcn::harness
