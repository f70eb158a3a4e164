#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weakmcn/harness/train.hpp"

namespace weakmcn::harness {

struct AblationCell {
  std::string id;
  bool dvfe = true;
  bool scl = true;  // off: lambda_scl = 0
  bool isl = true;  // off: alpha = 0, so the gate never closes and L_inc is plain L_res
  double alpha = ccm::kDefaultAlpha;
  std::vector<std::string> bank{"dark", "dino", "sam"};
};

// Named grids: ccm (SCL x ISL), dvfe (off/on), alpha (0.1..0.4), bank
// (source subsets), components (baseline, +SCL, +SCL+ISL, +DVFE+SCL+ISL) and
// single (the base config as one cell).
std::vector<AblationCell> ablation_grid(std::string_view name, const Config& base);

// The base config with the cell's switches and the given seed applied.
Config cell_config(const Config& base, const AblationCell& cell, std::uint64_t seed);

struct AblationRow {
  AblationCell cell;
  std::uint64_t seed = 0;
  bool ok = false;
  double rec_acc = 0, res_miou = 0;
  std::string error;
};

struct CellSummary {
  AblationCell cell;
  std::size_t n_ok = 0, n_failed = 0;
  double rec_mean = 0, rec_std = 0, res_mean = 0, res_std = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<CellSummary> summary;
};

inline constexpr const char* kResultsHeader = "cell_id,dvfe,scl,isl,alpha,seed,rec_acc,res_miou";
inline constexpr const char* kSummaryHeader =
    "cell_id,dvfe,scl,isl,alpha,n_ok,n_failed,rec_acc_mean,rec_acc_std,res_miou_mean,res_miou_std";

std::string results_csv(const AblationResult& r);
std::string summary_csv(const AblationResult& r);
std::vector<CellSummary> summarize_rows(const std::vector<AblationRow>& rows, const std::vector<AblationCell>& cells);

struct AblationOptions {
  std::optional<std::filesystem::path> out_dir;  // results.csv, summary.csv, config.json
  // Pretrained detector; pretrained from the base config when absent.
  const ParamStore* detector = nullptr;
  std::function<void(const AblationRow&)> on_row;
};

// One dataset, one frozen detector and one feature cache shared by every
// (cell, seed) run. A failing run marks its row failed; the rest continue.
AblationResult run_ablation(const Config& base, const std::vector<AblationCell>& cells,
                            const std::vector<std::uint64_t>& seeds, const AblationOptions& opts = {});

}  // namespace weakmcn::harness
