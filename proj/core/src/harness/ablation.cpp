#include "weakmcn/harness/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "weakmcn/error.hpp"
#include "weakmcn/harness/checkpoint.hpp"

namespace weakmcn::harness {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_alpha(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

AblationCell make(std::string id, bool dvfe, bool scl, bool isl, double alpha) {
  AblationCell c;
  c.id = std::move(id);
  c.dvfe = dvfe;
  c.scl = scl;
  c.isl = isl;
  c.alpha = alpha;
  return c;
}

std::string cell_prefix(const AblationCell& c) {
  return c.id + "," + (c.dvfe ? "1" : "0") + "," + (c.scl ? "1" : "0") + "," + (c.isl ? "1" : "0") + "," +
         fmt_alpha(c.isl ? c.alpha : 0.0);
}

}  // namespace

std::vector<AblationCell> ablation_grid(std::string_view name, const Config& base) {
  const double a = base.ccm.alpha;
  std::vector<AblationCell> cells;
  if (name == "ccm") {
    cells = {make("scl0_isl0", true, false, false, a), make("scl0_isl1", true, false, true, a),
             make("scl1_isl0", true, true, false, a), make("scl1_isl1", true, true, true, a)};
  } else if (name == "dvfe") {
    cells = {make("dvfe0", false, true, true, a), make("dvfe1", true, true, true, a)};
  } else if (name == "alpha") {
    for (double v : {0.1, 0.2, 0.3, 0.4}) cells.push_back(make("alpha" + fmt_alpha(v), true, true, true, v));
  } else if (name == "bank") {
    const std::vector<std::vector<std::string>> banks{{"dark"}, {"dark", "dino"}, {"dark", "sam"}, {"dark", "dino", "sam"}};
    for (const auto& b : banks) {
      std::string id = "bank";
      for (const auto& s : b) id += "_" + s;
      auto c = make(id, true, true, true, a);
      c.bank = b;
      cells.push_back(c);
    }
  } else if (name == "components") {
    cells = {make("baseline", false, false, false, a), make("scl", false, true, false, a),
             make("scl_isl", false, true, true, a), make("dvfe_scl_isl", true, true, true, a)};
  } else if (name == "single") {
    auto c = make("base", base.model.dvfe, base.loss.lambda_scl > 0, base.ccm.alpha > 0, a);
    c.bank = base.model.bank;
    cells = {c};
  } else {
    throw ConfigError("unknown ablation grid '" + std::string(name) +
                      "' (expected ccm, dvfe, alpha, bank, components or single)");
  }
  if (name != "bank" && name != "single") {
    for (auto& c : cells) c.bank = base.model.bank;
  }
  return cells;
}

Config cell_config(const Config& base, const AblationCell& cell, std::uint64_t seed) {
  Config c = base;
  c.seed = seed;
  c.model.dvfe = cell.dvfe;
  c.model.bank = cell.bank;
  c.loss.lambda_scl = cell.scl ? (base.loss.lambda_scl > 0 ? base.loss.lambda_scl : 1.0) : 0.0;
  c.ccm.alpha = cell.isl ? cell.alpha : 0.0;
  c.validate();
  return c;
}

std::vector<CellSummary> summarize_rows(const std::vector<AblationRow>& rows, const std::vector<AblationCell>& cells) {
  std::vector<CellSummary> out;
  for (const auto& cell : cells) {
    CellSummary s;
    s.cell = cell;
    std::vector<double> rec, res;
    for (const auto& r : rows) {
      if (r.cell.id != cell.id) continue;
      if (!r.ok) {
        ++s.n_failed;
        continue;
      }
      rec.push_back(r.rec_acc);
      res.push_back(r.res_miou);
    }
    s.n_ok = rec.size();
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = sd = 0;
      if (v.empty()) return;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      if (v.size() < 2) return;
      for (double x : v) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
    };
    mean_std(rec, s.rec_mean, s.rec_std);
    mean_std(res, s.res_mean, s.res_std);
    out.push_back(s);
  }
  return out;
}

std::string results_csv(const AblationResult& r) {
  std::string s = std::string(kResultsHeader) + "\n";
  for (const auto& row : r.rows) {
    s += cell_prefix(row.cell) + "," + std::to_string(row.seed) + ",";
    s += row.ok ? fmt(row.rec_acc) + "," + fmt(row.res_miou) : std::string("failed,failed");
    s += "\n";
  }
  return s;
}

std::string summary_csv(const AblationResult& r) {
  std::string s = std::string(kSummaryHeader) + "\n";
  for (const auto& c : r.summary) {
    s += cell_prefix(c.cell) + "," + std::to_string(c.n_ok) + "," + std::to_string(c.n_failed) + ",";
    if (c.n_ok == 0) {
      s += "failed,failed,failed,failed\n";
    } else {
      s += fmt(c.rec_mean) + "," + fmt(c.rec_std) + "," + fmt(c.res_mean) + "," + fmt(c.res_std) + "\n";
    }
  }
  return s;
}

AblationResult run_ablation(const Config& base, const std::vector<AblationCell>& cells,
                            const std::vector<std::uint64_t>& seeds, const AblationOptions& opts) {
  base.validate();
  if (cells.empty() || seeds.empty()) throw std::invalid_argument("run_ablation: empty grid or seed list");
  const scenes::Dataset data = make_dataset(base);
  ParamStore pretrained;
  if (!opts.detector) pretrained = round_to_f32(wrec::pretrain_detector(data.train, base.detector_config()));
  const ParamStore& detector = opts.detector ? *opts.detector : pretrained;
  const auto train_features = extract_features(detector, data.train);
  const auto test_features = extract_features(detector, data.test);

  AblationResult result;
  for (const auto& cell : cells) {
    for (auto seed : seeds) {
      AblationRow row;
      row.cell = cell;
      row.seed = seed;
      try {
        const Config cfg = cell_config(base, cell, seed);
        auto tr = train(cfg, data, detector, train_features, test_features);
        row.ok = true;
        row.rec_acc = tr.final_eval.rec_acc;
        row.res_miou = tr.final_eval.res_miou;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      if (opts.on_row) opts.on_row(row);
      result.rows.push_back(row);
    }
  }
  result.summary = summarize_rows(result.rows, cells);
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    std::ofstream(*opts.out_dir / "config.json") << dump_config(base);
    std::ofstream(*opts.out_dir / "results.csv", std::ios::binary) << results_csv(result);
    std::ofstream(*opts.out_dir / "summary.csv", std::ios::binary) << summary_csv(result);
  }
  return result;
}

}  // namespace weakmcn::harness
