#include "weakmcn/harness/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "weakmcn/error.hpp"
#include "weakmcn/harness/ablation.hpp"
#include "weakmcn/harness/checkpoint.hpp"
#include "weakmcn/harness/gradsuite.hpp"
#include "weakmcn/harness/train.hpp"
#include "weakmcn/synthscenes/dataset_io.hpp"
#include "weakmcn/wres/wres.hpp"

namespace weakmcn::harness {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "out";
};

void add_common(CLI::App* sc, Common& c) {
  sc->add_option("--config", c.config_path, "JSON config file");
  sc->add_option("--set", c.sets, "Override a config value, key=value (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->allow_extra_args(false);
  sc->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
}

Config resolve_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  for (const auto& s : c.sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

scenes::Dataset dataset_for(const Config& cfg, const std::string& data_path) {
  if (data_path.empty()) return make_dataset(cfg);
  return scenes::load_dataset(data_path);
}

std::string report_json(const EvalReport& r, std::string_view split, bool with_records) {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["pairs"] = r.records.size();
  j["rec_acc"] = r.rec_acc;
  j["res_miou"] = r.res_miou;
  if (with_records) {
    j["records"] = nlohmann::ordered_json::array();
    for (const auto& rec : r.records) {
      j["records"].push_back({{"pred_box", {rec.pred_box.x, rec.pred_box.y, rec.pred_box.w, rec.pred_box.h}},
                              {"box_iou", rec.box_iou},
                              {"rec_hit", rec.rec_hit},
                              {"mask_iou", rec.mask_iou},
                              {"gate_iou", rec.gate.iou},
                              {"gate_open", rec.gate.open}});
    }
  }
  return j.dump(2);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + tok + "' in --seed-list");
    }
  }
  if (out.empty()) throw ConfigError("--seed-list is empty");
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly supervised joint box and mask grounding on synthetic scenes", "weakmcn"};
  app.require_subcommand(1, 1);

  Common common;
  std::uint64_t seed = 7;
  std::size_t count = 2500;
  std::string data_path, detector_path, checkpoint_path, split = "test", grid = "components", seed_list;
  std::size_t seeds = 5, instances = 100;
  bool records = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and its vocabulary sidecar");
  add_common(gen, common);
  auto* seed_opt = gen->add_option("--seed", seed, "Dataset seed");
  auto* count_opt = gen->add_option("--count", count, "Number of pairs");

  auto* pre = app.add_subcommand("pretrain-det", "Pretrain the class-agnostic detector on ground-truth boxes");
  add_common(pre, common);
  pre->add_option("--data", data_path, "Dataset file (generated from the config when omitted)");

  auto* tr = app.add_subcommand("train", "Weakly supervised training");
  add_common(tr, common);
  tr->add_option("--data", data_path, "Dataset file (generated from the config when omitted)");
  tr->add_option("--detector", detector_path, "Pretrained detector checkpoint (pretrained now when omitted)");

  auto* ev = app.add_subcommand("eval", "Evaluate a training checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint_path, "Checkpoint written by train")->required();
  ev->add_option("--split", split, "train | val | test")->capture_default_str();
  ev->add_option("--data", data_path, "Dataset file (generated from the config when omitted)");
  ev->add_flag("--records", records, "Include per-pair records in the report");

  auto* ab = app.add_subcommand("ablate", "Run an ablation grid over seeds");
  add_common(ab, common);
  ab->add_option("--grid", grid, "ccm | dvfe | alpha | bank | components | single")->capture_default_str();
  auto* seeds_opt = ab->add_option("--seeds", seeds, "Use seeds 1..N")->capture_default_str();
  ab->add_option("--seed-list", seed_list, "Comma-separated seeds")->excludes(seeds_opt);
  ab->add_option("--detector", detector_path, "Pretrained detector checkpoint (pretrained now when omitted)");

  auto* gc = app.add_subcommand("gradcheck", "Gradient checks of every loss");
  gc->add_option("--instances", instances, "Randomized instances per loss")->capture_default_str();
  gc->add_option("--out", common.out_dir, "Output directory for gradcheck.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gc->parsed()) {
      GradSuiteOptions o;
      o.instances = instances;
      const auto entries = run_gradient_suite(o);
      nlohmann::ordered_json all = nlohmann::ordered_json::array();
      bool ok = true;
      for (const auto& e : entries) {
        ok = ok && e.ok();
        nlohmann::ordered_json j{{"loss", e.name}, {"instances", e.instances}, {"passed", e.passed},
                                 {"max_rel_err", e.max_rel_err}};
        j["worst"] = nlohmann::ordered_json::parse(e.worst.to_json());
        out << j.dump() << "\n";
        all.push_back(j);
      }
      if (gc->count("--out")) {
        fs::create_directories(common.out_dir);
        std::ofstream(fs::path(common.out_dir) / "gradcheck.json") << all.dump(2) << "\n";
      }
      out << (ok ? "gradcheck: all passed" : "gradcheck: FAILED") << "\n";
      return ok ? kExitOk : kExitFailure;
    }

    Config cfg = resolve_config(common);
    const fs::path out_dir(common.out_dir);

    if (gen->parsed()) {
      if (*seed_opt) cfg.data.seed = seed;
      if (*count_opt) cfg.data.count = count;
      cfg.validate();
      const auto ds = make_dataset(cfg);
      fs::create_directories(out_dir);
      const fs::path path = out_dir / "dataset.wgl";
      scenes::save_dataset(ds, path);
      out << "wrote " << path.string() << " (" << ds.train.size() << " train, " << ds.val.size() << " val, "
          << ds.test.size() << " test) and " << scenes::vocab_sidecar_path(path).string() << "\n";
      return kExitOk;
    }

    if (pre->parsed()) {
      const auto ds = dataset_for(cfg, data_path);
      auto det = wrec::pretrain_detector(ds.train, cfg.detector_config(), [&](const wrec::PretrainLog& l) {
        out << "epoch " << l.epoch << " loss " << l.loss << "\n" << std::flush;
      });
      fs::create_directories(out_dir);
      nlohmann::ordered_json meta{{"kind", "detector"}};
      meta["config"] = nlohmann::ordered_json::parse(dump_config(cfg));
      save_checkpoint(det, out_dir / "detector.ckpt", meta.dump());
      out << "wrote " << (out_dir / "detector.ckpt").string() << "\n";
      return kExitOk;
    }

    if (tr->parsed()) {
      const auto ds = dataset_for(cfg, data_path);
      ParamStore det = detector_path.empty() ? round_to_f32(wrec::pretrain_detector(ds.train, cfg.detector_config()))
                                             : load_checkpoint(detector_path);
      TrainOptions o;
      o.out_dir = out_dir;
      o.on_epoch = [&](const EpochLog& e) { out << log_row(e) << "\n" << std::flush; };
      const auto res = train(cfg, ds, det, o);
      out << report_json(res.final_eval, "test", false) << "\n";
      return kExitOk;
    }

    if (ev->parsed()) {
      const ParamStore ckpt = load_checkpoint(checkpoint_path);
      if (common.config_path.empty()) {
        const auto meta = nlohmann::json::parse(load_checkpoint_meta(checkpoint_path));
        if (meta.contains("config")) {
          cfg = parse_config(meta["config"].dump());
          for (const auto& s : common.sets) apply_override(cfg, s);
        }
      }
      const auto ds = dataset_for(cfg, data_path);
      const auto& pairs = ds.split(split);
      if (pairs.empty()) throw std::runtime_error("split '" + split + "' is empty");
      const auto report = evaluate(ckpt, cfg, pairs, extract_features(ckpt, pairs));
      const std::string text = report_json(report, split, records);
      out << text << "\n";
      if (ev->count("--out")) {
        fs::create_directories(out_dir);
        std::ofstream(out_dir / "eval.json") << text << "\n";
      }
      return kExitOk;
    }

    if (ab->parsed()) {
      const auto cells = ablation_grid(grid, cfg);
      std::vector<std::uint64_t> seed_values;
      if (!seed_list.empty()) {
        seed_values = parse_seed_list(seed_list);
      } else {
        if (seeds < 1) throw ConfigError("--seeds must be at least 1");
        for (std::uint64_t s = 1; s <= seeds; ++s) seed_values.push_back(s);
      }
      ParamStore det;
      AblationOptions o;
      o.out_dir = out_dir;
      if (!detector_path.empty()) {
        det = load_checkpoint(detector_path);
        o.detector = &det;
      }
      o.on_row = [&](const AblationRow& r) {
        out << r.cell.id << " seed " << r.seed << ": "
            << (r.ok ? "rec_acc " + std::to_string(r.rec_acc) + " res_miou " + std::to_string(r.res_miou)
                     : "failed (" + r.error + ")")
            << "\n"
            << std::flush;
      };
      const auto res = run_ablation(cfg, cells, seed_values, o);
      out << summary_csv(res);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace weakmcn::harness
