#include "weakmcn/harness/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "weakmcn/error.hpp"
#include "weakmcn/harness/checkpoint.hpp"
#include "weakmcn/numcore/optim.hpp"

namespace weakmcn::harness {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_lr(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

// Batches in shuffled order; a trailing singleton joins the previous batch so
// every batch has negatives.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += size) {
    out.emplace_back(order.begin() + static_cast<long>(s),
                     order.begin() + static_cast<long>(std::min(order.size(), s + size)));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

}  // namespace

std::string log_row(const EpochLog& e) {
  std::string s = std::to_string(e.epoch);
  for (double v : {e.l_atc, e.l_res_raw, e.l_scl, e.l_inc, e.gate_open_frac, e.l_total}) s += "," + fmt(v);
  s += "," + (e.rec_acc ? fmt(*e.rec_acc) : std::string());
  s += "," + (e.res_miou ? fmt(*e.res_miou) : std::string());
  s += "," + fmt_lr(e.lr);
  return s;
}

scenes::Dataset make_dataset(const Config& cfg) {
  return scenes::generate(cfg.data.seed, cfg.data.count, cfg.generator());
}

TrainResult train(const Config& cfg, const scenes::Dataset& data, const ParamStore& detector, const TrainOptions& opts) {
  return train(cfg, data, detector, extract_features(detector, data.train), extract_features(detector, data.test), opts);
}

TrainResult train(const Config& cfg, const scenes::Dataset& data, const ParamStore& detector,
                  const std::vector<FrozenFeatures>& train_features, const std::vector<FrozenFeatures>& test_features,
                  const TrainOptions& opts) {
  cfg.validate();
  const auto& pairs = data.train;
  if (pairs.size() < 2) throw std::invalid_argument("train: the train split needs at least two pairs");
  if (train_features.size() != pairs.size() || test_features.size() != data.test.size()) {
    throw std::invalid_argument("train: feature cache does not match the dataset");
  }

  std::ofstream log_file;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir / "checkpoints");
    std::ofstream(*opts.out_dir / "config.json") << dump_config(cfg);
    nlohmann::ordered_json ref{{"generator", "synthscenes"},
                               {"seed", cfg.data.seed},
                               {"count", cfg.data.count},
                               {"splits", {{"train", data.train.size()}, {"val", data.val.size()}, {"test", data.test.size()}}}};
    std::ofstream(*opts.out_dir / "dataset.json") << ref.dump(2) << "\n";
    log_file.open(*opts.out_dir / "log.csv", std::ios::trunc);
    log_file << kLogHeader << "\n";
  }

  ParamStore weak = init_weak_params(cfg);
  const auto trainable = Binder::prefixes(weak_param_groups(cfg));
  nc::Adam adam;
  Rng rng(mix_seed(cfg.seed, 0x7a1));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t per_epoch = make_batches(order, cfg.optim.batch_size).size();
  const double total_steps = static_cast<double>(per_epoch * cfg.optim.epochs);
  std::vector<Mask> frozen_pseudo(pairs.size());
  std::size_t step = 0;

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
    const bool use_frozen = cfg.optim.freeze_pseudo_after > 0 && epoch > cfg.optim.freeze_pseudo_after;
    const bool capture = cfg.optim.freeze_pseudo_after > 0 && epoch == cfg.optim.freeze_pseudo_after;
    EpochLog e;
    e.epoch = epoch;
    std::size_t seen = 0;
    for (const auto& idx : make_batches(order, cfg.optim.batch_size)) {
      Graph g;
      Binder bind(g, weak, trainable);
      std::vector<BatchItem> batch;
      for (auto k : idx) {
        batch.push_back({&train_features[k], &pairs[k], mix_seed(mix_seed(cfg.seed, epoch), k),
                         use_frozen ? &frozen_pseudo[k] : nullptr});
      }
      const double lr = nc::cosine_lr(cfg.optim.lr, static_cast<double>(step), total_steps);
      LossBundle b = total_loss(bind, cfg, batch);
      if (!std::isfinite(b.total)) {
        throw DivergenceError("training diverged at step " + std::to_string(step) + " (seed " +
                              std::to_string(cfg.seed) + "): l_atc=" + fmt(b.atc) + " l_res_raw=" + fmt(b.res_raw) +
                              " l_scl=" + fmt(b.scl) + " l_inc=" + fmt(b.inc) + " l_total=" + fmt(b.total));
      }
      if (capture) {
        for (std::size_t j = 0; j < idx.size(); ++j) frozen_pseudo[idx[j]] = b.pseudo[j].mask;
      }
      const double w = static_cast<double>(idx.size());
      e.l_atc += b.atc * w;
      e.l_res_raw += b.res_raw * w;
      e.l_scl += b.scl * w;
      e.l_inc += b.inc * w;
      e.gate_open_frac += b.gate_open_fraction * w;
      e.l_total += b.total * w;
      seen += idx.size();

      auto grads = g.backward(b.l_total);
      std::map<std::string, Tensor, std::less<>> named;
      for (const auto& [name, v] : bind.trainable()) named.emplace(name, grads[v]);
      adam.step(weak, named, lr);
      e.lr = lr;
      ++step;
    }
    const double inv = 1.0 / static_cast<double>(seen);
    for (double* v : {&e.l_atc, &e.l_res_raw, &e.l_scl, &e.l_inc, &e.gate_open_frac, &e.l_total}) *v *= inv;

    const bool last = epoch == cfg.optim.epochs;
    const bool eval_now = last || (cfg.optim.eval_every > 0 && epoch % cfg.optim.eval_every == 0);
    ParamStore stored = round_to_f32(weak);
    if (eval_now) {
      EvalReport r = evaluate(stored, cfg, data.test, test_features);
      e.rec_acc = r.rec_acc;
      e.res_miou = r.res_miou;
      if (last) result.final_eval = std::move(r);
    }
    if (opts.out_dir) {
      ParamStore ckpt = detector;
      ckpt.merge_from(stored);
      nlohmann::ordered_json meta{{"epoch", epoch}, {"seed", cfg.seed}};
      meta["config"] = nlohmann::ordered_json::parse(dump_config(cfg));
      save_checkpoint(ckpt, *opts.out_dir / "checkpoints" / ("epoch" + std::to_string(epoch)), meta.dump());
      log_file << log_row(e) << "\n" << std::flush;
    }
    if (opts.on_epoch) opts.on_epoch(e);
    result.log.push_back(e);
    if (last) result.weak = std::move(stored);
  }
  if (cfg.optim.epochs == 0) {
    result.weak = round_to_f32(weak);
    result.final_eval = evaluate(result.weak, cfg, data.test, test_features);
  }
  return result;
}

}  // namespace weakmcn::harness
