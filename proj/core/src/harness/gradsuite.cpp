#include "weakmcn/harness/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "weakmcn/ccm/consistency.hpp"
#include "weakmcn/harness/model.hpp"
#include "weakmcn/wrec/anchors.hpp"
#include "weakmcn/wres/wres.hpp"

namespace weakmcn::harness {

using nc::GradcheckOptions;
using nc::GradcheckReport;
using nc::Shape;

namespace {

Tensor random_normal(Shape shape, double sd, Rng& rng) { return nc::init_normal(std::move(shape), sd, rng); }

Tensor random_uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<nc::Real>(rng.uniform(lo, hi));
  return t;
}

Mask random_mask(std::size_t h, std::size_t w, Rng& rng) {
  Mask m(h, w);
  for (auto& b : m.bits) b = rng.bernoulli(0.4) ? 1 : 0;
  return m;
}

void record(GradSuiteEntry& e, GradcheckReport r) {
  ++e.instances;
  if (r.passed) ++e.passed;
  if (e.instances == 1 || r.max_rel_err > e.max_rel_err || (!r.passed && e.worst.passed)) {
    e.max_rel_err = std::max(e.max_rel_err, r.max_rel_err);
    e.worst = std::move(r);
  }
}

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t n, Rng& rng) {
  std::vector<std::size_t> all(size);
  for (std::size_t i = 0; i < size; ++i) all[i] = i;
  for (std::size_t i = size; i > 1; --i) std::swap(all[i - 1], all[rng.uniform_int(0, i - 1)]);
  all.resize(std::min(n, size));
  std::sort(all.begin(), all.end());
  return all;
}

// A tiny instance of the full model on real scenes with random frozen features.
struct SmallModel {
  Config cfg;
  std::vector<scenes::Pair> pairs;
  std::vector<FrozenFeatures> features;
  ParamStore weak;
  std::vector<BatchItem> batch;

  SmallModel(std::uint64_t seed, std::size_t instance) {
    cfg.seed = seed;
    cfg.model.unified_dim = 6;
    cfg.model.text_dim = 5;
    cfg.model.embed_dim = 4;
    cfg.model.contrastive_dim = 6;
    cfg.model.branch_dim = 3;
    cfg.model.dvfe_residual = instance % 4 == 3;
    cfg.ccm.alpha = instance % 2 == 0 ? 0.0 : 0.3;  // even instances keep every gate open
    cfg.loss.lambda_res = instance % 3 == 0 ? 0.5 : 0.0;
    cfg.wrec.neg_pool = instance % 5 == 4 ? "top1" : "topk";
    cfg.wrec.atc_literal = instance % 7 == 6;
    cfg.validate();

    Rng rng(seed);
    auto ds = scenes::generate(seed, 3, cfg.generator());
    for (auto* split : {&ds.train, &ds.val, &ds.test}) {
      for (auto& p : *split) pairs.push_back(std::move(p));
    }
    const std::size_t d = cfg.model.unified_dim;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      FrozenFeatures f;
      f.fine = random_normal(Shape{d, 8, 8}, 1.0, rng);
      f.coarse = random_normal(Shape{d, 2, 2}, 1.0, rng);
      f.offsets = random_normal(Shape{4, 2, 2}, 0.5, rng);
      f.dino = random_uniform(Shape{featbank::kDinoChannels, 8, 8}, 0, 1, rng);
      f.sam = random_uniform(Shape{featbank::kSamChannels, 16, 16}, 0, 1, rng);
      features.push_back(std::move(f));
    }
    weak = init_weak_params(cfg);
    // Move away from the symmetric zero initialisation of W_t.
    for (const auto& n : weak.names()) {
      if (n.ends_with(".W")) weak.get(n) = random_normal(weak.get(n).shape(), 0.5, rng);
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) batch.push_back({&features[k], &pairs[k], mix_seed(seed, k), nullptr});
  }
};

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts) {
  std::vector<GradSuiteEntry> entries;
  auto entry = [&](const std::string& name) -> GradSuiteEntry& {
    for (auto& e : entries) {
      if (e.name == name) return e;
    }
    entries.push_back({});
    entries.back().name = name;
    return entries.back();
  };
  entry("l_atc/features");
  entry("l_atc/projections");
  entry("l_res");
  entry("dice");
  entry("l_scl");

  for (std::size_t i = 0; i < opts.instances; ++i) {
    const std::uint64_t seed = mix_seed(opts.seed, i);
    Rng rng(seed);

    {  // L_atc w.r.t. positive, text and negative features packed in one leaf.
      const std::size_t n = 2 + i % 3, c = 4 + i % 4, m = 2 * (n - 1);
      const double tau = i % 2 ? 0.1 : rng.uniform(0.2, 1.0);
      const bool literal = i % 5 == 4;
      // Similarity logits <a, t> / tau with standard deviation about 1, so no
      // softmax weight underflows to the level of finite-difference noise.
      const double sd = std::sqrt(tau / std::sqrt(static_cast<double>(c)));
      Tensor x = random_normal(Shape{n + n + n * m, c}, sd, rng);
      auto f = [=](Graph& g, Var v) {
        std::vector<wrec::AtcSample> samples;
        for (std::size_t s = 0; s < n; ++s) {
          std::vector<std::size_t> negs;
          for (std::size_t k = 0; k < m; ++k) negs.push_back(2 * n + s * m + k);
          samples.push_back({g.reshape(g.index_select(v, {s}), Shape{c}), g.reshape(g.index_select(v, {n + s}), Shape{c}),
                             g.index_select(v, negs)});
        }
        return wrec::atc_loss(g, samples, tau, literal);
      };
      record(entry("l_atc/features"), nc::gradcheck("l_atc", f, x));
    }

    {  // L_res on sigmoid probabilities.
      const std::size_t h = 4 + i % 8, w = 4 + (i / 3) % 8;
      Tensor x = random_normal(Shape{h, w}, 2.0, rng);
      const Mask target = random_mask(h, w, rng);
      auto f = [target](Graph& g, Var v) { return wres::res_loss(g, g.sigmoid(v), target); };
      record(entry("l_res"), nc::gradcheck("l_res", f, x));
    }

    {  // Dice against a fixed target in (0, 1)^16.
      Tensor x = random_uniform(Shape{16}, 0.0, 1.0, rng);
      Tensor q = random_uniform(Shape{16}, 0.0, 1.0, rng);
      auto f = [q](Graph& g, Var v) { return ccm::dice(g, v, g.constant(q)); };
      record(entry("dice"), nc::gradcheck("dice", f, x));
    }

    {  // L_scl w.r.t. O, box held constant.
      const std::size_t h = 8 + i % 9, w = 8 + (i / 2) % 9;
      Tensor x = random_normal(Shape{h, w}, 2.0, rng);
      const double bx = rng.uniform(0, w / 2.0), by = rng.uniform(0, h / 2.0);
      const Box box{bx, by, rng.uniform(1, w - bx), rng.uniform(1, h - by)};
      auto f = [box](Graph& g, Var v) { return ccm::scl_loss(g, g.sigmoid(v), box); };
      record(entry("l_scl"), nc::gradcheck("l_scl", f, x));
    }

    SmallModel model(seed, i);
    {  // L_atc through the contrastive projections: L_total with only the ATC weight.
      Config atc_only = model.cfg;
      atc_only.loss = {1.0, 0.0, 0.0, 0.0};
      const std::string name = i % 2 ? "wrec.proj_a.w" : "wrec.proj_t.w";
      const Tensor& x = model.weak.get(name);
      GradcheckOptions go;
      go.coords = pick_coords(x.size(), opts.coords, rng);
      auto f = [&, name](Graph& g, Var v) {
        Binder bind(g, model.weak, Binder::none());
        bind.bind_as(name, v);
        return total_loss(bind, atc_only, model.batch).l_atc;
      };
      record(entry("l_atc/projections"), nc::gradcheck("l_atc:" + name, f, x, go));
    }

    for (const auto& group : weak_param_groups(model.cfg)) {
      const auto names = model.weak.names_with_prefix(group);
      const std::string name = names[i % names.size()];
      const Tensor& x = model.weak.get(name);
      GradcheckOptions go;
      go.coords = pick_coords(x.size(), opts.coords, rng);
      auto f = [&, name](Graph& g, Var v) {
        Binder bind(g, model.weak, Binder::none());
        bind.bind_as(name, v);
        return total_loss(bind, model.cfg, model.batch).l_total;
      };
      record(entry("l_total/" + group.substr(0, group.size() - 1)), nc::gradcheck("l_total:" + name, f, x, go));
    }
  }
  return entries;
}

}  // namespace weakmcn::harness
