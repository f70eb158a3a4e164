#include "weakmcn/harness/model.hpp"

#include <cmath>
#include <string>

#include "weakmcn/error.hpp"
#include "weakmcn/featbank/dvfe.hpp"
#include "weakmcn/featbank/fpn.hpp"
#include "weakmcn/wrec/detector.hpp"
#include "weakmcn/wrec/text.hpp"

namespace weakmcn::harness {

using nc::Shape;

namespace {

// Whole-map rescale to unit RMS, so the learned DarkNet maps sit on the same
// scale as the fixed descriptors regardless of how pretraining went.
Tensor unit_rms(Tensor t) {
  double ss = 0;
  for (auto v : t.data()) ss += static_cast<double>(v) * v;
  const double rms = std::sqrt(ss / static_cast<double>(t.size()));
  if (rms > 0) {
    for (auto& v : t.data()) v = static_cast<nc::Real>(v / rms);
  }
  return t;
}

}  // namespace

FrozenFeatures extract_features(const ParamStore& detector, const scenes::Scene& scene) {
  Graph g;
  Binder bind(g, detector, Binder::none());
  auto levels = featbank::encode_dark(bind, g.constant(featbank::image_tensor(scene)));
  auto fused = featbank::fpn_fuse(bind, levels);
  Var head = wrec::detector_head(bind, fused[2]);
  const auto& hs = g.shape(head);
  const std::size_t cells = hs[1] * hs[2];
  const auto hv = g.value(head).data();
  FrozenFeatures f;
  f.fine = unit_rms(g.value(fused[0]));
  f.coarse = unit_rms(g.value(fused[2]));
  f.offsets = Tensor(Shape{4, hs[1], hs[2]}, std::vector<nc::Real>(hv.begin() + static_cast<long>(cells), hv.end()));
  f.dino = featbank::encode_dino(scene);
  f.sam = featbank::encode_sam(scene);
  return f;
}

std::vector<FrozenFeatures> extract_features(const ParamStore& detector, const std::vector<scenes::Pair>& pairs) {
  std::vector<FrozenFeatures> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(extract_features(detector, p.scene));
  return out;
}

ParamStore init_weak_params(const Config& cfg) {
  ParamStore store;
  Rng rng(mix_seed(cfg.seed, 0x3eaf));
  wrec::TextConfig tc;
  tc.vocab_size = scenes::kVocabSize;
  tc.embed_dim = cfg.model.embed_dim;
  tc.text_dim = cfg.model.text_dim;
  wrec::init_text_params(store, tc, rng);
  wrec::init_contrastive_params(store, cfg.model.unified_dim, cfg.model.text_dim, cfg.model.contrastive_dim, rng);
  if (cfg.model.dvfe) featbank::init_dvfe_params(store, cfg.bank_layout(), rng);
  wres::DecoderConfig dc;
  dc.unified_dim = cfg.model.unified_dim;
  dc.text_dim = cfg.model.text_dim;
  dc.branch_dim = cfg.model.branch_dim;
  wres::init_decoder_params(store, dc, rng);
  return store;
}

std::vector<std::string> weak_param_groups(const Config& cfg) {
  std::vector<std::string> groups{"text.", "wrec.proj_a.", "wrec.proj_t."};
  if (cfg.model.dvfe) {
    groups.push_back("dvfe.rec.");
    groups.push_back("dvfe.res.");
  }
  groups.push_back("wres.");
  return groups;
}

namespace {

Var bank_entry(featbank::Source s, Var dark, Var dino, Var sam) {
  switch (s) {
    case featbank::Source::kDark: return dark;
    case featbank::Source::kDino: return dino;
    case featbank::Source::kSam: return sam;
  }
  return dark;
}

}  // namespace

PairForward forward_pair(Binder& bind, const Config& cfg, const FrozenFeatures& feat,
                         const std::vector<std::uint32_t>& tokens, std::size_t image_h, std::size_t image_w) {
  auto& g = bind.graph();
  PairForward out;
  out.text = wrec::encode_text(bind, tokens);
  Var coarse = g.constant(feat.coarse);
  Var fine = g.constant(feat.fine);
  Var rec_feat = coarse, res_feat = fine;
  if (cfg.model.dvfe) {
    const auto layout = cfg.bank_layout();
    Var dino = g.constant(feat.dino), sam = g.constant(feat.sam);
    std::vector<Var> rec_bank, res_bank;
    for (auto s : layout.sources) {
      rec_bank.push_back(bank_entry(s, coarse, dino, sam));
      res_bank.push_back(bank_entry(s, fine, dino, sam));
    }
    const auto& cs = feat.coarse.shape();
    const auto& fs = feat.fine.shape();
    out.rec_weights = featbank::dvfe_weights(bind, featbank::Task::kRec, coarse, rec_bank.size());
    rec_feat = featbank::dvfe_combine(bind, featbank::Task::kRec, layout, rec_bank, out.rec_weights, cs[1], cs[2],
                                      cfg.model.dvfe_residual, coarse);
    out.res_weights = featbank::dvfe_weights(bind, featbank::Task::kRes, fine, res_bank.size());
    res_feat = featbank::dvfe_combine(bind, featbank::Task::kRes, layout, res_bank, out.res_weights, fs[1], fs[2],
                                      cfg.model.dvfe_residual, fine);
  }
  out.match = wrec::similarities(bind, rec_feat, out.text, cfg.wrec.cosine_sim);
  const auto scores = g.value(out.match.scores).data();
  if (cfg.wrec.top_k > scores.size()) {
    throw ConfigError("wrec.top_k = " + std::to_string(cfg.wrec.top_k) + " exceeds the " +
                      std::to_string(scores.size()) + " anchor cells");
  }
  out.top1 = wrec::argmax(scores);
  out.topk = wrec::topk_select(scores, cfg.wrec.top_k);
  out.box = wrec::predict_box(scores, feat.offsets, wrec::coarse_grid(image_h, image_w));
  out.probs = wres::aspp_decode(bind, res_feat, out.text, image_h, image_w);
  return out;
}

LossBundle total_loss(Binder& bind, const Config& cfg, const std::vector<BatchItem>& batch) {
  if (batch.size() < 2) throw std::invalid_argument("contrastive loss requires negatives (batch size >= 2)");
  auto& g = bind.graph();
  const std::size_t n = batch.size();
  std::vector<PairForward> fw;
  fw.reserve(n);
  for (const auto& item : batch) {
    const auto& s = item.pair->scene;
    fw.push_back(forward_pair(bind, cfg, *item.features, item.pair->expression.tokens, s.height, s.width));
  }

  const bool top1_pool = cfg.wrec.neg_pool == "top1";
  std::vector<Var> pools(n);
  for (std::size_t j = 0; j < n; ++j) {
    pools[j] = g.index_select(fw[j].match.anchors, top1_pool ? std::vector<std::size_t>{fw[j].top1} : fw[j].topk);
  }
  std::vector<wrec::AtcSample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = g.shape(fw[i].match.text)[0];
    std::vector<Var> negs;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) negs.push_back(pools[j]);
    }
    samples.push_back({g.reshape(g.index_select(fw[i].match.anchors, {fw[i].top1}), Shape{c}), fw[i].match.text,
                       g.concat(negs, 0)});
  }

  LossBundle b;
  b.l_atc = wrec::atc_loss(g, samples, cfg.wrec.tau, cfg.wrec.atc_literal);
  const auto source = cfg.gate_source();
  std::vector<Var> scl, inc, raw;
  std::size_t open = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = batch[i];
    const auto& scene = item.pair->scene;
    wres::PseudoMask pm;
    if (item.fixed_pseudo) {
      pm.mask = *item.fixed_pseudo;
      pm.prompt = fw[i].box.box;
    } else {
      pm = wres::oracle_mask(scene, fw[i].box.box, cfg.oracle, item.oracle_key);
    }
    scl.push_back(ccm::scl_loss(g, fw[i].probs, fw[i].box.box));
    auto isl = ccm::isl_loss(g, fw[i].probs, fw[i].box.box, pm.mask, cfg.ccm.alpha, source);
    inc.push_back(isl.loss);
    raw.push_back(isl.raw);
    open += isl.gate.open ? 1 : 0;
    b.gates.push_back(isl.gate);
    b.boxes.push_back(fw[i].box);
    b.pseudo.push_back(std::move(pm));
  }
  auto mean_of = [&](const std::vector<Var>& v) {
    Var acc = v[0];
    for (std::size_t k = 1; k < v.size(); ++k) acc = g.add(acc, v[k]);
    return g.scale(acc, 1.0 / static_cast<double>(v.size()));
  };
  b.l_scl = mean_of(scl);
  b.l_inc = mean_of(inc);
  b.l_res_raw = mean_of(raw);
  b.gate_open_fraction = static_cast<double>(open) / static_cast<double>(n);

  const auto& w = cfg.loss;
  Var total = g.scale(b.l_atc, w.lambda_atc);
  if (w.lambda_inc != 0) total = g.add(total, g.scale(b.l_inc, w.lambda_inc));
  if (w.lambda_scl != 0) total = g.add(total, g.scale(b.l_scl, w.lambda_scl));
  if (w.lambda_res != 0) total = g.add(total, g.scale(b.l_res_raw, w.lambda_res));
  b.l_total = total;

  b.atc = g.value(b.l_atc).item();
  b.res_raw = g.value(b.l_res_raw).item();
  b.scl = g.value(b.l_scl).item();
  b.inc = g.value(b.l_inc).item();
  b.total = g.value(b.l_total).item();
  return b;
}

double recompute_total(const LossBundle& b, const LossConfig& w) {
  return w.lambda_atc * b.atc + w.lambda_inc * b.inc + w.lambda_scl * b.scl + w.lambda_res * b.res_raw;
}

EvalReport summarize(std::vector<PairRecord> records) {
  EvalReport r;
  r.records = std::move(records);
  if (r.records.empty()) return r;
  std::size_t hits = 0;
  double miou = 0;
  for (const auto& rec : r.records) {
    hits += rec.rec_hit ? 1 : 0;
    miou += rec.mask_iou;
  }
  r.rec_acc = static_cast<double>(hits) / static_cast<double>(r.records.size());
  r.res_miou = miou / static_cast<double>(r.records.size());
  return r;
}

PairRecord score_pair(const scenes::Pair& pair, const Box& pred_box, const Mask& pred_mask) {
  const auto& s = pair.scene;
  const auto& target = s.objects.at(pair.expression.target_index);
  PairRecord r;
  r.pred_box = pred_box;
  r.box_iou = ccm::iou(ccm::rasterize(pred_box, s.height, s.width), ccm::rasterize(target.gt_box, s.height, s.width));
  r.rec_hit = r.box_iou > 0.5;
  r.mask_iou = ccm::iou(pred_mask, target.gt_mask);
  return r;
}

EvalReport evaluate(const ParamStore& weak, const Config& cfg, const std::vector<scenes::Pair>& pairs,
                    const std::vector<FrozenFeatures>& features) {
  if (features.size() != pairs.size()) throw std::invalid_argument("evaluate: one feature set per pair required");
  std::vector<PairRecord> records;
  records.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const auto& s = p.scene;
    Graph g;
    Binder bind(g, weak, Binder::none());
    auto fw = forward_pair(bind, cfg, features[k], p.expression.tokens, s.height, s.width);
    const Mask pred = ccm::binarize(g.value(fw.probs));
    PairRecord r = score_pair(p, fw.box.box, pred);
    r.gate = ccm::gate(pred, fw.box.box, cfg.ccm.alpha);
    records.push_back(r);
  }
  return summarize(std::move(records));
}

}  // namespace weakmcn::harness
