#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "weakmcn/ccm/consistency.hpp"
#include "weakmcn/harness/config.hpp"
#include "weakmcn/numcore/params.hpp"
#include "weakmcn/synthscenes/scene.hpp"
#include "weakmcn/wrec/anchors.hpp"
#include "weakmcn/wres/wres.hpp"

namespace weakmcn::harness {

using nc::Binder;
using nc::Graph;
using nc::ParamStore;
using nc::Tensor;
using nc::Var;

// Everything the frozen detector and the fixed encoders produce for one
// scene. Computed once, reused every epoch.
struct FrozenFeatures {
  Tensor fine;     // F^_v1 (D, H/8, W/8): WRES base
  Tensor coarse;   // F^_v3 (D, H/32, W/32): WREC base and anchors
  Tensor offsets;  // (4, H/32, W/32) box regression
  Tensor dino;     // (11, H/8, W/8)
  Tensor sam;      // (8, H/4, W/4)
};

FrozenFeatures extract_features(const ParamStore& detector, const scenes::Scene& scene);
std::vector<FrozenFeatures> extract_features(const ParamStore& detector, const std::vector<scenes::Pair>& pairs);

// Text encoder, contrastive projections, DVFE and the WRES decoder: the
// parameters trained in the weak phase.
ParamStore init_weak_params(const Config& cfg);
// Prefixes of the weak-phase parameter groups.
std::vector<std::string> weak_param_groups(const Config& cfg);

struct PairForward {
  Var text;                       // f_t (d_t)
  wrec::AnchorMatch match;        // projected anchors, text, scores
  std::size_t top1 = 0;           // argmax cell
  std::vector<std::size_t> topk;  // top-k cells
  wrec::BoxPred box;              // decoded at top1 with the frozen offsets
  Var probs;                      // O (H, W)
  Var rec_weights, res_weights;   // DVFE weights (N_b) when DVFE is on
};

PairForward forward_pair(Binder& bind, const Config& cfg, const FrozenFeatures& feat,
                         const std::vector<std::uint32_t>& tokens, std::size_t image_h, std::size_t image_w);

struct BatchItem {
  const FrozenFeatures* features = nullptr;
  const scenes::Pair* pair = nullptr;
  std::uint64_t oracle_key = 0;
  // When set, used instead of querying the oracle.
  const Mask* fixed_pseudo = nullptr;
};

struct LossBundle {
  Var l_atc, l_res_raw, l_scl, l_inc, l_total;
  double atc = 0, res_raw = 0, scl = 0, inc = 0, total = 0;
  double gate_open_fraction = 0;
  std::vector<ccm::GateState> gates;
  std::vector<wrec::BoxPred> boxes;
  std::vector<wres::PseudoMask> pseudo;
};

// Full forward over a batch (>= 2 items) and the weighted total
// l_total = la * l_atc + li * l_inc + ls * l_scl + lr * l_res_raw.
LossBundle total_loss(Binder& bind, const Config& cfg, const std::vector<BatchItem>& batch);

// l_total rebuilt from the scalar parts and the weights.
double recompute_total(const LossBundle& b, const LossConfig& w);

struct PairRecord {
  Box pred_box;
  double box_iou = 0;   // rasterized prediction vs rasterized gt box
  bool rec_hit = false;
  double mask_iou = 0;  // binarized O vs gt mask
  ccm::GateState gate;
};

struct EvalReport {
  double rec_acc = 0;
  double res_miou = 0;
  std::vector<PairRecord> records;
};

// Metrics for one pair: REC hit iff the rasterized boxes have IoU > 0.5
// (strict); mask IoU against the gt mask. The gate is left default.
PairRecord score_pair(const scenes::Pair& pair, const Box& pred_box, const Mask& pred_mask);
// REC hit iff IoU > 0.5 (strict); RES mIoU is the mean per-pair IoU.
EvalReport evaluate(const ParamStore& weak, const Config& cfg, const std::vector<scenes::Pair>& pairs,
                    const std::vector<FrozenFeatures>& features);

// Aggregates per-pair records into accuracy and mean IoU.
EvalReport summarize(std::vector<PairRecord> records);

}  // namespace weakmcn::harness
