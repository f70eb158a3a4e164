#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "weakmcn/ccm/consistency.hpp"
#include "weakmcn/featbank/dvfe.hpp"
#include "weakmcn/synthscenes/scene.hpp"
#include "weakmcn/wrec/detector.hpp"
#include "weakmcn/wres/wres.hpp"

namespace weakmcn::harness {

struct DataConfig {
  std::uint64_t seed = 7;
  std::size_t count = 2500;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_objects = 2;
  std::size_t max_objects = 5;
  double train_fraction = 0.8;
  double val_fraction = 0.0;
  double positional_prob = 0.25;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ModelConfig {
  std::size_t unified_dim = 64;      // D
  std::size_t text_dim = 64;         // d_t
  std::size_t embed_dim = 32;
  std::size_t contrastive_dim = 64;
  std::size_t branch_dim = 16;       // channels per ASPP branch
  bool dvfe = true;
  bool dvfe_residual = false;
  std::vector<std::string> bank{"dark", "dino", "sam"};

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct WrecConfig {
  std::size_t top_k = 2;
  double tau = 0.1;
  bool atc_literal = false;
  bool cosine_sim = false;
  std::string neg_pool = "topk";  // topk | top1

  friend bool operator==(const WrecConfig&, const WrecConfig&) = default;
};

struct CcmConfig {
  double alpha = ccm::kDefaultAlpha;
  std::string gate_source = "predicted_mask";  // predicted_mask | pseudo_mask

  friend bool operator==(const CcmConfig&, const CcmConfig&) = default;
};

struct LossConfig {
  double lambda_atc = 1.0;
  double lambda_inc = 50.0;
  double lambda_scl = 1.0;
  double lambda_res = 0.0;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct OptimConfig {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 15;
  std::string schedule = "cosine";
  // Pseudo masks stop being regenerated after this epoch; 0 regenerates every epoch.
  std::size_t freeze_pseudo_after = 0;
  // Evaluate the test split every N epochs (the last epoch always); 0 only at the end.
  std::size_t eval_every = 1;

  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

struct DetectorSection {
  std::uint64_t seed = 1;
  std::size_t epochs = 12;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  std::size_t head_hidden = 32;

  friend bool operator==(const DetectorSection&, const DetectorSection&) = default;
};

struct Config {
  std::uint64_t seed = 1;
  DataConfig data;
  ModelConfig model;
  WrecConfig wrec;
  CcmConfig ccm;
  LossConfig loss;
  OptimConfig optim;
  wres::OracleConfig oracle;
  DetectorSection detector;

  // Throws ConfigError naming the offending field.
  void validate() const;

  scenes::GeneratorConfig generator() const;
  wrec::DetectorConfig detector_config() const;
  featbank::BankLayout bank_layout() const;
  ccm::GateSource gate_source() const;

  friend bool operator==(const Config&, const Config&) = default;
};

// Pretty-printed JSON with a fixed key order; parse(dump(c)) == c and
// dump(parse(s)) == s for any s produced by dump.
std::string dump_config(const Config& c);
// Strict: unknown keys and wrong types raise ConfigError. Missing keys keep
// their defaults. The result is validated.
Config parse_config(std::string_view text);
Config load_config(const std::string& path);

// `key=value` with a dotted key such as loss.lambda_inc or oracle.p_clean.
// The value is read as JSON when it parses, as a string otherwise; a
// comma-separated value for model.bank becomes a list.
void apply_override(Config& c, std::string_view assignment);

}  // namespace weakmcn::harness
