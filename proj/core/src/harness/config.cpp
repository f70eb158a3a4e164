#include "weakmcn/harness/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "weakmcn/error.hpp"

namespace weakmcn::harness {

using json = nlohmann::ordered_json;

void Config::validate() const {
  generator().validate();
  if (data.count < 1) throw ConfigError("data.count must be at least 1");
  if (data.height % 32 || data.width % 32) throw ConfigError("data.height/width must be multiples of 32");
  const std::size_t dims[] = {model.unified_dim, model.text_dim, model.embed_dim, model.contrastive_dim, model.branch_dim};
  for (auto d : dims) {
    if (d == 0) throw ConfigError("model dimensions must be positive");
  }
  if (model.bank.empty()) throw ConfigError("model.bank needs at least one source");
  std::set<std::string> seen;
  for (const auto& b : model.bank) {
    featbank::source_from_name(b);
    if (!seen.insert(b).second) throw ConfigError("model.bank lists '" + b + "' twice");
  }
  if (wrec.top_k < 1) throw ConfigError("wrec.top_k must be at least 1");
  if (!(wrec.tau > 0)) throw ConfigError("wrec.tau must be positive");
  if (wrec.neg_pool != "topk" && wrec.neg_pool != "top1") throw ConfigError("wrec.neg_pool must be topk or top1");
  if (!(ccm.alpha >= 0 && ccm.alpha <= 1)) throw ConfigError("ccm.alpha must lie in [0, 1]");
  ccm::gate_source_from_name(ccm.gate_source);
  for (double l : {loss.lambda_atc, loss.lambda_inc, loss.lambda_scl, loss.lambda_res}) {
    if (!(l >= 0)) throw ConfigError("loss weights must be non-negative");
  }
  if (!(optim.lr > 0)) throw ConfigError("optim.lr must be positive");
  if (optim.batch_size < 2) throw ConfigError("optim.batch_size must be at least 2 (contrastive loss requires negatives)");
  if (optim.schedule != "cosine") throw ConfigError("optim.schedule must be cosine");
  oracle.validate();
  if (detector.batch_size < 1) throw ConfigError("detector.batch_size must be positive");
  if (!(detector.lr > 0)) throw ConfigError("detector.lr must be positive");
  if (detector.head_hidden < 1) throw ConfigError("detector.head_hidden must be positive");
}

scenes::GeneratorConfig Config::generator() const {
  scenes::GeneratorConfig g;
  g.height = data.height;
  g.width = data.width;
  g.min_objects = data.min_objects;
  g.max_objects = data.max_objects;
  g.train_fraction = data.train_fraction;
  g.val_fraction = data.val_fraction;
  g.positional_prob = data.positional_prob;
  return g;
}

wrec::DetectorConfig Config::detector_config() const {
  wrec::DetectorConfig d;
  d.unified_dim = model.unified_dim;
  d.head_hidden = detector.head_hidden;
  d.epochs = detector.epochs;
  d.batch_size = detector.batch_size;
  d.lr = detector.lr;
  d.seed = detector.seed;
  return d;
}

featbank::BankLayout Config::bank_layout() const {
  featbank::BankLayout l;
  l.sources.clear();
  for (const auto& b : model.bank) l.sources.push_back(featbank::source_from_name(b));
  l.unified_dim = model.unified_dim;
  return l;
}

ccm::GateSource Config::gate_source() const { return ccm::gate_source_from_name(ccm.gate_source); }

namespace {

json to_json(const Config& c) {
  json j;
  j["seed"] = c.seed;
  j["data"] = {{"seed", c.data.seed},
               {"count", c.data.count},
               {"height", c.data.height},
               {"width", c.data.width},
               {"min_objects", c.data.min_objects},
               {"max_objects", c.data.max_objects},
               {"train_fraction", c.data.train_fraction},
               {"val_fraction", c.data.val_fraction},
               {"positional_prob", c.data.positional_prob}};
  j["model"] = {{"unified_dim", c.model.unified_dim},
                {"text_dim", c.model.text_dim},
                {"embed_dim", c.model.embed_dim},
                {"contrastive_dim", c.model.contrastive_dim},
                {"branch_dim", c.model.branch_dim},
                {"dvfe", c.model.dvfe},
                {"dvfe_residual", c.model.dvfe_residual},
                {"bank", c.model.bank}};
  j["wrec"] = {{"top_k", c.wrec.top_k},
               {"tau", c.wrec.tau},
               {"atc_literal", c.wrec.atc_literal},
               {"cosine_sim", c.wrec.cosine_sim},
               {"neg_pool", c.wrec.neg_pool}};
  j["ccm"] = {{"alpha", c.ccm.alpha}, {"gate_source", c.ccm.gate_source}};
  j["loss"] = {{"lambda_atc", c.loss.lambda_atc},
               {"lambda_inc", c.loss.lambda_inc},
               {"lambda_scl", c.loss.lambda_scl},
               {"lambda_res", c.loss.lambda_res}};
  j["optim"] = {{"lr", c.optim.lr},
                {"batch_size", c.optim.batch_size},
                {"epochs", c.optim.epochs},
                {"schedule", c.optim.schedule},
                {"freeze_pseudo_after", c.optim.freeze_pseudo_after},
                {"eval_every", c.optim.eval_every}};
  j["oracle"] = {{"p_clean", c.oracle.p_clean},
                 {"p_dilate", c.oracle.p_dilate},
                 {"p_erode", c.oracle.p_erode},
                 {"p_distractor", c.oracle.p_distractor},
                 {"radius", c.oracle.radius},
                 {"seed", c.oracle.seed}};
  j["detector"] = {{"seed", c.detector.seed},
                   {"epochs", c.detector.epochs},
                   {"batch_size", c.detector.batch_size},
                   {"lr", c.detector.lr},
                   {"head_hidden", c.detector.head_hidden}};
  return j;
}

// Reads the keys of one JSON object into fields, rejecting anything unknown.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + display() + "' must be an object");
  }

  template <typename T>
  Section& field(const char* key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    const std::string name = qualify(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("'" + name + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError("'" + name + "' must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError("'" + name + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError("'" + name + "' must be a string");
    } else {
      if (!it->is_array()) throw ConfigError("'" + name + "' must be a list");
      for (const auto& e : *it) {
        if (!e.is_string()) throw ConfigError("'" + name + "' must be a list of strings");
      }
    }
    out = it->get<T>();
    return *this;
  }

  Section sub(const char* key) {
    known_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, qualify(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!known_.count(k)) throw ConfigError("unknown config key '" + qualify(k) + "'");
    }
  }

 private:
  std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> known_;
};

Config from_json(const nlohmann::json& j) {
  Config c;
  Section root(j, "");
  root.field("seed", c.seed);
  auto data = root.sub("data");
  data.field("seed", c.data.seed)
      .field("count", c.data.count)
      .field("height", c.data.height)
      .field("width", c.data.width)
      .field("min_objects", c.data.min_objects)
      .field("max_objects", c.data.max_objects)
      .field("train_fraction", c.data.train_fraction)
      .field("val_fraction", c.data.val_fraction)
      .field("positional_prob", c.data.positional_prob)
      .finish();
  auto model = root.sub("model");
  model.field("unified_dim", c.model.unified_dim)
      .field("text_dim", c.model.text_dim)
      .field("embed_dim", c.model.embed_dim)
      .field("contrastive_dim", c.model.contrastive_dim)
      .field("branch_dim", c.model.branch_dim)
      .field("dvfe", c.model.dvfe)
      .field("dvfe_residual", c.model.dvfe_residual)
      .field("bank", c.model.bank)
      .finish();
  auto wrec = root.sub("wrec");
  wrec.field("top_k", c.wrec.top_k)
      .field("tau", c.wrec.tau)
      .field("atc_literal", c.wrec.atc_literal)
      .field("cosine_sim", c.wrec.cosine_sim)
      .field("neg_pool", c.wrec.neg_pool)
      .finish();
  auto cc = root.sub("ccm");
  cc.field("alpha", c.ccm.alpha).field("gate_source", c.ccm.gate_source).finish();
  auto loss = root.sub("loss");
  loss.field("lambda_atc", c.loss.lambda_atc)
      .field("lambda_inc", c.loss.lambda_inc)
      .field("lambda_scl", c.loss.lambda_scl)
      .field("lambda_res", c.loss.lambda_res)
      .finish();
  auto optim = root.sub("optim");
  optim.field("lr", c.optim.lr)
      .field("batch_size", c.optim.batch_size)
      .field("epochs", c.optim.epochs)
      .field("schedule", c.optim.schedule)
      .field("freeze_pseudo_after", c.optim.freeze_pseudo_after)
      .field("eval_every", c.optim.eval_every)
      .finish();
  auto oracle = root.sub("oracle");
  oracle.field("p_clean", c.oracle.p_clean)
      .field("p_dilate", c.oracle.p_dilate)
      .field("p_erode", c.oracle.p_erode)
      .field("p_distractor", c.oracle.p_distractor)
      .field("radius", c.oracle.radius)
      .field("seed", c.oracle.seed)
      .finish();
  auto det = root.sub("detector");
  det.field("seed", c.detector.seed)
      .field("epochs", c.detector.epochs)
      .field("batch_size", c.detector.batch_size)
      .field("lr", c.detector.lr)
      .field("head_hidden", c.detector.head_hidden)
      .finish();
  root.finish();
  return c;
}

}  // namespace

std::string dump_config(const Config& c) { return to_json(c).dump(2) + "\n"; }

Config parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config c = from_json(j);
  c.validate();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(Config& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));

  nlohmann::json tree = nlohmann::json::parse(to_json(c).dump());
  nlohmann::json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");

  nlohmann::json value;
  if (node->is_array() && !raw.starts_with("[")) {
    value = nlohmann::json::array();
    std::size_t from = 0;
    while (from <= raw.size()) {
      const auto comma = raw.find(',', from);
      value.push_back(raw.substr(from, comma == std::string::npos ? std::string::npos : comma - from));
      if (comma == std::string::npos) break;
      from = comma + 1;
    }
  } else {
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      value = raw;
    }
    if (node->is_string() && !value.is_string()) value = raw;
  }
  *node = value;
  Config next = from_json(tree);
  next.validate();
  c = std::move(next);
}

}  // namespace weakmcn::harness
