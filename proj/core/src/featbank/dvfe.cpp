#include "weakmcn/featbank/dvfe.hpp"

#include <cmath>
#include <string>

#include "weakmcn/error.hpp"

namespace weakmcn::featbank {

using nc::Shape;

std::string_view task_name(Task t) { return t == Task::kRec ? "rec" : "res"; }

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kDark: return "dark";
    case Source::kDino: return "dino";
    case Source::kSam: return "sam";
  }
  return "unknown";
}

Source source_from_name(std::string_view name) {
  if (name == "dark") return Source::kDark;
  if (name == "dino") return Source::kDino;
  if (name == "sam") return Source::kSam;
  throw ConfigError("unknown bank source '" + std::string(name) + "'");
}

std::size_t source_channels(Source s, std::size_t unified_dim) {
  switch (s) {
    case Source::kDark: return unified_dim;
    case Source::kDino: return kDinoChannels;
    case Source::kSam: return kSamChannels;
  }
  return 0;
}

namespace {

std::string prefix(Task task) { return "dvfe." + std::string(task_name(task)); }

}  // namespace

void init_dvfe_params(ParamStore& store, const BankLayout& layout, Rng& rng) {
  if (layout.sources.empty()) throw ConfigError("feature bank needs at least one source");
  const std::size_t d = layout.unified_dim;
  for (Task task : {Task::kRec, Task::kRes}) {
    const std::string p = prefix(task);
    store.add(p + ".W", Tensor(Shape{d, layout.sources.size()}));
    for (Source s : layout.sources) {
      const std::string a = p + ".adapt." + std::string(source_name(s));
      // A source listed twice shares one adapter.
      if (store.contains(a + ".w")) continue;
      store.add(a + ".w", nc::init_normal(Shape{d, source_channels(s, d), 1, 1},
                                          1.0 / std::sqrt(static_cast<double>(source_channels(s, d))), rng));
      store.add(a + ".b", Tensor(Shape{d}));
    }
  }
}

Var dvfe_weights(Binder& bind, Task task, Var base, std::size_t bank_size) {
  auto& g = bind.graph();
  Var w = bind(prefix(task) + ".W");
  const auto& ws = g.shape(w);
  if (ws.size() != 2 || ws[1] != bank_size) {
    throw ConfigError("dvfe: W_" + std::string(task_name(task)) + " has shape " + nc::shape_str(ws) +
                      " but the bank holds " + std::to_string(bank_size) + " sources");
  }
  const auto& bs = g.shape(base);
  if (bs.size() != 3 || bs[0] != ws[0]) throw ShapeError("dvfe_weights: base " + nc::shape_str(bs) + " vs W " + nc::shape_str(ws));
  Var pooled = g.reshape(g.mean(base, {1, 2}), Shape{1, bs[0]});
  Var logits = g.matmul(pooled, w);
  return g.reshape(g.softmax(logits, 1), Shape{bank_size});
}

Var dvfe_adapt(Binder& bind, Task task, Source source, Var feature, std::size_t out_h, std::size_t out_w) {
  auto& g = bind.graph();
  const std::string a = prefix(task) + ".adapt." + std::string(source_name(source));
  // Resize rows sum to one, so a 1x1 projection commutes with it; projecting
  // after the resize is the cheaper order.
  Var resized = g.conv2d(g.resize(feature, out_h, out_w), bind(a + ".w"), bind(a + ".b"));
  const auto& s = g.shape(resized);
  if (s[1] != out_h || s[2] != out_w) throw ConfigError("dvfe: adapter output size mismatch");
  return resized;
}

Var dvfe_combine(Binder& bind, Task task, const BankLayout& layout, const std::vector<Var>& bank, Var weights,
                 std::size_t out_h, std::size_t out_w, bool residual, Var base) {
  auto& g = bind.graph();
  if (bank.size() != layout.sources.size()) throw ConfigError("dvfe_combine: bank size does not match layout");
  if (g.shape(weights) != Shape{bank.size()}) {
    throw ConfigError("dvfe_combine: weight vector " + nc::shape_str(g.shape(weights)) + " for a bank of " +
                      std::to_string(bank.size()));
  }
  Var total{};
  for (std::size_t i = 0; i < bank.size(); ++i) {
    Var adapted = dvfe_adapt(bind, task, layout.sources[i], bank[i], out_h, out_w);
    Var term = g.mul(adapted, g.index_select(weights, {i}));
    total = i == 0 ? term : g.add(total, term);
  }
  if (residual) total = g.add(base, total);
  return total;
}

}  // namespace weakmcn::featbank
