#include "weakmcn/wrec/text.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace weakmcn::wrec {

using nc::Shape;

void init_text_params(ParamStore& store, const TextConfig& cfg, Rng& rng) {
  store.add("text.embed", nc::init_normal(Shape{cfg.vocab_size, cfg.embed_dim}, 1.0, rng));
  store.add("text.proj.w", nc::init_normal(Shape{cfg.text_dim, cfg.embed_dim},
                                           1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)), rng));
  store.add("text.proj.b", Tensor(Shape{cfg.text_dim}));
}

Var encode_text(Binder& bind, const std::vector<std::uint32_t>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_text: empty token sequence");
  auto& g = bind.graph();
  Var embed = bind("text.embed");
  const std::size_t vocab = g.shape(embed)[0];
  std::vector<std::size_t> rows;
  for (auto t : tokens) {
    if (t >= vocab) throw std::out_of_range("encode_text: token id " + std::to_string(t) + " outside vocabulary");
    rows.push_back(t);
  }
  Var pooled = g.mean(g.index_select(embed, rows), {0});
  const std::size_t e = g.shape(pooled)[0];
  Var proj = g.matmul(bind("text.proj.w"), g.reshape(pooled, Shape{e, 1}));
  const std::size_t d = g.shape(proj)[0];
  return g.add(g.reshape(proj, Shape{d}), bind("text.proj.b"));
}

}  // namespace weakmcn::wrec
