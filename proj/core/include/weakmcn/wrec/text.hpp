#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "weakmcn/numcore/params.hpp"

namespace weakmcn::wrec {

using nc::Binder;
using nc::ParamStore;
using nc::Tensor;
using nc::Var;

struct TextConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t text_dim = 64;  // d_t
};

void init_text_params(ParamStore& store, const TextConfig& cfg, Rng& rng);

// f_t = W * mean(embedding[tokens]) + b, shape (d_t). Throws
// std::invalid_argument for an empty sequence and std::out_of_range for an
// id outside the vocabulary.
Var encode_text(Binder& bind, const std::vector<std::uint32_t>& tokens);

}  // namespace weakmcn::wrec
