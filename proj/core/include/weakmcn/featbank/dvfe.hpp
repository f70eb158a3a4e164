#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "weakmcn/featbank/encoders.hpp"

namespace weakmcn::featbank {

enum class Task { kRec, kRes };
std::string_view task_name(Task t);

enum class Source { kDark, kDino, kSam };
std::string_view source_name(Source s);
// Throws ConfigError on an unknown name.
Source source_from_name(std::string_view name);
std::size_t source_channels(Source s, std::size_t unified_dim);

struct BankLayout {
  std::vector<Source> sources{Source::kDark, Source::kDino, Source::kSam};
  std::size_t unified_dim = 64;
};

// W_t (D x N_b) per task and one adapter (1x1 linear map + bias) per
// (task, source). W_t starts at zero, so initial weights are uniform.
void init_dvfe_params(ParamStore& store, const BankLayout& layout, Rng& rng);

// w_t = softmax(GAP(base) . W_t); base is the task's DarkNet map (D, h, w).
// Returns shape (N_b).
Var dvfe_weights(Binder& bind, Task task, Var base, std::size_t bank_size);

// F_t = sum_i w_t[i] * T_{t,i}(V_i), each T a linear channel map to D followed
// by a resize to (out_h, out_w). With `residual`, `base` is added on top.
// bank[i] must correspond to layout.sources[i].
Var dvfe_combine(Binder& bind, Task task, const BankLayout& layout, const std::vector<Var>& bank, Var weights,
                 std::size_t out_h, std::size_t out_w, bool residual = false, Var base = {});

// The adapted source T_{t,i}(V_i) on its own.
Var dvfe_adapt(Binder& bind, Task task, Source source, Var feature, std::size_t out_h, std::size_t out_w);

}  // namespace weakmcn::featbank
