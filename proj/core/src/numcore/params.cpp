#include "weakmcn/numcore/params.hpp"

#include <cmath>
#include <stdexcept>

namespace weakmcn::nc {

void ParamStore::add(std::string name, Tensor value) {
  if (tensors_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  value.set_requires_grad(false);
  order_.push_back(name);
  tensors_.emplace(std::move(name), std::move(value));
}

bool ParamStore::contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParamStore::get(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    if (n.starts_with(prefix)) out.push_back(n);
  }
  return out;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

void ParamStore::merge_from(const ParamStore& other, std::string_view prefix) {
  for (const auto& n : other.names_with_prefix(prefix)) {
    if (contains(n)) {
      get(n) = other.get(n);
    } else {
      add(n, other.get(n));
    }
  }
}

Binder::Binder(Graph& graph, const ParamStore& store, Predicate trainable)
    : graph_(graph), store_(store), predicate_(std::move(trainable)) {}

Var Binder::operator()(std::string_view name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Tensor& t = store_.get(name);
  const bool train = predicate_(name);
  Var v = train ? graph_.param(t) : graph_.constant(t);
  bound_.emplace(std::string(name), v);
  if (train) trainable_.emplace(std::string(name), v);
  return v;
}

void Binder::bind_as(std::string_view name, Var v) {
  if (!store_.contains(name)) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  bound_.insert_or_assign(std::string(name), v);
}

Binder::Predicate Binder::prefixes(std::vector<std::string> prefixes) {
  return [prefixes = std::move(prefixes)](std::string_view name) {
    for (const auto& p : prefixes) {
      if (name.starts_with(p)) return true;
    }
    return false;
  };
}

Tensor init_normal(Shape shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(rng.normal() * std);
  return t;
}

Tensor init_he(Shape shape, Rng& rng) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return init_normal(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

}  // namespace weakmcn::nc
