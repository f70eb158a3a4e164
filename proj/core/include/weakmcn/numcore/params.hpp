#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "weakmcn/numcore/graph.hpp"
#include "weakmcn/rng.hpp"

namespace weakmcn::nc {

// Named parameter tensors in insertion order.
class ParamStore {
 public:
  // Throws std::invalid_argument on duplicate names.
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;
  std::size_t size() const { return order_.size(); }
  std::size_t numel() const;

  // Copies every tensor of `other` whose name starts with `prefix`.
  void merge_from(const ParamStore& other, std::string_view prefix = "");

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.order_ == b.order_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor, std::less<>> tensors_;
};

// Lazily enters parameters into a graph: as trainable leaves when the
// predicate accepts the name, as constants otherwise.
class Binder {
 public:
  using Predicate = std::function<bool(std::string_view)>;

  Binder(Graph& graph, const ParamStore& store, Predicate trainable);

  Var operator()(std::string_view name);
  // Uses `v` for `name` from now on (e.g. a probe leaf during gradient checks).
  void bind_as(std::string_view name, Var v);
  Graph& graph() { return graph_; }
  const ParamStore& store() const { return store_; }
  // Parameters bound as trainable leaves so far.
  const std::map<std::string, Var, std::less<>>& trainable() const { return trainable_; }

  static Predicate none() {
    return [](std::string_view) { return false; };
  }
  static Predicate prefixes(std::vector<std::string> prefixes);

 private:
  Graph& graph_;
  const ParamStore& store_;
  Predicate predicate_;
  std::map<std::string, Var, std::less<>> bound_;
  std::map<std::string, Var, std::less<>> trainable_;
};

// Normal(0, std) entries.
Tensor init_normal(Shape shape, double std, Rng& rng);
// He-normal for a conv/linear weight whose fan-in is the product of all but the first extent.
Tensor init_he(Shape shape, Rng& rng);

}  // namespace weakmcn::nc
