#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weakmcn/geometry.hpp"
#include "weakmcn/synthscenes/vocab.hpp"

namespace weakmcn::scenes {

struct ObjectRecord {
  ShapeKind shape = ShapeKind::kRectangle;
  Color color = Color::kRed;
  SizeClass size = SizeClass::kSmall;
  Box gt_box;
  Mask gt_mask;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

struct Scene {
  std::size_t height = 0;
  std::size_t width = 0;
  // Row-major H x W x 3, values in [0, 1].
  std::vector<float> image;
  std::vector<ObjectRecord> objects;
  std::uint64_t seed = 0;

  float pixel(std::size_t i, std::size_t j, std::size_t ch) const { return image[(i * width + j) * 3 + ch]; }
  friend bool operator==(const Scene&, const Scene&) = default;
};

inline constexpr std::size_t kMaxExpressionLength = 8;

struct Expression {
  std::vector<std::uint32_t> tokens;
  // Referent; evaluation and oracles only, never training supervision.
  std::size_t target_index = 0;

  friend bool operator==(const Expression&, const Expression&) = default;
};

struct Pair {
  Scene scene;
  Expression expression;

  friend bool operator==(const Pair&, const Pair&) = default;
};

struct GeneratorConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_objects = 2;
  std::size_t max_objects = 5;
  double train_fraction = 0.8;
  double val_fraction = 0.0;
  // Probability that an expression carries a positional word.
  double positional_prob = 0.25;
  std::size_t max_attempts = 1000;

  // Throws ConfigError on violated preconditions.
  void validate() const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct Dataset {
  std::uint64_t seed = 0;
  GeneratorConfig config;
  std::vector<Pair> train;
  std::vector<Pair> val;
  std::vector<Pair> test;

  // "train" | "val" | "test"; throws std::invalid_argument otherwise.
  const std::vector<Pair>& split(std::string_view name) const;
  std::size_t size() const { return train.size() + val.size() + test.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Size bands as fractions of image area: small < 6%, medium 6-15%, large > 15%.
SizeClass size_class_for(std::size_t mask_pixels, std::size_t image_pixels);

// Whether object `index` satisfies every token: attribute tokens filter the
// objects, a positional word then keeps the extreme box center among the
// filtered ones (ties to the lower index; "center" = nearest the image center).
bool satisfies(const Scene& scene, std::size_t index, const std::vector<std::uint32_t>& tokens);

// Unique object satisfying the expression. Throws IntegrityError when zero or
// several objects match.
std::size_t resolve(const Expression& expr, const Scene& scene);

// Scene plus expression for one sub-seed, or nothing when rejection sampling
// exceeds config.max_attempts.
std::optional<Pair> generate_pair(std::uint64_t sub_seed, const GeneratorConfig& config);

// count pairs, split in order into train / val / test. Pure function of
// (seed, count, config).
Dataset generate(std::uint64_t seed, std::size_t count, const GeneratorConfig& config);

// Sub-seed for pair `index`, attempt `attempt`.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt);

}  // namespace weakmcn::scenes
