#include "weakmcn/synthscenes/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "weakmcn/error.hpp"
#include "weakmcn/rng.hpp"

namespace weakmcn::scenes {

void GeneratorConfig::validate() const {
  if (height < 16 || width < 16) throw ConfigError("image extents must be at least 16 pixels");
  if (min_objects < 2 || max_objects > 5 || min_objects > max_objects) {
    throw ConfigError("object count range must satisfy 2 <= min_objects <= max_objects <= 5");
  }
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  if (positional_prob < 0 || positional_prob > 1) throw ConfigError("positional_prob must lie in [0, 1]");
  if (max_attempts == 0) throw ConfigError("max_attempts must be positive");
}

const std::vector<Pair>& Dataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

SizeClass size_class_for(std::size_t mask_pixels, std::size_t image_pixels) {
  const double frac = static_cast<double>(mask_pixels) / static_cast<double>(image_pixels);
  if (frac < 0.06) return SizeClass::kSmall;
  if (frac <= 0.15) return SizeClass::kMedium;
  return SizeClass::kLarge;
}

namespace {

double center_distance_sq(const Scene& scene, const ObjectRecord& o) {
  const double dx = o.gt_box.center_x() - static_cast<double>(scene.width) / 2;
  const double dy = o.gt_box.center_y() - static_cast<double>(scene.height) / 2;
  return dx * dx + dy * dy;
}

// Lower key wins; ties go to the lower index.
double position_key(const Scene& scene, const ObjectRecord& o, Position p) {
  switch (p) {
    case Position::kLeftmost: return o.gt_box.center_x();
    case Position::kRightmost: return -o.gt_box.center_x();
    case Position::kTopmost: return o.gt_box.center_y();
    case Position::kBottommost: return -o.gt_box.center_y();
    case Position::kCenter: return center_distance_sq(scene, o);
  }
  return 0;
}

std::vector<std::size_t> matching(const Scene& scene, const std::vector<std::uint32_t>& tokens) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    bool ok = true;
    for (auto t : tokens) {
      const auto info = token_info(t);
      switch (info.kind) {
        case TokenKind::kColor: ok = ok && static_cast<std::uint8_t>(o.color) == info.value; break;
        case TokenKind::kShape: ok = ok && static_cast<std::uint8_t>(o.shape) == info.value; break;
        case TokenKind::kSize: ok = ok && static_cast<std::uint8_t>(o.size) == info.value; break;
        case TokenKind::kPosition: break;
      }
    }
    if (ok) candidates.push_back(i);
  }
  for (auto t : tokens) {
    const auto info = token_info(t);
    if (info.kind != TokenKind::kPosition || candidates.empty()) continue;
    const auto pos = static_cast<Position>(info.value);
    std::size_t best = candidates.front();
    for (auto c : candidates) {
      if (position_key(scene, scene.objects[c], pos) < position_key(scene, scene.objects[best], pos)) best = c;
    }
    candidates = {best};
  }
  return candidates;
}

Mask rasterize_shape(ShapeKind kind, bool flipped, long x0, long y0, long w, long h, std::size_t height,
                     std::size_t width) {
  Mask m(height, width);
  const double cx = static_cast<double>(x0) + static_cast<double>(w) / 2;
  const double cy = static_cast<double>(y0) + static_cast<double>(h) / 2;
  // Triangle vertices (apex up unless flipped).
  const double ax = cx, ay = flipped ? static_cast<double>(y0 + h) : static_cast<double>(y0);
  const double bx = static_cast<double>(x0), by = flipped ? static_cast<double>(y0) : static_cast<double>(y0 + h);
  const double qx = static_cast<double>(x0 + w), qy = by;
  auto edge = [](double px, double py, double ux, double uy, double vx, double vy) {
    return (vx - ux) * (py - uy) - (vy - uy) * (px - ux);
  };
  for (long i = std::max(0L, y0); i < std::min<long>(static_cast<long>(height), y0 + h); ++i) {
    for (long j = std::max(0L, x0); j < std::min<long>(static_cast<long>(width), x0 + w); ++j) {
      const double px = static_cast<double>(j) + 0.5, py = static_cast<double>(i) + 0.5;
      bool inside = false;
      switch (kind) {
        case ShapeKind::kRectangle: inside = true; break;
        case ShapeKind::kEllipse: {
          const double u = (px - cx) / (static_cast<double>(w) / 2);
          const double v = (py - cy) / (static_cast<double>(h) / 2);
          inside = u * u + v * v <= 1.0;
          break;
        }
        case ShapeKind::kTriangle: {
          const double e0 = edge(px, py, ax, ay, bx, by);
          const double e1 = edge(px, py, bx, by, qx, qy);
          const double e2 = edge(px, py, qx, qy, ax, ay);
          inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
          break;
        }
      }
      if (inside) m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1;
    }
  }
  return m;
}

bool single_component(const Mask& m) {
  const std::size_t total = m.count();
  if (total == 0) return false;
  std::vector<std::uint8_t> seen(m.bits.size(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t k = 0; k < m.bits.size(); ++k) {
    if (m.bits[k]) {
      queue.push_back(k);
      seen[k] = 1;
      break;
    }
  }
  std::size_t reached = 0;
  while (!queue.empty()) {
    const std::size_t k = queue.front();
    queue.pop_front();
    ++reached;
    const std::size_t i = k / m.width, j = k % m.width;
    auto visit = [&](std::size_t ni, std::size_t nj) {
      const std::size_t nk = ni * m.width + nj;
      if (m.bits[nk] && !seen[nk]) {
        seen[nk] = 1;
        queue.push_back(nk);
      }
    };
    if (i > 0) visit(i - 1, j);
    if (i + 1 < m.height) visit(i + 1, j);
    if (j > 0) visit(i, j - 1);
    if (j + 1 < m.width) visit(i, j + 1);
  }
  return reached == total;
}

// True when `m` overlaps or touches (8-neighbourhood) any pixel of `other`.
bool touches(const Mask& m, const Mask& other) {
  for (std::size_t i = 0; i < m.height; ++i) {
    for (std::size_t j = 0; j < m.width; ++j) {
      if (!m.at(i, j)) continue;
      const std::size_t i0 = i > 0 ? i - 1 : 0, i1 = std::min(i + 1, m.height - 1);
      const std::size_t j0 = j > 0 ? j - 1 : 0, j1 = std::min(j + 1, m.width - 1);
      for (std::size_t a = i0; a <= i1; ++a) {
        for (std::size_t b = j0; b <= j1; ++b) {
          if (other.at(a, b)) return true;
        }
      }
    }
  }
  return false;
}

struct AreaBand {
  double lo, hi;
};

AreaBand band_for(SizeClass s) {
  switch (s) {
    case SizeClass::kSmall: return {0.025, 0.055};
    case SizeClass::kMedium: return {0.07, 0.14};
    case SizeClass::kLarge: return {0.16, 0.24};
  }
  return {0, 0};
}

double fill_factor(ShapeKind k) {
  switch (k) {
    case ShapeKind::kRectangle: return 1.0;
    case ShapeKind::kEllipse: return 0.785398;
    case ShapeKind::kTriangle: return 0.5;
  }
  return 1.0;
}

std::optional<ObjectRecord> propose_object(Rng& rng, const GeneratorConfig& cfg) {
  ObjectRecord o;
  o.shape = static_cast<ShapeKind>(rng.uniform_int(0, kNumShapes - 1));
  o.color = static_cast<Color>(rng.uniform_int(0, kNumColors - 1));
  o.size = static_cast<SizeClass>(rng.uniform_int(0, kNumSizes - 1));
  const bool flipped = rng.bernoulli(0.5);
  const auto band = band_for(o.size);
  const double image_area = static_cast<double>(cfg.height * cfg.width);
  const double target = rng.uniform(band.lo, band.hi) * image_area / fill_factor(o.shape);
  const double aspect = rng.uniform(0.7, 1.45);
  const long w = std::lround(std::sqrt(target * aspect));
  const long h = std::lround(target / static_cast<double>(std::max(w, 1L)));
  if (w < 4 || h < 4 || w > static_cast<long>(cfg.width) || h > static_cast<long>(cfg.height)) return std::nullopt;
  const long x0 = static_cast<long>(rng.uniform_int(0, cfg.width - static_cast<std::size_t>(w)));
  const long y0 = static_cast<long>(rng.uniform_int(0, cfg.height - static_cast<std::size_t>(h)));
  o.gt_mask = rasterize_shape(o.shape, flipped, x0, y0, w, h, cfg.height, cfg.width);
  const std::size_t pixels = o.gt_mask.count();
  if (pixels == 0 || size_class_for(pixels, cfg.height * cfg.width) != o.size) return std::nullopt;
  if (!single_component(o.gt_mask)) return std::nullopt;
  o.gt_box = tight_box(o.gt_mask);
  return o;
}

}  // namespace

bool satisfies(const Scene& scene, std::size_t index, const std::vector<std::uint32_t>& tokens) {
  const auto m = matching(scene, tokens);
  return std::find(m.begin(), m.end(), index) != m.end();
}

std::size_t resolve(const Expression& expr, const Scene& scene) {
  const auto m = matching(scene, expr.tokens);
  if (m.size() != 1) {
    throw IntegrityError("expression matches " + std::to_string(m.size()) + " objects; expected exactly one");
  }
  return m.front();
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt) {
  return mix_seed(mix_seed(seed, index), attempt);
}

std::optional<Pair> generate_pair(std::uint64_t seed, const GeneratorConfig& cfg) {
  Rng rng(seed);
  std::size_t attempts = 0;
  Pair pair;
  Scene& scene = pair.scene;
  scene.height = cfg.height;
  scene.width = cfg.width;
  scene.seed = seed;

  const std::size_t n_objects = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  while (scene.objects.size() < n_objects) {
    if (++attempts > cfg.max_attempts) return std::nullopt;
    auto o = propose_object(rng, cfg);
    if (!o) continue;
    const bool clash = std::any_of(scene.objects.begin(), scene.objects.end(),
                                   [&](const ObjectRecord& e) { return touches(o->gt_mask, e.gt_mask); });
    if (clash) continue;
    scene.objects.push_back(std::move(*o));
  }

  scene.image.assign(cfg.height * cfg.width * 3, 0.0f);
  for (const auto& o : scene.objects) {
    const auto rgb = color_rgb(o.color);
    for (std::size_t k = 0; k < o.gt_mask.bits.size(); ++k) {
      if (!o.gt_mask.bits[k]) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) scene.image[k * 3 + ch] = rgb[ch];
    }
  }

  while (true) {
    if (++attempts > cfg.max_attempts) return std::nullopt;
    const std::size_t target = rng.uniform_int(0, scene.objects.size() - 1);
    const auto& o = scene.objects[target];
    std::vector<std::uint32_t> tokens;
    if (rng.bernoulli(cfg.positional_prob)) {
      tokens.push_back(token_of(static_cast<Position>(rng.uniform_int(0, kNumPositions - 1))));
    }
    const bool use_size = rng.bernoulli(0.5);
    const bool use_color = rng.bernoulli(0.5);
    const bool use_shape = rng.bernoulli(0.5);
    if (use_size) tokens.push_back(token_of(o.size));
    if (use_color) tokens.push_back(token_of(o.color));
    if (use_shape) tokens.push_back(token_of(o.shape));
    if (tokens.empty() || tokens.size() > kMaxExpressionLength) continue;
    const auto m = matching(scene, tokens);
    if (m.size() != 1 || m.front() != target) continue;
    pair.expression.tokens = std::move(tokens);
    pair.expression.target_index = target;
    return pair;
  }
}

Dataset generate(std::uint64_t seed, std::size_t count, const GeneratorConfig& config) {
  if (count == 0) throw ConfigError("count must be at least 1");
  config.validate();
  Dataset ds;
  ds.seed = seed;
  ds.config = config;
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(count) * config.train_fraction + 0.5));
  const auto n_val = std::min(count - std::min(count, n_train),
                              static_cast<std::size_t>(std::floor(static_cast<double>(count) * config.val_fraction + 0.5)));
  constexpr std::uint64_t kMaxSubSeeds = 10000;
  for (std::size_t p = 0; p < count; ++p) {
    std::optional<Pair> pair;
    for (std::uint64_t attempt = 0; attempt < kMaxSubSeeds && !pair; ++attempt) {
      pair = generate_pair(sub_seed(seed, p, attempt), config);
    }
    if (!pair) throw std::runtime_error("scene generation failed for pair " + std::to_string(p));
    if (p < n_train) {
      ds.train.push_back(std::move(*pair));
    } else if (p < n_train + n_val) {
      ds.val.push_back(std::move(*pair));
    } else {
      ds.test.push_back(std::move(*pair));
    }
  }
  return ds;
}

}  // namespace weakmcn::scenes
