#include "weakmcn/featbank/encoders.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "weakmcn/error.hpp"

namespace weakmcn::featbank {

using nc::Real;
using nc::Shape;

void check_encoder_extent(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
    throw ShapeError("encoder input " + std::to_string(height) + "x" + std::to_string(width) +
                     " requires divisibility by 32");
  }
}

Tensor image_tensor(const scenes::Scene& scene) {
  Tensor t(Shape{3, scene.height, scene.width});
  auto d = t.data();
  const std::size_t plane = scene.height * scene.width;
  for (std::size_t k = 0; k < plane; ++k) {
    for (std::size_t ch = 0; ch < 3; ++ch) d[ch * plane + k] = static_cast<Real>(scene.image[k * 3 + ch]);
  }
  return t;
}

void init_dark_params(ParamStore& store, const DarkConfig& cfg, Rng& rng) {
  std::size_t in = 3;
  for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
    const std::string p = "dark.conv" + std::to_string(s);
    store.add(p + ".w", nc::init_he(Shape{cfg.channels[s], in, 3, 3}, rng));
    store.add(p + ".b", Tensor(Shape{cfg.channels[s]}));
    in = cfg.channels[s];
  }
}

std::array<Var, 3> encode_dark(Binder& bind, Var image) {
  auto& g = bind.graph();
  const auto& s = g.shape(image);
  if (s.size() != 3 || s[0] != 3) throw ShapeError("encode_dark expects a (3, H, W) image, got " + nc::shape_str(s));
  check_encoder_extent(s[1], s[2]);
  std::array<Var, 3> out;
  Var x = image;
  for (std::size_t stage = 0; stage < 5; ++stage) {
    const std::string p = "dark.conv" + std::to_string(stage);
    x = g.relu(g.conv2d(x, bind(p + ".w"), bind(p + ".b"), {.stride = 2, .dilation = 1}));
    if (stage >= 2) out[stage - 2] = x;
  }
  return out;
}

namespace {

constexpr float kBackgroundLevel = 0.05f;

bool is_background(const scenes::Scene& s, std::size_t i, std::size_t j) {
  return s.pixel(i, j, 0) < kBackgroundLevel && s.pixel(i, j, 1) < kBackgroundLevel &&
         s.pixel(i, j, 2) < kBackgroundLevel;
}

std::size_t nearest_color(const scenes::Scene& s, std::size_t i, std::size_t j) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < scenes::kNumColors; ++c) {
    const auto rgb = scenes::color_rgb(static_cast<scenes::Color>(c));
    double d = 0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double diff = static_cast<double>(s.pixel(i, j, ch)) - static_cast<double>(rgb[ch]);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

Tensor encode_dino(const scenes::Scene& scene) {
  check_encoder_extent(scene.height, scene.width);
  const std::size_t gh = scene.height / kDinoPatch, gw = scene.width / kDinoPatch;
  Tensor out(Shape{kDinoChannels, gh, gw});
  auto d = out.data();
  const std::size_t plane = gh * gw;
  const Real inv = Real{1} / static_cast<Real>(kDinoPatch * kDinoPatch);
  for (std::size_t pi = 0; pi < gh; ++pi) {
    for (std::size_t pj = 0; pj < gw; ++pj) {
      const std::size_t cell = pi * gw + pj;
      for (std::size_t i = pi * kDinoPatch; i < (pi + 1) * kDinoPatch; ++i) {
        for (std::size_t j = pj * kDinoPatch; j < (pj + 1) * kDinoPatch; ++j) {
          if (!is_background(scene, i, j)) d[nearest_color(scene, i, j) * plane + cell] += inv;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            d[(scenes::kNumColors + ch) * plane + cell] += inv * static_cast<Real>(scene.pixel(i, j, ch));
          }
        }
      }
    }
  }
  return out;
}

Tensor encode_sam(const scenes::Scene& scene) {
  check_encoder_extent(scene.height, scene.width);
  const std::size_t h = scene.height, w = scene.width;

  auto diff = [&](std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1) {
    Real acc = 0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      acc += std::abs(static_cast<Real>(scene.pixel(i1, j1, ch)) - static_cast<Real>(scene.pixel(i0, j0, ch)));
    }
    return acc;
  };

  // Connected regions of identical colour, 4-connectivity, raster-order labels.
  std::vector<std::uint32_t> label(h * w, std::numeric_limits<std::uint32_t>::max());
  std::uint32_t next = 0;
  std::deque<std::size_t> queue;
  auto same = [&](std::size_t a, std::size_t b) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      if (scene.image[a * 3 + ch] != scene.image[b * 3 + ch]) return false;
    }
    return true;
  };
  for (std::size_t k = 0; k < h * w; ++k) {
    if (label[k] != std::numeric_limits<std::uint32_t>::max()) continue;
    label[k] = next;
    queue.push_back(k);
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      const std::size_t i = q / w, j = q % w;
      auto visit = [&](std::size_t n) {
        if (label[n] == std::numeric_limits<std::uint32_t>::max() && same(q, n)) {
          label[n] = next;
          queue.push_back(n);
        }
      };
      if (i > 0) visit(q - w);
      if (i + 1 < h) visit(q + w);
      if (j > 0) visit(q - 1);
      if (j + 1 < w) visit(q + 1);
    }
    ++next;
  }

  const std::size_t gh = h / kSamStride, gw = w / kSamStride;
  Tensor out(Shape{kSamChannels, gh, gw});
  auto d = out.data();
  const std::size_t plane = gh * gw;
  const Real inv = Real{1} / static_cast<Real>(kSamStride * kSamStride);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const Real dx = j + 1 < w ? diff(i, j, i, j + 1) : Real{0};
      const Real dy = i + 1 < h ? diff(i, j, i + 1, j) : Real{0};
      const Real dd = (i + 1 < h && j + 1 < w) ? diff(i, j, i + 1, j + 1) : Real{0};
      const Real da = (i + 1 < h && j > 0) ? diff(i, j, i + 1, j - 1) : Real{0};
      const std::uint64_t hash = splitmix64(label[i * w + j]);
      const Real feats[kSamChannels] = {
          std::sqrt(dx * dx + dy * dy),
          dx,
          dy,
          dd,
          da,
          static_cast<Real>(hash & 0xffff) / Real{65535},
          static_cast<Real>((hash >> 16) & 0xffff) / Real{65535},
          static_cast<Real>((hash >> 32) & 0xffff) / Real{65535},
      };
      const std::size_t cell = (i / kSamStride) * gw + (j / kSamStride);
      for (std::size_t c = 0; c < kSamChannels; ++c) d[c * plane + cell] += inv * feats[c];
    }
  }
  return out;
}

}  // namespace weakmcn::featbank
