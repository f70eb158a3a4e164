#include "weakmcn/wres/wres.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "weakmcn/ccm/consistency.hpp"
#include "weakmcn/error.hpp"

namespace weakmcn::wres {

using nc::Real;
using nc::Shape;

const char* noise_mode_name(NoiseMode m) {
  switch (m) {
    case NoiseMode::kClean: return "clean";
    case NoiseMode::kDilate: return "dilate";
    case NoiseMode::kErode: return "erode";
    case NoiseMode::kDistractor: return "distractor";
  }
  return "?";
}

void OracleConfig::validate() const {
  const double ps[4] = {p_clean, p_dilate, p_erode, p_distractor};
  double total = 0;
  for (double p : ps) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("oracle probabilities must lie in [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("oracle probabilities must sum to 1, got " + std::to_string(total));
  if (radius != 1 && radius != 2) throw ConfigError("oracle radius must be 1 or 2");
}

namespace {

Mask morph(const Mask& m, std::size_t r, bool grow) {
  Mask out(m.height, m.width);
  const auto ri = static_cast<long>(r);
  const auto h = static_cast<long>(m.height), w = static_cast<long>(m.width);
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      bool any = false, all = true;
      for (long di = -ri; di <= ri; ++di) {
        for (long dj = -ri; dj <= ri; ++dj) {
          const long y = i + di, x = j + dj;
          const bool v = y >= 0 && y < h && x >= 0 && x < w && m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
          any = any || v;
          all = all && v;
        }
      }
      out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = (grow ? any : all) ? 1 : 0;
    }
  }
  return out;
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace

Mask dilate(const Mask& m, std::size_t r) { return morph(m, r, true); }
Mask erode(const Mask& m, std::size_t r) { return morph(m, r, false); }

PseudoMask oracle_mask(const scenes::Scene& scene, const Box& prompt, const OracleConfig& cfg, std::uint64_t key) {
  PseudoMask out;
  out.prompt = prompt;
  out.mask = Mask(scene.height, scene.width);

  // The mode is drawn before the object lookup so the stream does not depend on the prompt.
  Rng rng(mix_seed(cfg.seed, key));
  const double u = rng.uniform();
  if (u < cfg.p_clean) out.mode = NoiseMode::kClean;
  else if (u < cfg.p_clean + cfg.p_dilate) out.mode = NoiseMode::kDilate;
  else if (u < cfg.p_clean + cfg.p_dilate + cfg.p_erode) out.mode = NoiseMode::kErode;
  else out.mode = NoiseMode::kDistractor;

  double best = 0.0;
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const double v = box_iou(prompt, scene.objects[k].gt_box);
    if (v > best) {
      best = v;
      out.object = k;
    }
  }
  if (!out.object) return out;
  const Mask& gt = scene.objects[*out.object].gt_mask;

  switch (out.mode) {
    case NoiseMode::kClean: out.mask = gt; break;
    case NoiseMode::kDilate: out.mask = dilate(gt, cfg.radius); break;
    case NoiseMode::kErode: out.mask = erode(gt, cfg.radius); break;
    case NoiseMode::kDistractor: {
      out.mask = gt;
      const double r = static_cast<double>(cfg.radius);
      const Mask window = ccm::rasterize(Box{prompt.x - r, prompt.y - r, prompt.w + 2 * r, prompt.h + 2 * r},
                                         scene.height, scene.width);
      // The neighbour contributing the most pixels inside the widened prompt.
      std::size_t best_n = 0;
      std::optional<std::size_t> neighbour;
      for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        if (k == *out.object) continue;
        std::size_t n = 0;
        const auto& bits = scene.objects[k].gt_mask.bits;
        for (std::size_t p = 0; p < bits.size(); ++p) n += (bits[p] && window.bits[p]) ? 1 : 0;
        if (n > best_n) {
          best_n = n;
          neighbour = k;
        }
      }
      if (neighbour) {
        const auto& bits = scene.objects[*neighbour].gt_mask.bits;
        for (std::size_t p = 0; p < bits.size(); ++p) {
          if (bits[p] && window.bits[p]) out.mask.bits[p] = 1;
        }
      }
      break;
    }
  }
  return out;
}

void init_decoder_params(ParamStore& store, const DecoderConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.unified_dim, a = cfg.branch_dim;
  store.add("wres.text.w", nc::init_normal(Shape{d, cfg.text_dim}, 1.0 / std::sqrt(static_cast<double>(cfg.text_dim)), rng));
  store.add("wres.text.b", Tensor(Shape{d}, Real{1}));
  for (std::size_t rate : kAsppDilations) {
    const std::string p = "wres.aspp.d" + std::to_string(rate);
    store.add(p + ".w", nc::init_normal(Shape{a, d, 3, 3}, 1.0 / std::sqrt(9.0 * static_cast<double>(d)), rng));
    store.add(p + ".b", Tensor(Shape{a}));
  }
  store.add("wres.mix.w", nc::init_normal(Shape{1, 3 * a, 1, 1}, 1.0 / std::sqrt(3.0 * static_cast<double>(a)), rng));
  store.add("wres.mix.b", Tensor(Shape{1}));
}

Var aspp_decode(Binder& bind, Var feature, Var text, std::size_t out_h, std::size_t out_w) {
  auto& g = bind.graph();
  const auto& fs = g.shape(feature);
  if (fs.size() != 3) throw ShapeError("aspp_decode: feature must be (D, h, w), got " + nc::shape_str(fs));
  const auto& ts = g.shape(text);
  if (ts.size() != 1) throw ShapeError("aspp_decode: text must be a vector, got " + nc::shape_str(ts));
  Var gate = g.add(g.reshape(g.matmul(bind("wres.text.w"), g.reshape(text, Shape{ts[0], 1})), Shape{fs[0]}),
                   bind("wres.text.b"));
  Var fused = g.mul(feature, g.reshape(gate, Shape{fs[0], 1, 1}));
  std::vector<Var> branches;
  for (std::size_t rate : kAsppDilations) {
    const std::string p = "wres.aspp.d" + std::to_string(rate);
    branches.push_back(g.conv2d(fused, bind(p + ".w"), bind(p + ".b"), {.stride = 1, .dilation = rate}));
  }
  Var logits = g.conv2d(g.concat(branches, 0), bind("wres.mix.w"), bind("wres.mix.b"));
  Var up = g.resize(logits, out_h, out_w);
  return g.reshape(g.sigmoid(up), Shape{out_h, out_w});
}

Var res_loss(Graph& g, Var probs, const Mask& target) {
  const auto& s = g.shape(probs);
  if (s.size() != 2 || s[0] != target.height || s[1] != target.width) {
    throw ShapeError("res_loss: prediction " + nc::shape_str(s) + " vs mask (" + std::to_string(target.height) + ", " +
                     std::to_string(target.width) + ")");
  }
  Tensor m(Shape{target.height, target.width});
  Tensor inv(Shape{target.height, target.width});
  for (std::size_t k = 0; k < target.bits.size(); ++k) {
    m[k] = target.bits[k] ? 1 : 0;
    inv[k] = 1 - m[k];
  }
  Var o = g.clamp(probs, 1e-7, 1 - 1e-7);
  Var ll = g.add(g.mul(g.constant(std::move(m)), g.log(o)),
                 g.mul(g.constant(std::move(inv)), g.log(g.add_scalar(g.scale(o, -1), 1))));
  return g.scale(g.mean_all(ll), -1);
}

void write_pgm(const Mask& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << m.width << ' ' << m.height << "\n255\n";
  for (auto b : m.bits) out.put(static_cast<char>(b ? 255 : 0));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace weakmcn::wres
