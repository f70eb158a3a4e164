#include "weakmcn/wrec/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "weakmcn/error.hpp"
#include "weakmcn/featbank/fpn.hpp"
#include "weakmcn/numcore/optim.hpp"

namespace weakmcn::wrec {

using nc::Shape;

GridGeometry coarse_grid(std::size_t image_h, std::size_t image_w) {
  featbank::check_encoder_extent(image_h, image_w);
  GridGeometry g;
  g.rows = image_h / 32;
  g.cols = image_w / 32;
  g.stride = 32.0;
  g.image_h = image_h;
  g.image_w = image_w;
  return g;
}

ParamStore init_detector_params(const DetectorConfig& cfg) {
  ParamStore store;
  Rng rng(mix_seed(cfg.seed, 0xde7ec70a));
  featbank::init_dark_params(store, cfg.dark, rng);
  featbank::init_fpn_params(store, cfg.dark, cfg.unified_dim, rng);
  store.add("det.hidden.w", nc::init_he(Shape{cfg.head_hidden, cfg.unified_dim, 3, 3}, rng));
  store.add("det.hidden.b", Tensor(Shape{cfg.head_hidden}));
  store.add("det.out.w", nc::init_normal(Shape{5, cfg.head_hidden, 1, 1}, 0.01, rng));
  // Objectness starts pessimistic: most cells hold no centre.
  store.add("det.out.b", Tensor(Shape{5}, std::vector<Real>{-1.0, 0, 0, 0, 0}));
  return store;
}

Var detector_head(Binder& bind, Var coarse) {
  auto& g = bind.graph();
  Var h = g.relu(g.conv2d(coarse, bind("det.hidden.w"), bind("det.hidden.b")));
  return g.conv2d(h, bind("det.out.w"), bind("det.out.b"));
}

DetectorTargets detector_targets(const scenes::Scene& scene, const GridGeometry& grid) {
  const std::size_t cells = grid.rows * grid.cols;
  DetectorTargets t{Tensor(Shape{grid.rows, grid.cols}), Tensor(Shape{4, grid.rows, grid.cols}),
                    Tensor(Shape{grid.rows, grid.cols})};
  std::vector<double> owner_area(cells, -1.0);
  const double prior = grid.prior();
  for (const auto& o : scene.objects) {
    const Box& b = o.gt_box;
    const std::size_t cell = cell_of(b.center_x(), b.center_y(), grid);
    if (b.area() <= owner_area[cell]) continue;
    owner_area[cell] = b.area();
    const double fx = b.center_x() / grid.stride - static_cast<double>(cell % grid.cols);
    const double fy = b.center_y() / grid.stride - static_cast<double>(cell / grid.cols);
    t.objectness[cell] = 1;
    t.positive[cell] = 1;
    t.offsets[0 * cells + cell] = static_cast<Real>(std::clamp(fx, 0.0, 1.0));
    t.offsets[1 * cells + cell] = static_cast<Real>(std::clamp(fy, 0.0, 1.0));
    t.offsets[2 * cells + cell] = static_cast<Real>(std::log(b.w / prior));
    t.offsets[3 * cells + cell] = static_cast<Real>(std::log(b.h / prior));
  }
  return t;
}

Var detector_loss(Graph& g, Var head_out, const DetectorTargets& targets) {
  const auto& s = g.shape(head_out);
  if (s.size() != 3 || s[0] != 5 || targets.objectness.shape() != Shape{s[1], s[2]}) {
    throw ShapeError("detector_loss: head output " + nc::shape_str(s) + " vs targets " +
                     nc::shape_str(targets.objectness.shape()));
  }
  const std::size_t cells = s[1] * s[2];
  Var flat = g.reshape(head_out, Shape{5, cells});

  Var obj = g.reshape(g.index_select(flat, {0}), Shape{cells});
  Var p = g.clamp(g.sigmoid(obj), 1e-7, 1 - 1e-7);
  Var t = g.constant(Tensor(Shape{cells}, std::vector<Real>(targets.objectness.data().begin(),
                                                              targets.objectness.data().end())));
  Var one_minus_t = g.constant(Tensor(Shape{cells}, std::vector<Real>(cells, 1.0)));
  one_minus_t = g.sub(one_minus_t, t);
  Var ll = g.add(g.mul(t, g.log(p)), g.mul(one_minus_t, g.log(g.add_scalar(g.scale(p, -1), 1))));
  Var loss = g.scale(g.mean_all(ll), -1);

  const auto pos = targets.positive.data();
  const Real npos = std::accumulate(pos.begin(), pos.end(), Real{0});
  if (npos > 0) {
    Var xy = g.sigmoid(g.index_select(flat, {1, 2}));
    Var wh = g.index_select(flat, {3, 4});
    Var pred = g.concat({xy, wh}, 0);  // (4, cells)
    Tensor target(Shape{4, cells}, std::vector<Real>(targets.offsets.data().begin(), targets.offsets.data().end()));
    Var d = g.sub(pred, g.constant(std::move(target)));
    Var c = g.clamp(d, -1, 1);
    Var huber = g.sub(g.mul(c, d), g.scale(g.mul(c, c), 0.5));
    Var mask = g.constant(Tensor(Shape{1, cells}, std::vector<Real>(pos.begin(), pos.end())));
    loss = g.add(loss, g.scale(g.sum_all(g.mul(huber, mask)), 1.0 / npos));
  }
  return loss;
}

ParamStore pretrain_detector(const std::vector<scenes::Pair>& data, const DetectorConfig& cfg,
                             const std::function<void(const PretrainLog&)>& on_epoch) {
  ParamStore params = init_detector_params(cfg);
  if (cfg.epochs == 0 || data.empty()) return params;
  if (cfg.batch_size == 0) throw ConfigError("pretrain_detector: batch size must be positive");

  nc::Adam adam;
  Rng rng(mix_seed(cfg.seed, 0x5a11e));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total = static_cast<double>(per_epoch * cfg.epochs);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Graph g;
      Binder bind(g, params, [](std::string_view) { return true; });
      Var batch_loss{};
      for (std::size_t k = start; k < end; ++k) {
        const auto& scene = data[order[k]].scene;
        const GridGeometry grid = coarse_grid(scene.height, scene.width);
        auto levels = featbank::encode_dark(bind, g.constant(featbank::image_tensor(scene)));
        auto fused = featbank::fpn_fuse(bind, levels);
        Var l = detector_loss(g, detector_head(bind, fused[2]), detector_targets(scene, grid));
        batch_loss = k == start ? l : g.add(batch_loss, l);
      }
      batch_loss = g.scale(batch_loss, 1.0 / static_cast<double>(end - start));
      const double value = static_cast<double>(g.value(batch_loss).item());
      if (!std::isfinite(value)) {
        throw DivergenceError("detector pretraining diverged at step " + std::to_string(step) + " (seed " +
                              std::to_string(cfg.seed) + ")");
      }
      epoch_loss += value * static_cast<double>(end - start);
      auto grads = g.backward(batch_loss);
      std::map<std::string, Tensor, std::less<>> named;
      for (const auto& [name, v] : bind.trainable()) named.emplace(name, grads[v]);
      adam.step(params, named, nc::cosine_lr(cfg.lr, static_cast<double>(step), total));
      ++step;
    }
    if (on_epoch) on_epoch({epoch, epoch_loss / static_cast<double>(data.size())});
  }
  return params;
}

}  // namespace weakmcn::wrec
