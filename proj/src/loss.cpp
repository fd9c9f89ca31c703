#include "mapsam/loss.hpp"

#include <cmath>

namespace mapsam {

TensorPtr focal_loss(const TensorPtr& probs, const TensorPtr& gt, double gamma,
                     double alpha) {
  if (probs->shape != gt->shape)
    throw ShapeError("focal_loss: shape mismatch: " + shape_str(probs->shape) +
                     " vs " + shape_str(gt->shape));
  auto p = clamp(probs, 1e-7, 1.0 - 1e-7);
  // p_t = (2g - 1) * p + (1 - g); alpha_t = (2 alpha - 1) * g + (1 - alpha)
  const std::size_t n = gt->data.size();
  auto c1 = Tensor::create(gt->shape);
  auto c0 = Tensor::create(gt->shape);
  auto neg_alpha_t = Tensor::create(gt->shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gt->data[i];
    c1->data[i] = 2.0 * g - 1.0;
    c0->data[i] = 1.0 - g;
    neg_alpha_t->data[i] = -(alpha * g + (1.0 - alpha) * (1.0 - g));
  }
  auto pt = add(mul(p, c1), c0);
  auto one_minus_pt = sub(Tensor::full(gt->shape, 1.0), pt);
  auto weight = mul(neg_alpha_t, pow_const(one_minus_pt, gamma));
  return mean_all(mul(weight, ln(pt)));
}

TensorPtr dice_loss(const TensorPtr& probs, const TensorPtr& gt, double eps) {
  if (probs->shape != gt->shape)
    throw ShapeError("dice_loss: shape mismatch: " + shape_str(probs->shape) +
                     " vs " + shape_str(gt->shape));
  auto inter = sum_all(mul(probs, gt));
  auto denom = add(sum_all(probs), sum_all(gt));
  auto ratio = div(add_scalar(scale(inter, 2.0), eps), add_scalar(denom, eps));
  return sub(Tensor::scalar(1.0), ratio);
}

namespace {

TensorPtr head_loss(const TensorPtr& logits_grid, const TensorPtr& gt_full,
                    int gt_h, int gt_w, const LossConfig& cfg, double* focal_out,
                    double* dice_out) {
  TensorPtr logits = logits_grid;
  if (logits->shape[0] != gt_h || logits->shape[1] != gt_w)
    logits = interpolate_bilinear(logits, gt_h, gt_w);
  auto probs = sigmoid(reshape(logits, gt_full->shape));
  auto f = focal_loss(probs, gt_full, cfg.focal_gamma, cfg.focal_alpha);
  auto d = dice_loss(probs, gt_full, cfg.dice_eps);
  *focal_out = f->value();
  *dice_out = d->value();
  return add(scale(f, cfg.lambda), scale(d, 1.0 - cfg.lambda));
}

}  // namespace

LossReport composite_loss(const TensorPtr& coarse_logits_grid,
                          const TensorPtr& final_logits_grid,
                          const TensorPtr& gt_full, int gt_h, int gt_w,
                          const LossConfig& cfg) {
  LossReport r;
  auto lc = head_loss(coarse_logits_grid, gt_full, gt_h, gt_w, cfg,
                      &r.coarse_focal, &r.coarse_dice);
  auto lf = head_loss(final_logits_grid, gt_full, gt_h, gt_w, cfg,
                      &r.final_focal, &r.final_dice);
  r.total = add(lc, lf);
  r.coarse = lc->value();
  r.final_ = lf->value();
  r.overall = r.total->value();
  return r;
}

double lr_at(const Schedule& s, std::int64_t t) {
  if (t <= s.warmup_iters)
    return static_cast<double>(t) * s.base_lr / static_cast<double>(s.warmup_iters);
  const double base =
      1.0 - static_cast<double>(t - s.warmup_iters) / static_cast<double>(s.max_iters);
  if (base <= 0.0) return 0.0;
  return s.base_lr * std::pow(base, 0.9);
}

}  // namespace mapsam
