#pragma once

#include "mapsam/tensor.hpp"

namespace mapsam {

struct LossConfig {
  double lambda = 0.2;       // focal/dice balance for both heads
  double focal_gamma = 2.0;
  double focal_alpha = 0.5;  // 0.5 = unweighted
  double dice_eps = 1.0;
};

struct LossReport {
  double coarse = 0.0;
  double final_ = 0.0;
  double overall = 0.0;  // coarse + final_, exactly
  double coarse_focal = 0.0, coarse_dice = 0.0;
  double final_focal = 0.0, final_dice = 0.0;
  TensorPtr total;  // scalar tensor for backward()
};

// probs are clamped to [1e-7, 1-1e-7] inside; gt entries are 0/1.
// mean over pixels of -alpha_t * (1 - p_t)^gamma * log(p_t)
TensorPtr focal_loss(const TensorPtr& probs, const TensorPtr& gt, double gamma,
                     double alpha);

// soft dice: 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)
TensorPtr dice_loss(const TensorPtr& probs, const TensorPtr& gt, double eps);

// lambda * focal + (1 - lambda) * dice on sigmoid probabilities of the
// given logits. Coarse logits are bilinearly upscaled to the gt resolution
// first, so both heads are supervised at full resolution.
LossReport composite_loss(const TensorPtr& coarse_logits_grid,
                          const TensorPtr& final_logits_grid,
                          const TensorPtr& gt_full, int gt_h, int gt_w,
                          const LossConfig& cfg);

struct Schedule {
  double base_lr = 0.005;
  std::int64_t warmup_iters = 250;
  std::int64_t max_iters = 1000;
};

// linear warmup to base_lr at t = warmup_iters, then
// base_lr * (1 - (t - warmup)/max)^0.9, clamped at zero.
double lr_at(const Schedule& s, std::int64_t t);

}  // namespace mapsam
