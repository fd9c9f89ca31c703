#include "mapsam/optim.hpp"

#include <cmath>

namespace mapsam {

void AdamW::step(ParamStore& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& p = params.at(i);
    if (!p->requires_grad) continue;
    if (!p->has_grad())
      throw ShapeError("AdamW: trainable parameter '" + params.name_at(i) +
                       "' has no gradient");
    auto& slot = slots_[params.name_at(i)];
    if (slot.m.empty()) {
      slot.m.assign(p->data.size(), 0.0);
      slot.v.assign(p->data.size(), 0.0);
    }
    for (std::size_t j = 0; j < p->data.size(); ++j) {
      const double g = p->grad[j];
      slot.m[j] = beta1 * slot.m[j] + (1.0 - beta1) * g;
      slot.v[j] = beta2 * slot.v[j] + (1.0 - beta2) * g * g;
      const double mhat = slot.m[j] / bc1;
      const double vhat = slot.v[j] / bc2;
      p->data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      p->data[j] -= lr * weight_decay * p->data[j];
    }
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& p = params.at(i);
    if (!p->requires_grad || !p->has_grad()) continue;
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < params.count(); ++i) {
      const auto& p = params.at(i);
      if (!p->requires_grad || !p->has_grad()) continue;
      for (double& g : p->grad) g *= s;
    }
  }
  return norm;
}

}  // namespace mapsam
