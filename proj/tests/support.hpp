#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mapsam/rng.hpp"
#include "mapsam/tensor.hpp"

namespace testsupport {

using mapsam::Tensor;
using mapsam::TensorPtr;

inline TensorPtr random_tensor(std::vector<int> shape, mapsam::Rng& rng,
                               bool requires_grad = true, double lo = -2.0,
                               double hi = 2.0) {
  auto t = Tensor::create(std::move(shape), requires_grad);
  for (auto& v : t->data) v = rng.uniform(lo, hi);
  return t;
}

// Central finite-difference check of d(scalar fn)/d(inputs) against the tape.
// fn must rebuild the graph from the given leaves on every call.
struct GradCheckResult {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline GradCheckResult check_gradients(
    const std::function<TensorPtr()>& fn, const std::vector<TensorPtr>& leaves,
    double h = 1e-3) {
  mapsam::Tape::current().clear();
  auto loss = fn();
  for (const auto& leaf : leaves) leaf->zero_grad();
  mapsam::backward(loss);

  GradCheckResult res;
  for (const auto& leaf : leaves) {
    leaf->ensure_grad();
    for (std::size_t i = 0; i < leaf->data.size(); ++i) {
      const double saved = leaf->data[i];
      double fplus, fminus;
      {
        mapsam::NoGradGuard ng;
        leaf->data[i] = saved + h;
        fplus = fn()->value();
        leaf->data[i] = saved - h;
        fminus = fn()->value();
        leaf->data[i] = saved;
      }
      const double numeric = (fplus - fminus) / (2.0 * h);
      const double analytic = leaf->grad[i];
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
      const double rel = std::fabs(numeric - analytic) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace testsupport
