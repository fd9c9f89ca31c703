#include "mapsam/adapt.hpp"

#include <cmath>

namespace mapsam {

const char* adapt_mode_name(AdaptMode m) {
  switch (m) {
    case AdaptMode::Frozen: return "frozen";
    case AdaptMode::Lora: return "lora";
    case AdaptMode::Dora: return "dora";
  }
  return "frozen";
}

AdaptMode adapt_mode_from_name(const std::string& s) {
  if (s == "frozen") return AdaptMode::Frozen;
  if (s == "lora") return AdaptMode::Lora;
  if (s == "dora") return AdaptMode::Dora;
  throw ShapeError("unknown adapter mode '" + s + "'");
}

TensorPtr lora_merged(const TensorPtr& w0, const TensorPtr& a,
                      const TensorPtr& b, double scale) {
  if (b->shape.size() != 2 || a->shape.size() != 2 || b->shape[1] != a->shape[0])
    throw ShapeError("lora_merged: rank mismatch: B " + shape_str(b->shape) +
                     " vs A " + shape_str(a->shape));
  auto delta = matmul(b, a);
  if (delta->shape != w0->shape)
    throw ShapeError("lora_merged: update " + shape_str(delta->shape) +
                     " does not match base " + shape_str(w0->shape));
  return scale == 1.0 ? add(w0, delta) : add(w0, mapsam::scale(delta, scale));
}

TensorPtr dora_merged(const TensorPtr& w0, const TensorPtr& a,
                      const TensorPtr& b, const TensorPtr& m, double scale) {
  auto v = lora_merged(w0, a, b, scale);
  auto norms = column_norms(v);
  for (double n : norms->data)
    if (n == 0.0)
      throw SingularityError("dora_merged: zero-norm column in W0 + BA");
  auto direction = col_scale(v, reciprocal(norms));
  return col_scale(direction, m);
}

void AdaptedLinear::attach_adapter(AdaptMode new_mode, int r, double alpha,
                                   Rng& rng, ParamStore& params,
                                   const std::string& prefix) {
  mode = new_mode;
  if (mode == AdaptMode::Frozen) return;
  rank = r;
  lora_alpha = alpha;
  a = params.add(prefix + ".a", init_normal({rank, in_dim()}, 0.01, rng));
  b = params.add(prefix + ".b", Tensor::create({out_dim(), rank}, true));
  if (mode == AdaptMode::Dora) {
    auto norms = Tensor::create({1, in_dim()}, true);
    const int d = out_dim(), k = in_dim();
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i) {
        const double v = w0->data[static_cast<std::size_t>(i) * k + j];
        acc += v * v;
      }
      norms->data[j] = std::sqrt(acc);
    }
    m = params.add(prefix + ".m", norms);
  }
}

TensorPtr AdaptedLinear::merged_weight() const {
  switch (mode) {
    case AdaptMode::Frozen: return w0;
    case AdaptMode::Lora: return lora_merged(w0, a, b, scale());
    case AdaptMode::Dora: return dora_merged(w0, a, b, m, scale());
  }
  return w0;
}

TensorPtr AdaptedLinear::forward(const TensorPtr& x) const {
  return matmul_nt(x, merged_weight());
}

}  // namespace mapsam
