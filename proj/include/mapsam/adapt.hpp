#pragma once

#include <string>

#include "mapsam/params.hpp"
#include "mapsam/tensor.hpp"

namespace mapsam {

enum class AdaptMode { Frozen, Lora, Dora };

const char* adapt_mode_name(AdaptMode m);
AdaptMode adapt_mode_from_name(const std::string& s);

// W0 + scale * B*A
TensorPtr lora_merged(const TensorPtr& w0, const TensorPtr& a,
                      const TensorPtr& b, double scale = 1.0);

// m * (W0 + scale * B*A) / ||W0 + scale * B*A||_c, column-wise.
// Throws SingularityError when a column of the update has zero norm.
TensorPtr dora_merged(const TensorPtr& w0, const TensorPtr& a,
                      const TensorPtr& b, const TensorPtr& m, double scale = 1.0);

/// A frozen base weight with an optional low-rank adapter. The merged weight
/// is recomputed on every forward so gradients flow through the
/// decomposition; the base never trains.
class AdaptedLinear {
 public:
  AdaptMode mode = AdaptMode::Frozen;
  int rank = 0;
  double lora_alpha = 0.0;
  TensorPtr w0;         // [d x k], frozen
  TensorPtr a, b, m;    // [r x k], [d x r], [1 x k]

  AdaptedLinear() = default;
  explicit AdaptedLinear(TensorPtr base) : w0(std::move(base)) {}

  int out_dim() const { return w0->shape[0]; }
  int in_dim() const { return w0->shape[1]; }
  double scale() const { return rank > 0 ? lora_alpha / rank : 1.0; }

  // A gets a small Gaussian (sigma 0.01), B starts at zero, and in dora mode
  // m starts at the column norms of W0, so step 0 reproduces the base layer.
  void attach_adapter(AdaptMode new_mode, int r, double alpha, Rng& rng,
                      ParamStore& params, const std::string& prefix);

  // merged weight for the current mode (w0 itself when frozen)
  TensorPtr merged_weight() const;

  // x: [n x k] -> [n x d]
  TensorPtr forward(const TensorPtr& x) const;
};

}  // namespace mapsam
