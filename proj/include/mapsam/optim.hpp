#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapsam/params.hpp"

namespace mapsam {

/// AdamW: adaptive moments with bias correction plus decoupled weight decay.
/// Frozen parameters (requires_grad == false) are never touched.
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  // One update over every trainable parameter in the store. Throws
  // ShapeError when a trainable parameter has no gradient buffer.
  void step(ParamStore& params, double lr);

  std::int64_t steps_taken() const { return t_; }

  // flat state access for checkpointing
  struct Slot {
    std::vector<double> m, v;
  };
  std::unordered_map<std::string, Slot>& slots() { return slots_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::unordered_map<std::string, Slot> slots_;
  std::int64_t t_ = 0;
};

// Global L2 norm of all trainable gradients; scales them down to max_norm
// when exceeded. Returns the pre-clip norm.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace mapsam
