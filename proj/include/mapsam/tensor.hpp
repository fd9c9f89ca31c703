#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapsam {

// Shape/contract violations (mismatched dimensions, non-scalar loss, ...).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// NaN inputs, NaN losses and similar numeric breakdowns.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate linear algebra (zero-norm column in a weight decomposition).
struct SingularityError : std::runtime_error {
  explicit SingularityError(const std::string& msg) : std::runtime_error(msg) {}
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major f64 tensor. Participates in the thread-local gradient
/// tape when requires_grad is set (directly or through an op input).
class Tensor : public std::enable_shared_from_this<Tensor> {
 public:
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;

  static TensorPtr create(std::vector<int> shape, bool requires_grad = false);
  static TensorPtr from_data(std::vector<int> shape, std::vector<double> data,
                             bool requires_grad = false);
  static TensorPtr full(std::vector<int> shape, double value,
                        bool requires_grad = false);
  static TensorPtr scalar(double value, bool requires_grad = false);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rows() const;
  int cols() const;
  double value() const;  // scalar tensors only

  void ensure_grad();
  void zero_grad() { if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0); }
  bool has_grad() const { return !grad.empty(); }
};

std::string shape_str(const std::vector<int>& shape);

/// Ordered record of executed ops; backward() walks it once in reverse.
/// One tape per thread, rebuilt every forward pass.
class Tape {
 public:
  static Tape& current();

  bool recording() const { return recording_ && depth_off_ == 0; }
  void push(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  void run_backward();

 private:
  friend class NoGradGuard;
  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
  int depth_off_ = 0;
};

/// Disables tape recording for its scope (inference / evaluation paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// ---- elementwise ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);
TensorPtr neg(const TensorPtr& a);
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr add_scalar(const TensorPtr& a, double s);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr gelu(const TensorPtr& a);
TensorPtr ln(const TensorPtr& a);
TensorPtr pow_const(const TensorPtr& a, double p);
TensorPtr clamp(const TensorPtr& a, double lo, double hi);
TensorPtr reciprocal(const TensorPtr& a);

// ---- linear algebra ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
// a[m x k] * b[n x k]^T -> [m x n]
TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);
// Euclidean norm of each column: [d x k] -> [1 x k]
TensorPtr column_norms(const TensorPtr& w);
// out[i][j] = m[i][j] * v[0][j]
TensorPtr col_scale(const TensorPtr& m, const TensorPtr& v);

// ---- structure ----
TensorPtr reshape(const TensorPtr& a, std::vector<int> new_shape);
TensorPtr add_row(const TensorPtr& a, const TensorPtr& row);  // broadcast 1xN
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(const TensorPtr& a, int r0, int r1);
TensorPtr slice_cols(const TensorPtr& a, int c0, int c1);

// ---- reductions ----
TensorPtr sum_all(const TensorPtr& a);
TensorPtr mean_all(const TensorPtr& a);

// ---- nn primitives ----
// Softmax over `axis`. -inf entries map to exactly 0; an all-(-inf) line
// falls back to the uniform distribution. NaN input raises NumericError.
TensorPtr softmax(const TensorPtr& a, int axis);
// Normalizes the last axis to zero mean / unit variance, then applies the
// 1xC affine (gain, bias).
TensorPtr layernorm(const TensorPtr& x, const TensorPtr& gain,
                    const TensorPtr& bias, double eps);
// x: [H x W x Cin], w: [Cin x Cout], optional b: [1 x Cout].
// Implemented as the (H*W) x Cin reshape followed by matmul, so the two
// routes agree bitwise.
TensorPtr conv1x1(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
// align_corners=false bilinear resampling of [h x w x C] to [out_h x out_w x C].
TensorPtr interpolate_bilinear(const TensorPtr& x, int out_h, int out_w);

// Raw (non-tape) bilinear helper shared with the point-selection path.
void bilinear_resize(const double* src, int h, int w, int c, int out_h,
                     int out_w, double* dst);

/// Seeds d(loss)/d(loss)=1, runs the tape in reverse, clears the tape.
void backward(const TensorPtr& loss);

}  // namespace mapsam
