#include "mapsam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mapsam {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

bool any_requires_grad(std::initializer_list<const TensorPtr*> ts) {
  for (const TensorPtr* t : ts)
    if (*t && (*t)->requires_grad) return true;
  return false;
}

void check_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch: " +
                     shape_str(a->shape) + " vs " + shape_str(b->shape));
}

// Records the node when recording is on and grads can flow.
template <typename F>
void record(bool needs_grad, F&& fn) {
  if (needs_grad && Tape::current().recording())
    Tape::current().push(std::forward<F>(fn));
}

bool out_requires(std::initializer_list<const TensorPtr*> ins) {
  return any_requires_grad(ins) && Tape::current().recording();
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

TensorPtr Tensor::create(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<std::size_t>(shape_product(t->shape)), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad) {
  if (shape_product(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("from_data: " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  auto t = create(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

int Tensor::rows() const {
  if (shape.size() != 2) throw ShapeError("rows(): tensor is not 2-D: " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (shape.size() != 2) throw ShapeError("cols(): tensor is not 2-D: " + shape_str(shape));
  return shape[1];
}

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value(): tensor is not scalar: " + shape_str(shape));
  return data[0];
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::run_backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

NoGradGuard::NoGradGuard() { ++Tape::current().depth_off_; }
NoGradGuard::~NoGradGuard() { --Tape::current().depth_off_; }

void backward(const TensorPtr& loss) {
  if (loss->size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss->shape));
  if (Tape::current().size() == 0 && !loss->requires_grad)
    throw ShapeError("backward: empty tape and loss without grad");
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  Tape::current().run_backward();
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

// out = f(a) elementwise with df = dfun(a_i, out_i).
TensorPtr unary_op(const char* /*name*/, const TensorPtr& a,
                   const std::function<double(double)>& f,
                   const std::function<double(double, double)>& dfun) {
  auto out = Tensor::create(a->shape, out_requires({&a}));
  const std::size_t n = a->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = f(a->data[i]);
  record(out->requires_grad, [a, out, dfun]() {
    if (out->grad.empty()) return;
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < a->data.size(); ++i)
      a->grad[i] += out->grad[i] * dfun(a->data[i], out->data[i]);
  });
  return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("add", a, b);
  auto out = Tensor::create(a->shape, out_requires({&a, &b}));
  for (std::size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = a->data[i] + b->data[i];
  record(out->requires_grad, [a, b, out]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i];
    }
  });
  return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("sub", a, b);
  auto out = Tensor::create(a->shape, out_requires({&a, &b}));
  for (std::size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = a->data[i] - b->data[i];
  record(out->requires_grad, [a, b, out]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] -= out->grad[i];
    }
  });
  return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("mul", a, b);
  auto out = Tensor::create(a->shape, out_requires({&a, &b}));
  for (std::size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = a->data[i] * b->data[i];
  record(out->requires_grad, [a, b, out]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->data.size(); ++i)
        a->grad[i] += out->grad[i] * b->data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->data.size(); ++i)
        b->grad[i] += out->grad[i] * a->data[i];
    }
  });
  return out;
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("div", a, b);
  auto out = Tensor::create(a->shape, out_requires({&a, &b}));
  for (std::size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = a->data[i] / b->data[i];
  record(out->requires_grad, [a, b, out]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->data.size(); ++i)
        a->grad[i] += out->grad[i] / b->data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->data.size(); ++i)
        b->grad[i] -= out->grad[i] * a->data[i] / (b->data[i] * b->data[i]);
    }
  });
  return out;
}

TensorPtr neg(const TensorPtr& a) {
  return unary_op("neg", a, [](double x) { return -x; },
                  [](double, double) { return -1.0; });
}

TensorPtr scale(const TensorPtr& a, double s) {
  return unary_op("scale", a, [s](double x) { return x * s; },
                  [s](double, double) { return s; });
}

TensorPtr add_scalar(const TensorPtr& a, double s) {
  return unary_op("add_scalar", a, [s](double x) { return x + s; },
                  [](double, double) { return 1.0; });
}

TensorPtr sigmoid(const TensorPtr& a) {
  return unary_op("sigmoid", a,
                  [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

TensorPtr gelu(const TensorPtr& a) {
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
  return unary_op(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

TensorPtr ln(const TensorPtr& a) {
  return unary_op("ln", a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

TensorPtr pow_const(const TensorPtr& a, double p) {
  return unary_op("pow_const", a, [p](double x) { return std::pow(x, p); },
                  [p](double x, double) {
                    if (p == 0.0) return 0.0;
                    return p * std::pow(x, p - 1.0);
                  });
}

TensorPtr clamp(const TensorPtr& a, double lo, double hi) {
  return unary_op("clamp", a,
                  [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
                  [lo, hi](double x, double) {
                    return (x > lo && x < hi) ? 1.0 : 0.0;
                  });
}

TensorPtr reciprocal(const TensorPtr& a) {
  return unary_op("reciprocal", a, [](double x) { return 1.0 / x; },
                  [](double x, double) { return -1.0 / (x * x); });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

namespace {

// c[m x n] += a[m x k] * b[k x n]
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void mm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

void check_2d(const char* op, const TensorPtr& t) {
  if (t->shape.size() != 2)
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " +
                     shape_str(t->shape));
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  check_2d("matmul", a);
  check_2d("matmul", b);
  const int m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a->shape) +
                     " vs " + shape_str(b->shape));
  auto out = Tensor::create({m, n}, out_requires({&a, &b}));
  mm_acc(a->data.data(), b->data.data(), out->data.data(), m, k, n);
  record(out->requires_grad, [a, b, out, m, k, n]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {  // dA = dC * B^T
      a->ensure_grad();
      mm_nt_acc(out->grad.data(), b->data.data(), a->grad.data(), m, n, k);
    }
    if (b->requires_grad) {  // dB = A^T * dC
      b->ensure_grad();
      mm_tn_acc(a->data.data(), out->grad.data(), b->grad.data(), m, k, n);
    }
  });
  return out;
}

TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
  check_2d("matmul_nt", a);
  check_2d("matmul_nt", b);
  const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
  if (k != b->shape[1])
    throw ShapeError("matmul_nt: inner dimensions disagree: " +
                     shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = Tensor::create({m, n}, out_requires({&a, &b}));
  mm_nt_acc(a->data.data(), b->data.data(), out->data.data(), m, k, n);
  record(out->requires_grad, [a, b, out, m, k, n]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {  // dA = dC * B
      a->ensure_grad();
      mm_acc(out->grad.data(), b->data.data(), a->grad.data(), m, n, k);
    }
    if (b->requires_grad) {  // dB = dC^T * A
      b->ensure_grad();
      mm_tn_acc(out->grad.data(), a->data.data(), b->grad.data(), m, n, k);
    }
  });
  return out;
}

TensorPtr column_norms(const TensorPtr& w) {
  check_2d("column_norms", w);
  const int d = w->shape[0], k = w->shape[1];
  auto out = Tensor::create({1, k}, out_requires({&w}));
  for (int j = 0; j < k; ++j) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
      double v = w->data[static_cast<std::size_t>(i) * k + j];
      acc += v * v;
    }
    out->data[j] = std::sqrt(acc);
  }
  record(out->requires_grad, [w, out, d, k]() {
    if (out->grad.empty()) return;
    if (!w->requires_grad) return;
    w->ensure_grad();
    for (int j = 0; j < k; ++j) {
      const double nj = out->data[j];
      if (nj == 0.0) continue;
      const double gj = out->grad[j] / nj;
      for (int i = 0; i < d; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i) * k + j;
        w->grad[idx] += gj * w->data[idx];
      }
    }
  });
  return out;
}

TensorPtr col_scale(const TensorPtr& m, const TensorPtr& v) {
  check_2d("col_scale", m);
  if (v->shape.size() != 2 || v->shape[0] != 1 || v->shape[1] != m->shape[1])
    throw ShapeError("col_scale: scale vector " + shape_str(v->shape) +
                     " does not match columns of " + shape_str(m->shape));
  const int d = m->shape[0], k = m->shape[1];
  auto out = Tensor::create({d, k}, out_requires({&m, &v}));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j)
      out->data[static_cast<std::size_t>(i) * k + j] =
          m->data[static_cast<std::size_t>(i) * k + j] * v->data[j];
  record(out->requires_grad, [m, v, out, d, k]() {
    if (out->grad.empty()) return;
    if (m->requires_grad) {
      m->ensure_grad();
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * k + j;
          m->grad[idx] += out->grad[idx] * v->data[j];
        }
    }
    if (v->requires_grad) {
      v->ensure_grad();
      for (int j = 0; j < k; ++j) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
          const std::size_t idx = static_cast<std::size_t>(i) * k + j;
          acc += out->grad[idx] * m->data[idx];
        }
        v->grad[j] += acc;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

TensorPtr reshape(const TensorPtr& a, std::vector<int> new_shape) {
  if (shape_product(new_shape) != a->size())
    throw ShapeError("reshape: " + shape_str(a->shape) + " -> " +
                     shape_str(new_shape) + " changes element count");
  auto out = Tensor::from_data(std::move(new_shape), a->data, out_requires({&a}));
  record(out->requires_grad, [a, out]() {
    if (out->grad.empty()) return;
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
  });
  return out;
}

TensorPtr add_row(const TensorPtr& a, const TensorPtr& row) {
  check_2d("add_row", a);
  if (row->shape.size() != 2 || row->shape[0] != 1 || row->shape[1] != a->shape[1])
    throw ShapeError("add_row: row " + shape_str(row->shape) +
                     " does not broadcast over " + shape_str(a->shape));
  const int m = a->shape[0], n = a->shape[1];
  auto out = Tensor::create({m, n}, out_requires({&a, &row}));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out->data[static_cast<std::size_t>(i) * n + j] =
          a->data[static_cast<std::size_t>(i) * n + j] + row->data[j];
  record(out->requires_grad, [a, row, out, m, n]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
    }
    if (row->requires_grad) {
      row->ensure_grad();
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += out->grad[static_cast<std::size_t>(i) * n + j];
        row->grad[j] += acc;
      }
    }
  });
  return out;
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty list");
  const int n = parts[0]->cols();
  int total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    check_2d("concat_rows", p);
    if (p->shape[1] != n)
      throw ShapeError("concat_rows: column mismatch: " + shape_str(parts[0]->shape) +
                       " vs " + shape_str(p->shape));
    total += p->shape[0];
    needs = needs || p->requires_grad;
  }
  auto out = Tensor::create({total, n}, needs && Tape::current().recording());
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
    off += p->data.size();
  }
  record(out->requires_grad, [parts, out]() {
    if (out->grad.empty()) return;
    std::size_t off2 = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->data.size(); ++i)
          p->grad[i] += out->grad[off2 + i];
      }
      off2 += p->data.size();
    }
  });
  return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty list");
  const int m = parts[0]->rows();
  int total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    check_2d("concat_cols", p);
    if (p->shape[0] != m)
      throw ShapeError("concat_cols: row mismatch: " + shape_str(parts[0]->shape) +
                       " vs " + shape_str(p->shape));
    total += p->shape[1];
    needs = needs || p->requires_grad;
  }
  auto out = Tensor::create({m, total}, needs && Tape::current().recording());
  int coff = 0;
  for (const auto& p : parts) {
    const int pc = p->shape[1];
    for (int i = 0; i < m; ++i)
      std::copy(p->data.begin() + static_cast<std::size_t>(i) * pc,
                p->data.begin() + static_cast<std::size_t>(i + 1) * pc,
                out->data.begin() + static_cast<std::size_t>(i) * total + coff);
    coff += pc;
  }
  record(out->requires_grad, [parts, out, m, total]() {
    if (out->grad.empty()) return;
    int coff2 = 0;
    for (const auto& p : parts) {
      const int pc = p->shape[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < pc; ++j)
            p->grad[static_cast<std::size_t>(i) * pc + j] +=
                out->grad[static_cast<std::size_t>(i) * total + coff2 + j];
      }
      coff2 += pc;
    }
  });
  return out;
}

TensorPtr slice_rows(const TensorPtr& a, int r0, int r1) {
  check_2d("slice_rows", a);
  const int m = a->shape[0], n = a->shape[1];
  if (r0 < 0 || r1 > m || r0 >= r1)
    throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") for " + shape_str(a->shape));
  auto out = Tensor::create({r1 - r0, n}, out_requires({&a}));
  std::copy(a->data.begin() + static_cast<std::size_t>(r0) * n,
            a->data.begin() + static_cast<std::size_t>(r1) * n, out->data.begin());
  record(out->requires_grad, [a, out, r0, n]() {
    if (out->grad.empty()) return;
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < out->data.size(); ++i)
      a->grad[static_cast<std::size_t>(r0) * n + i] += out->grad[i];
  });
  return out;
}

TensorPtr slice_cols(const TensorPtr& a, int c0, int c1) {
  check_2d("slice_cols", a);
  const int m = a->shape[0], n = a->shape[1];
  if (c0 < 0 || c1 > n || c0 >= c1)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") for " + shape_str(a->shape));
  const int w = c1 - c0;
  auto out = Tensor::create({m, w}, out_requires({&a}));
  for (int i = 0; i < m; ++i)
    std::copy(a->data.begin() + static_cast<std::size_t>(i) * n + c0,
              a->data.begin() + static_cast<std::size_t>(i) * n + c1,
              out->data.begin() + static_cast<std::size_t>(i) * w);
  record(out->requires_grad, [a, out, c0, n, m, w]() {
    if (out->grad.empty()) return;
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        a->grad[static_cast<std::size_t>(i) * n + c0 + j] +=
            out->grad[static_cast<std::size_t>(i) * w + j];
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

TensorPtr sum_all(const TensorPtr& a) {
  auto out = Tensor::create({1}, out_requires({&a}));
  double acc = 0.0;
  for (double v : a->data) acc += v;
  out->data[0] = acc;
  record(out->requires_grad, [a, out]() {
    if (out->grad.empty()) return;
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = out->grad[0];
    for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += g;
  });
  return out;
}

TensorPtr mean_all(const TensorPtr& a) {
  const double inv = 1.0 / static_cast<double>(a->size());
  auto out = Tensor::create({1}, out_requires({&a}));
  double acc = 0.0;
  for (double v : a->data) acc += v;
  out->data[0] = acc * inv;
  record(out->requires_grad, [a, out, inv]() {
    if (out->grad.empty()) return;
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = out->grad[0] * inv;
    for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += g;
  });
  return out;
}

// ---------------------------------------------------------------------------
// nn primitives
// ---------------------------------------------------------------------------

TensorPtr softmax(const TensorPtr& a, int axis) {
  const int rank = static_cast<int>(a->shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(a->shape));
  for (double v : a->data)
    if (std::isnan(v)) throw NumericError("softmax: NaN input");

  const int len = a->shape[axis];
  std::int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= a->shape[i];
  for (int i = 0; i < axis; ++i) outer *= a->shape[i];

  auto out = Tensor::create(a->shape, out_requires({&a}));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      double mx = neg_inf;
      for (int i = 0; i < len; ++i)
        mx = std::max(mx, a->data[base + i * inner]);
      if (mx == neg_inf) {
        // fully masked line: uniform fallback
        const double u = 1.0 / static_cast<double>(len);
        for (int i = 0; i < len; ++i) out->data[base + i * inner] = u;
        continue;
      }
      double sum = 0.0;
      for (int i = 0; i < len; ++i) {
        const double x = a->data[base + i * inner];
        const double e = (x == neg_inf) ? 0.0 : std::exp(x - mx);
        out->data[base + i * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int i = 0; i < len; ++i) out->data[base + i * inner] *= inv;
    }
  }
  record(out->requires_grad, [a, out, len, inner, outer]() {
    if (out->grad.empty()) return;
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double neg_inf2 = -std::numeric_limits<double>::infinity();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * len * inner + in;
        bool all_masked = true;
        for (int i = 0; i < len; ++i)
          if (a->data[base + i * inner] != neg_inf2) { all_masked = false; break; }
        if (all_masked) continue;  // uniform fallback is constant
        double dot = 0.0;
        for (int i = 0; i < len; ++i)
          dot += out->grad[base + i * inner] * out->data[base + i * inner];
        for (int i = 0; i < len; ++i) {
          const std::int64_t idx = base + i * inner;
          a->grad[idx] += out->data[idx] * (out->grad[idx] - dot);
        }
      }
    }
  });
  return out;
}

TensorPtr layernorm(const TensorPtr& x, const TensorPtr& gain,
                    const TensorPtr& bias, double eps) {
  const int rank = static_cast<int>(x->shape.size());
  if (rank < 1) throw ShapeError("layernorm: rank-0 input");
  const int c = x->shape[rank - 1];
  if (gain->size() != c || bias->size() != c)
    throw ShapeError("layernorm: affine size mismatch: gain " +
                     shape_str(gain->shape) + ", bias " + shape_str(bias->shape) +
                     " for " + shape_str(x->shape));
  const std::int64_t positions = x->size() / c;
  auto out = Tensor::create(x->shape, out_requires({&x, &gain, &bias}));
  std::vector<double> mean_buf(positions), istd_buf(positions);
  for (std::int64_t p = 0; p < positions; ++p) {
    const double* xp = x->data.data() + p * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += xp[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = xp[j] - mu;
      var += d * d;
    }
    var /= c;
    const double istd = 1.0 / std::sqrt(var + eps);
    mean_buf[p] = mu;
    istd_buf[p] = istd;
    double* op = out->data.data() + p * c;
    for (int j = 0; j < c; ++j)
      op[j] = (xp[j] - mu) * istd * gain->data[j] + bias->data[j];
  }
  record(out->requires_grad,
         [x, gain, bias, out, c, positions, mean_buf = std::move(mean_buf),
          istd_buf = std::move(istd_buf)]() {
    if (out->grad.empty()) return;
    for (std::int64_t p = 0; p < positions; ++p) {
      const double* xp = x->data.data() + p * c;
      const double* go = out->grad.data() + p * c;
      const double mu = mean_buf[p], istd = istd_buf[p];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int j = 0; j < c; ++j) {
        const double xhat = (xp[j] - mu) * istd;
        const double dxhat = go[j] * gain->data[j];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
      }
      if (x->requires_grad) {
        x->ensure_grad();
        double* gx = x->grad.data() + p * c;
        for (int j = 0; j < c; ++j) {
          const double xhat = (xp[j] - mu) * istd;
          const double dxhat = go[j] * gain->data[j];
          gx[j] += istd * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / c);
        }
      }
      if (gain->requires_grad) {
        gain->ensure_grad();
        for (int j = 0; j < c; ++j)
          gain->grad[j] += go[j] * (xp[j] - mu) * istd;
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (int j = 0; j < c; ++j) bias->grad[j] += go[j];
      }
    }
  });
  return out;
}

TensorPtr conv1x1(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  if (x->shape.size() != 3)
    throw ShapeError("conv1x1: expected H x W x C input, got " + shape_str(x->shape));
  const int h = x->shape[0], wdt = x->shape[1], cin = x->shape[2];
  check_2d("conv1x1", w);
  if (w->shape[0] != cin)
    throw ShapeError("conv1x1: weight " + shape_str(w->shape) +
                     " does not match input channels of " + shape_str(x->shape));
  const int cout = w->shape[1];
  auto flat = reshape(x, {h * wdt, cin});
  auto y = matmul(flat, w);
  if (b) y = add_row(y, b);
  return reshape(y, {h, wdt, cout});
}

void bilinear_resize(const double* src, int h, int w, int c, int out_h,
                     int out_w, double* dst) {
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    double fy = (i + 0.5) * sy - 0.5;
    fy = std::min(static_cast<double>(h - 1), std::max(0.0, fy));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      double fx = (j + 0.5) * sx - 0.5;
      fx = std::min(static_cast<double>(w - 1), std::max(0.0, fx));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double v00 = src[(static_cast<std::size_t>(y0) * w + x0) * c + ch];
        const double v01 = src[(static_cast<std::size_t>(y0) * w + x1) * c + ch];
        const double v10 = src[(static_cast<std::size_t>(y1) * w + x0) * c + ch];
        const double v11 = src[(static_cast<std::size_t>(y1) * w + x1) * c + ch];
        dst[(static_cast<std::size_t>(i) * out_w + j) * c + ch] =
            v00 * (1.0 - wy) * (1.0 - wx) + v01 * (1.0 - wy) * wx +
            v10 * wy * (1.0 - wx) + v11 * wy * wx;
      }
    }
  }
}

TensorPtr interpolate_bilinear(const TensorPtr& x, int out_h, int out_w) {
  if (x->shape.size() != 3)
    throw ShapeError("interpolate_bilinear: expected H x W x C input, got " +
                     shape_str(x->shape));
  if (out_h <= 0 || out_w <= 0)
    throw ShapeError("interpolate_bilinear: target size " + std::to_string(out_h) +
                     " x " + std::to_string(out_w) + " must be positive");
  const int h = x->shape[0], w = x->shape[1], c = x->shape[2];
  auto out = Tensor::create({out_h, out_w, c}, out_requires({&x}));
  bilinear_resize(x->data.data(), h, w, c, out_h, out_w, out->data.data());
  record(out->requires_grad, [x, out, h, w, c, out_h, out_w]() {
    if (out->grad.empty()) return;
    if (!x->requires_grad) return;
    x->ensure_grad();
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int i = 0; i < out_h; ++i) {
      double fy = (i + 0.5) * sy - 0.5;
      fy = std::min(static_cast<double>(h - 1), std::max(0.0, fy));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int j = 0; j < out_w; ++j) {
        double fx = (j + 0.5) * sx - 0.5;
        fx = std::min(static_cast<double>(w - 1), std::max(0.0, fx));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        for (int ch = 0; ch < c; ++ch) {
          const double g = out->grad[(static_cast<std::size_t>(i) * out_w + j) * c + ch];
          x->grad[(static_cast<std::size_t>(y0) * w + x0) * c + ch] += g * (1.0 - wy) * (1.0 - wx);
          x->grad[(static_cast<std::size_t>(y0) * w + x1) * c + ch] += g * (1.0 - wy) * wx;
          x->grad[(static_cast<std::size_t>(y1) * w + x0) * c + ch] += g * wy * (1.0 - wx);
          x->grad[(static_cast<std::size_t>(y1) * w + x1) * c + ch] += g * wy * wx;
        }
      }
    }
  });
  return out;
}

}  // namespace mapsam
