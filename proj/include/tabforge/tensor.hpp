#pragma once

// Reverse-mode automatic differentiation over dense row-major double tensors.
// Ops build a DAG of shared_ptr nodes; backward() runs a topological sweep and
// then releases the recorded graph. Values are checked for finiteness after
// every op and fail fast with the op name.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "tabforge/common.hpp"

namespace tabforge::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

class Node;
using Tensor = std::shared_ptr<Node>;

class Node {
 public:
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad{false};
  const char* op{"leaf"};
  std::vector<Tensor> parents;
  // Pulls this->grad into the parents' grad buffers.
  std::function<void(Node&)> backprop;

  bool is_scalar() const { return value.size() == 1; }
  double scalar() const { return value[0]; }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad, const char* op = "leaf") {
  if (numel(shape) != data.size())
    throw ShapeMismatchError(std::string(op) + ": shape " + shape_str(shape) + " vs data size " +
                             std::to_string(data.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->grad.assign(n->value.size(), 0.0);
  n->requires_grad = requires_grad;
  n->op = op;
  return n;
}

inline Tensor constant(Shape shape, std::vector<double> data) {
  return make_tensor(std::move(shape), std::move(data), false);
}

inline Tensor scalar_const(double v) { return constant({1}, {v}); }

inline Tensor param(Shape shape, std::vector<double> data) {
  return make_tensor(std::move(shape), std::move(data), true);
}

inline Tensor zeros(Shape shape, bool requires_grad = false) {
  std::size_t n = numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

inline void check_finite(const Node& n) {
  for (double v : n.value)
    if (!std::isfinite(v)) throw NonFiniteError(n.op);
}

namespace detail {

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// numpy-style broadcast of two shapes (align trailing dims; 1 stretches).
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeMismatchError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Per-output-element source index into a tensor of shape `src` broadcast to `out`.
struct BroadcastMap {
  std::vector<std::size_t> out_strides;
  std::vector<std::size_t> src_strides;  // 0 where broadcast
  Shape out_shape;

  BroadcastMap(const Shape& out, const Shape& src) : out_shape(out) {
    out_strides = strides_of(out);
    auto ss = strides_of(src);
    src_strides.assign(out.size(), 0);
    const std::size_t off = out.size() - src.size();
    for (std::size_t i = 0; i < src.size(); ++i)
      src_strides[off + i] = (src[i] == 1 && out[off + i] != 1) ? 0 : ss[i];
  }

  std::size_t src_index(std::size_t out_linear) const {
    std::size_t idx = 0;
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      const std::size_t coord = (out_linear / out_strides[d]) % out_shape[d];
      idx += coord * src_strides[d];
    }
    return idx;
  }
};

inline Tensor alloc_out(Shape shape, const std::vector<Tensor>& parents, const char* op) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value.assign(numel(out->shape), 0.0);
  out->grad.assign(out->value.size(), 0.0);
  out->requires_grad = rg;
  out->op = op;
  if (rg) out->parents = parents;
  return out;
}

// Elementwise binary op with broadcasting. f(a,b) -> v; dfa, dfb give local
// partials as functions of (a, b, v).
template <typename F, typename Da, typename Db>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, F f, Da dfa, Db dfb) {
  Shape os = broadcast_shape(a->shape, b->shape, op);
  auto out = alloc_out(os, {a, b}, op);
  BroadcastMap ma(os, a->shape), mb(os, b->shape);
  const std::size_t n = out->value.size();
  const bool same = a->shape == b->shape && a->shape == os;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ia = same ? i : ma.src_index(i);
    const std::size_t ib = same ? i : mb.src_index(i);
    out->value[i] = f(a->value[ia], b->value[ib]);
  }
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb, ma, mb, same, f, dfa, dfb](Node& o) {
      const std::size_t n2 = o.value.size();
      for (std::size_t i = 0; i < n2; ++i) {
        const std::size_t ia = same ? i : ma.src_index(i);
        const std::size_t ib = same ? i : mb.src_index(i);
        const double av = pa->value[ia], bv = pb->value[ib], ov = o.value[i], g = o.grad[i];
        if (pa->requires_grad) pa->grad[ia] += g * dfa(av, bv, ov);
        if (pb->requires_grad) pb->grad[ib] += g * dfb(av, bv, ov);
      }
    };
  }
  return out;
}

template <typename F, typename D>
Tensor unary_op(const Tensor& a, const char* op, F f, D df) {
  auto out = alloc_out(a->shape, {a}, op);
  const std::size_t n = out->value.size();
  for (std::size_t i = 0; i < n; ++i) out->value[i] = f(a->value[i]);
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa, df](Node& o) {
      for (std::size_t i = 0; i < o.value.size(); ++i) pa->grad[i] += o.grad[i] * df(pa->value[i], o.value[i]);
    };
  }
  return out;
}

}  // namespace detail

// --------------------------------- ops -------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double v) { return v; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary_op(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary_op(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double v) { return 1.0 - v * v; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary_op(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary_op(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// Hard clamp; gradient is 1 inside [lo, hi] and 0 outside.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  return detail::unary_op(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// Multiply by a compile-time-known scalar (no graph node for the scalar).
inline Tensor scale(const Tensor& a, double c) {
  return detail::unary_op(
      a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

/// 2-D matrix product (m,k) x (k,n) -> (m,n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw ShapeMismatchError("matmul: " + shape_str(a->shape) + " x " + shape_str(b->shape));
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = detail::alloc_out({m, n}, {a, b}, "matmul");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a->value[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out->value[i * n + j] += av * b->value[p * n + j];
    }
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb, m, k, n](Node& o) {
      if (pa->requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double g = o.grad[i * n + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) pa->grad[i * k + p] += g * pb->value[p * n + j];
          }
      if (pb->requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = pa->value[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) pb->grad[p * n + j] += av * o.grad[i * n + j];
          }
    };
  }
  return out;
}

/// Batched matrix product (B,m,k) x (B,k,n) -> (B,m,n).
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0] || a->shape[2] != b->shape[1])
    throw ShapeMismatchError("bmm: " + shape_str(a->shape) + " x " + shape_str(b->shape));
  const std::size_t B = a->shape[0], m = a->shape[1], k = a->shape[2], n = b->shape[2];
  auto out = detail::alloc_out({B, m, n}, {a, b}, "bmm");
  for (std::size_t q = 0; q < B; ++q) {
    const double* A = a->value.data() + q * m * k;
    const double* Bv = b->value.data() + q * k * n;
    double* O = out->value.data() + q * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) O[i * n + j] += av * Bv[p * n + j];
      }
  }
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a, pb = b;
    out->backprop = [pa, pb, B, m, k, n](Node& o) {
      for (std::size_t q = 0; q < B; ++q) {
        const double* A = pa->value.data() + q * m * k;
        const double* Bv = pb->value.data() + q * k * n;
        const double* G = o.grad.data() + q * m * n;
        if (pa->requires_grad) {
          double* Ga = pa->grad.data() + q * m * k;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double g = G[i * n + j];
              for (std::size_t p = 0; p < k; ++p) Ga[i * k + p] += g * Bv[p * n + j];
            }
        }
        if (pb->requires_grad) {
          double* Gb = pb->grad.data() + q * k * n;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) Gb[p * n + j] += av * G[i * n + j];
            }
        }
      }
    };
  }
  return out;
}

/// Swap the last two axes (rank >= 2).
inline Tensor transpose_last(const Tensor& a) {
  if (a->shape.size() < 2) throw ShapeMismatchError("transpose_last: rank < 2");
  Shape os = a->shape;
  std::swap(os[os.size() - 1], os[os.size() - 2]);
  const std::size_t r = os[os.size() - 2], c = os[os.size() - 1];
  const std::size_t batch = numel(a->shape) / (r * c);
  auto out = detail::alloc_out(os, {a}, "transpose");
  for (std::size_t q = 0; q < batch; ++q)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out->value[q * r * c + i * c + j] = a->value[q * r * c + j * r + i];
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa, batch, r, c](Node& o) {
      for (std::size_t q = 0; q < batch; ++q)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            pa->grad[q * r * c + j * r + i] += o.grad[q * r * c + i * c + j];
    };
  }
  return out;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a->value.size())
    throw ShapeMismatchError("reshape: " + shape_str(a->shape) + " -> " + shape_str(shape));
  auto out = detail::alloc_out(shape, {a}, "reshape");
  out->value = a->value;
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa](Node& o) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
    };
  }
  return out;
}

/// Contiguous slice along one axis: indices [start, start+len) kept.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a->shape.size() || start + len > a->shape[axis])
    throw ShapeMismatchError("slice: axis " + std::to_string(axis) + " [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") of " + shape_str(a->shape));
  Shape os = a->shape;
  os[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a->shape[d];
  for (std::size_t d = axis + 1; d < a->shape.size(); ++d) inner *= a->shape[d];
  const std::size_t ax = a->shape[axis];
  auto out = detail::alloc_out(os, {a}, "slice");
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < len; ++i)
      std::copy_n(a->value.data() + (o * ax + start + i) * inner, inner,
                  out->value.data() + (o * len + i) * inner);
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa, outer, inner, ax, start, len](Node& o) {
      for (std::size_t q = 0; q < outer; ++q)
        for (std::size_t i = 0; i < len; ++i) {
          const double* g = o.grad.data() + (q * len + i) * inner;
          double* dst = pa->grad.data() + (q * ax + start + i) * inner;
          for (std::size_t j = 0; j < inner; ++j) dst[j] += g[j];
        }
    };
  }
  return out;
}

/// Concatenate along one axis; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatchError("concat: no inputs");
  Shape os = parts[0]->shape;
  if (axis >= os.size()) throw ShapeMismatchError("concat: bad axis");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p->shape.size() != os.size()) throw ShapeMismatchError("concat: rank mismatch");
    for (std::size_t d = 0; d < os.size(); ++d)
      if (d != axis && p->shape[d] != os[d]) throw ShapeMismatchError("concat: extent mismatch");
    total += p->shape[axis];
  }
  os[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= os[d];
  for (std::size_t d = axis + 1; d < os.size(); ++d) inner *= os[d];
  auto out = detail::alloc_out(os, parts, "concat");
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t len = p->shape[axis];
    for (std::size_t q = 0; q < outer; ++q)
      std::copy_n(p->value.data() + q * len * inner, len * inner,
                  out->value.data() + (q * total + off) * inner);
    off += len;
  }
  if (out->requires_grad) {
    auto ps = parts;
    std::vector<std::size_t> lens;
    for (const auto& p : parts) lens.push_back(p->shape[axis]);
    out->backprop = [ps, lens, outer, inner, total](Node& o) {
      std::size_t off2 = 0;
      for (std::size_t k = 0; k < ps.size(); ++k) {
        if (ps[k]->requires_grad) {
          for (std::size_t q = 0; q < outer; ++q) {
            const double* g = o.grad.data() + (q * total + off2) * inner;
            double* dst = ps[k]->grad.data() + q * lens[k] * inner;
            for (std::size_t j = 0; j < lens[k] * inner; ++j) dst[j] += g[j];
          }
        }
        off2 += lens[k];
      }
    };
  }
  return out;
}

/// Softmax along the last axis.
inline Tensor softmax(const Tensor& a) {
  const std::size_t c = a->shape.back();
  const std::size_t rows = a->value.size() / c;
  auto out = detail::alloc_out(a->shape, {a}, "softmax");
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a->value.data() + r * c;
    double* y = out->value.data() + r * c;
    const double mx = *std::max_element(x, x + c);
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa, rows, c](Node& o) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = o.value.data() + r * c;
        const double* g = o.grad.data() + r * c;
        double dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
        double* d = pa->grad.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) d[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

/// log(softmax) along the last axis, computed stably.
inline Tensor log_softmax(const Tensor& a) {
  const std::size_t c = a->shape.back();
  const std::size_t rows = a->value.size() / c;
  auto out = detail::alloc_out(a->shape, {a}, "log_softmax");
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a->value.data() + r * c;
    double* y = out->value.data() + r * c;
    const double mx = *std::max_element(x, x + c);
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lse;
  }
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa, rows, c](Node& o) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = o.value.data() + r * c;
        const double* g = o.grad.data() + r * c;
        double gs = 0;
        for (std::size_t j = 0; j < c; ++j) gs += g[j];
        double* d = pa->grad.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) d[j] += g[j] - std::exp(y[j]) * gs;
      }
    };
  }
  return out;
}

/// Sum of all elements -> scalar.
inline Tensor sum(const Tensor& a) {
  auto out = detail::alloc_out({1}, {a}, "sum");
  out->value[0] = std::accumulate(a->value.begin(), a->value.end(), 0.0);
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa](Node& o) {
      for (double& g : pa->grad) g += o.grad[0];
    };
  }
  return out;
}

/// Mean of all elements -> scalar.
inline Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a->value.size());
  auto out = detail::alloc_out({1}, {a}, "mean");
  out->value[0] = std::accumulate(a->value.begin(), a->value.end(), 0.0) * inv;
  check_finite(*out);
  if (out->requires_grad) {
    auto pa = a;
    out->backprop = [pa, inv](Node& o) {
      for (double& g : pa->grad) g += o.grad[0] * inv;
    };
  }
  return out;
}

// ------------------------------- backward ----------------------------------

class NotScalarError : public Error {
 public:
  NotScalarError() : Error("backward: loss is not a scalar") {}
};

class DetachedGraphError : public Error {
 public:
  DetachedGraphError() : Error("backward: loss carries no gradient graph") {}
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable node with requires_grad (zero them first via zero_grad). The
/// recorded graph is released afterwards; leaf parameters survive.
inline void backward(const Tensor& loss) {
  if (!loss->is_scalar()) throw NotScalarError();
  if (!loss->requires_grad || (!loss->backprop && loss->parents.empty())) throw DetachedGraphError();
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
  // release the tape: interior nodes drop their edges, leaves are untouched
  for (Node* n : order) {
    if (n->backprop) {
      n->backprop = nullptr;
      n->parents.clear();
    }
  }
}

}  // namespace tabforge::ad
