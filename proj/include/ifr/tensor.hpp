// Dense 64-bit tensor kernel with reverse-mode differentiation.
//
// Shapes are always explicit: there is no broadcasting anywhere. Ops are
// recorded on a Tape; Tape::backward walks the records in reverse creation
// order (a valid reverse topological order) and accumulates gradients into
// per-node buffers and, for bound leaves, into external sinks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ifr/rng.hpp"

namespace ifr {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(count(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape)) throw std::invalid_argument("tensor: data size does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s), 0.0); }
  static Tensor full(std::vector<std::size_t> s, double v) { return Tensor(std::move(s), v); }
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& v : data) v = rng.uniform(lo, hi);
  }
  void fill_normal(Rng& rng, double mean, double stddev) {
    for (double& v : data) v = rng.normal(mean, stddev);
  }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
};

class Tape {
 public:
  struct Node {
    Tensor value;
    // Accumulates upstream grad (grad_buf(id)) into the node's parents.
    std::function<void(Tape&, int)> backward;
  };

  Var leaf(Tensor t) {
    nodes_.push_back(Node{std::move(t), nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  // Leaf whose gradient is additionally accumulated into *sink during
  // backward (used for parameters owned by a ParamStore).
  Var bound_leaf(const Tensor& value, Tensor* sink) {
    Var v = leaf(value);
    int id = v.id;
    nodes_[id].backward = [sink](Tape& t, int self) {
      const Tensor& g = t.grad_buf(self);
      for (std::size_t i = 0; i < g.size(); ++i) sink->data[i] += g.data[i];
    };
    return v;
  }

  Var record(Tensor value, std::function<void(Tape&, int)> backward) {
    nodes_.push_back(Node{std::move(value), std::move(backward)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }

  Tensor& grad_buf(int id) {
    auto idx = static_cast<std::size_t>(id);
    if (grads_[idx].data.empty()) grads_[idx] = Tensor::zeros(nodes_[idx].value.shape);
    return grads_[idx];
  }
  bool touched(int id) const { return !grads_[static_cast<std::size_t>(id)].data.empty(); }

  // Reverse sweep from a scalar loss. Each node is visited at most once,
  // in reverse creation order; untouched nodes keep zero gradients.
  void backward(Var loss) {
    if (!loss.valid() || loss.tape != this)
      throw std::invalid_argument("backward: tensor was not traced on this tape");
    if (value(loss.id).size() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                  shape_str(value(loss.id).shape));
    grads_.assign(nodes_.size(), Tensor{});
    grad_buf(loss.id).data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
      if (!touched(id)) continue;
      if (nodes_[static_cast<std::size_t>(id)].backward)
        nodes_[static_cast<std::size_t>(id)].backward(*this, id);
    }
  }

  // Gradient of a node from the last backward pass (zeros if untouched).
  Tensor grad_of(Var v) const {
    if (!v.valid() || v.tape != this)
      throw std::invalid_argument("grad_of: tensor was not traced on this tape");
    auto idx = static_cast<std::size_t>(v.id);
    if (idx < grads_.size() && !grads_[idx].data.empty()) return grads_[idx];
    return Tensor::zeros(nodes_[idx].value.shape);
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

inline const Tensor& Var::val() const { return tape->value(id); }

namespace detail {
inline Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  return *a.tape;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Traced operations
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows())
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(A.shape) + " vs " +
                                shape_str(B.shape));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.data[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B.data[p * n];
      double* crow = &C.data[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  int ai = a.id, bi = b.id;
  return t.record(std::move(C), [ai, bi, m, k, n](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    const Tensor& A_ = tp.value(ai);
    const Tensor& B_ = tp.value(bi);
    Tensor& ga = tp.grad_buf(ai);
    Tensor& gb = tp.grad_buf(bi);
    // dA = g * B^T
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double gv = g.data[i * n + j];
        if (gv == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) ga.data[i * k + p] += gv * B_.data[p * n + j];
      }
    // dB = A^T * g
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A_.data[i * k + p];
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) gb.data[p * n + j] += av * g.data[i * n + j];
      }
  });
}

// y = x*W + b applied row-wise; b has shape [n].
inline Var affine(Var x, Var w, Var b) {
  Tape& t = detail::same_tape(x, w, "affine");
  detail::same_tape(x, b, "affine");
  const Tensor& X = x.val();
  const Tensor& W = w.val();
  const Tensor& B = b.val();
  if (X.ndim() != 2 || W.ndim() != 2 || X.cols() != W.rows())
    throw std::invalid_argument("affine: incompatible shapes " + shape_str(X.shape) + " vs " +
                                shape_str(W.shape));
  if (B.ndim() != 1 || B.shape[0] != W.cols())
    throw std::invalid_argument("affine: bias shape " + shape_str(B.shape) + " vs weight " +
                                shape_str(W.shape));
  const std::size_t m = X.rows(), k = X.cols(), n = W.cols();
  Tensor Y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* yrow = &Y.data[i * n];
    for (std::size_t j = 0; j < n; ++j) yrow[j] = B.data[j];
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = X.data[i * k + p];
      if (xv == 0.0) continue;
      const double* wrow = &W.data[p * n];
      for (std::size_t j = 0; j < n; ++j) yrow[j] += xv * wrow[j];
    }
  }
  int xi = x.id, wi = w.id, bi = b.id;
  return t.record(std::move(Y), [xi, wi, bi, m, k, n](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    const Tensor& X_ = tp.value(xi);
    const Tensor& W_ = tp.value(wi);
    Tensor& gx = tp.grad_buf(xi);
    Tensor& gw = tp.grad_buf(wi);
    Tensor& gb = tp.grad_buf(bi);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double gv = g.data[i * n + j];
        if (gv == 0.0) continue;
        gb.data[j] += gv;
        for (std::size_t p = 0; p < k; ++p) {
          gx.data[i * k + p] += gv * W_.data[p * n + j];
          gw.data[p * n + j] += gv * X_.data[i * k + p];
        }
      }
  });
}

namespace detail {
inline Var elementwise_binary(Var a, Var b, const char* name,
                              const std::function<double(double, double)>& f,
                              const std::function<std::pair<double, double>(double, double)>& df) {
  Tape& t = same_tape(a, b, name);
  const Tensor& A = a.val();
  const Tensor& B = b.val();
  require_same_shape(A, B, name);
  Tensor out(A.shape);
  for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = f(A.data[i], B.data[i]);
  int ai = a.id, bi = b.id;
  return t.record(std::move(out), [ai, bi, df](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    const Tensor& A_ = tp.value(ai);
    const Tensor& B_ = tp.value(bi);
    Tensor& ga = tp.grad_buf(ai);
    Tensor& gb = tp.grad_buf(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto [da, db] = df(A_.data[i], B_.data[i]);
      ga.data[i] += g.data[i] * da;
      gb.data[i] += g.data[i] * db;
    }
  });
}

inline Var elementwise_unary(Var x, const char* name, const std::function<double(double)>& f,
                             const std::function<double(double, double)>& df /*(x, y)->dy/dx*/) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  Tensor out(X.shape);
  for (std::size_t i = 0; i < X.size(); ++i) out.data[i] = f(X.data[i]);
  (void)name;
  int xi = x.id;
  return t.record(std::move(out), [xi, df](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    const Tensor& X_ = tp.value(xi);
    const Tensor& Y_ = tp.value(self);
    Tensor& gx = tp.grad_buf(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * df(X_.data[i], Y_.data[i]);
  });
}
}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::elementwise_binary(a, b, "add", [](double x, double y) { return x + y; },
                                    [](double, double) { return std::pair{1.0, 1.0}; });
}

inline Var sub(Var a, Var b) {
  return detail::elementwise_binary(a, b, "sub", [](double x, double y) { return x - y; },
                                    [](double, double) { return std::pair{1.0, -1.0}; });
}

inline Var mul(Var a, Var b) {
  return detail::elementwise_binary(a, b, "mul", [](double x, double y) { return x * y; },
                                    [](double x, double y) { return std::pair{y, x}; });
}

// Elementwise min; gradient follows the winning operand (ties go to b).
inline Var minimum(Var a, Var b) {
  return detail::elementwise_binary(a, b, "minimum", [](double x, double y) { return std::min(x, y); },
                                    [](double x, double y) {
                                      return x < y ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0};
                                    });
}

inline Var scale(Var x, double c) {
  return detail::elementwise_unary(x, "scale", [c](double v) { return c * v; },
                                   [c](double, double) { return c; });
}

inline Var relu(Var x) {
  return detail::elementwise_unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                                   [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

// Largest representable value below 1; probability outputs are clamped into
// (0, 1) so the open-interval invariant survives saturation.
inline constexpr double kBelowOne = 1.0 - 1.1102230246251565e-16;
inline constexpr double kAboveZero = 1e-300;

inline Var sigmoid(Var x) {
  return detail::elementwise_unary(x, "sigmoid",
                                   [](double v) {
                                     const double s = v >= 0.0
                                                          ? 1.0 / (1.0 + std::exp(-v))
                                                          : std::exp(v) / (1.0 + std::exp(v));
                                     return std::clamp(s, kAboveZero, kBelowOne);
                                   },
                                   [](double, double y) { return y * (1.0 - y); });
}

inline Var log_op(Var x) {
  return detail::elementwise_unary(x, "log", [](double v) { return std::log(v); },
                                   [](double v, double) { return 1.0 / v; });
}

inline Var exp_op(Var x) {
  return detail::elementwise_unary(x, "exp", [](double v) { return std::exp(v); },
                                   [](double, double y) { return y; });
}

inline Var clamp_op(Var x, double lo, double hi) {
  return detail::elementwise_unary(x, "clamp",
                                   [lo, hi](double v) { return std::clamp(v, lo, hi); },
                                   [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// Softmax over the last axis of a 1-D or 2-D tensor.
inline Var softmax_last(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (X.ndim() < 1 || X.ndim() > 2)
    throw std::invalid_argument("softmax: expected 1-D or 2-D input, got " + shape_str(X.shape));
  const std::size_t rows = X.ndim() == 2 ? X.rows() : 1;
  const std::size_t n = X.ndim() == 2 ? X.cols() : X.shape[0];
  Tensor out(X.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &X.data[r * n];
    double* yr = &out.data[r * n];
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] = std::clamp(yr[j] / sum, kAboveZero, kBelowOne);
  }
  int xi = x.id;
  return t.record(std::move(out), [xi, rows, n](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    const Tensor& Y_ = tp.value(self);
    Tensor& gx = tp.grad_buf(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = &Y_.data[r * n];
      const double* gr = &g.data[r * n];
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < n; ++j) gx.data[r * n + j] += yr[j] * (gr[j] - dot);
    }
  });
}

// Concatenate 2-D tensors along axis 0 or 1 (or 1-D tensors along axis 0).
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t nd = parts[0].val().ndim();
  if (axis >= nd) throw std::invalid_argument("concat: axis out of range");
  for (const Var& p : parts) {
    detail::same_tape(parts[0], p, "concat");
    if (p.val().ndim() != nd) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t d = 0; d < nd; ++d)
      if (d != axis && p.val().shape[d] != parts[0].val().shape[d])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(p.val().shape) + " vs " +
                                    shape_str(parts[0].val().shape));
  }
  std::vector<std::size_t> out_shape = parts[0].val().shape;
  out_shape[axis] = 0;
  for (const Var& p : parts) out_shape[axis] += p.val().shape[axis];

  Tensor out(out_shape);
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  if (nd == 1 || axis == 0) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      ids.push_back(p.id);
      offsets.push_back(off);
      std::copy(p.val().data.begin(), p.val().data.end(), out.data.begin() + static_cast<long>(off));
      off += p.val().size();
    }
    return t.record(std::move(out), [ids, offsets](Tape& tp, int self) {
      const Tensor& g = tp.grad_buf(self);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        Tensor& gp = tp.grad_buf(ids[k]);
        for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += g.data[offsets[k] + i];
      }
    });
  }
  // axis == 1, 2-D
  const std::size_t m = out_shape[0], ncols = out_shape[1];
  std::size_t col = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    ids.push_back(p.id);
    offsets.push_back(col);
    const std::size_t w = p.val().cols();
    widths.push_back(w);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out.data[i * ncols + col + j] = p.val().data[i * w + j];
    col += w;
  }
  return t.record(std::move(out), [ids, offsets, widths, m, ncols](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor& gp = tp.grad_buf(ids[k]);
      const std::size_t w = widths[k];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) gp.data[i * w + j] += g.data[i * ncols + offsets[k] + j];
    }
  });
}

// Mean over one axis of a 2-D tensor -> 1-D.
inline Var mean_axis(Var x, std::size_t axis) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (X.ndim() != 2 || axis > 1) throw std::invalid_argument("mean_axis: expected 2-D input");
  const std::size_t m = X.rows(), n = X.cols();
  if (axis == 0) {
    Tensor out({n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out.data[j] += X.data[i * n + j];
    for (std::size_t j = 0; j < n; ++j) out.data[j] /= static_cast<double>(m);
    int xi = x.id;
    return t.record(std::move(out), [xi, m, n](Tape& tp, int self) {
      const Tensor& g = tp.grad_buf(self);
      Tensor& gx = tp.grad_buf(xi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx.data[i * n + j] += g.data[j] / static_cast<double>(m);
    });
  }
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += X.data[i * n + j];
    out.data[i] = s / static_cast<double>(n);
  }
  int xi = x.id;
  return t.record(std::move(out), [xi, m, n](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    Tensor& gx = tp.grad_buf(xi);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx.data[i * n + j] += g.data[i] / static_cast<double>(n);
  });
}

// Max over one axis of a 2-D tensor -> 1-D. Ties route the gradient to the
// first maximal element.
inline Var max_axis(Var x, std::size_t axis) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (X.ndim() != 2 || axis > 1) throw std::invalid_argument("max_axis: expected 2-D input");
  const std::size_t m = X.rows(), n = X.cols();
  std::vector<std::size_t> arg;
  Tensor out;
  if (axis == 0) {
    out = Tensor({n});
    arg.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
      double best = X.data[j];
      std::size_t bi = 0;
      for (std::size_t i = 1; i < m; ++i)
        if (X.data[i * n + j] > best) best = X.data[i * n + j], bi = i;
      out.data[j] = best;
      arg[j] = bi;
    }
    int xi = x.id;
    return t.record(std::move(out), [xi, n, arg](Tape& tp, int self) {
      const Tensor& g = tp.grad_buf(self);
      Tensor& gx = tp.grad_buf(xi);
      for (std::size_t j = 0; j < n; ++j) gx.data[arg[j] * n + j] += g.data[j];
    });
  }
  out = Tensor({m});
  arg.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    double best = X.data[i * n];
    std::size_t bj = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (X.data[i * n + j] > best) best = X.data[i * n + j], bj = j;
    out.data[i] = best;
    arg[i] = bj;
  }
  int xi = x.id;
  return t.record(std::move(out), [xi, n, arg](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    Tensor& gx = tp.grad_buf(xi);
    for (std::size_t i = 0; i < arg.size(); ++i) gx.data[i * n + arg[i]] += g.data[i];
  });
}

inline Var sum_all(Var x) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  double s = 0.0;
  for (double v : X.data) s += v;
  int xi = x.id;
  return t.record(Tensor::scalar(s), [xi](Tape& tp, int self) {
    const double g = tp.grad_buf(self).data[0];
    Tensor& gx = tp.grad_buf(xi);
    for (double& v : gx.data) v += g;
  });
}

// Row gather from a 2-D tensor; rows may repeat. Backward scatter-adds.
inline Var gather_rows(Var x, std::vector<std::size_t> rows) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (X.ndim() != 2) throw std::invalid_argument("gather_rows: expected 2-D input");
  const std::size_t n = X.cols();
  for (std::size_t r : rows)
    if (r >= X.rows()) throw std::invalid_argument("gather_rows: row index out of range");
  Tensor out({rows.size(), n});
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy_n(&X.data[rows[k] * n], n, &out.data[k * n]);
  int xi = x.id;
  return t.record(std::move(out), [xi, rows = std::move(rows), n](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    Tensor& gx = tp.grad_buf(xi);
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (std::size_t j = 0; j < n; ++j) gx.data[rows[k] * n + j] += g.data[k * n + j];
  });
}

// Same data, new shape (element count must match).
inline Var reshape(Var x, std::vector<std::size_t> new_shape) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (Tensor::count(new_shape) != X.size())
    throw std::invalid_argument("reshape: cannot reshape " + shape_str(X.shape) + " to " +
                                shape_str(new_shape));
  Tensor out(std::move(new_shape), X.data);
  int xi = x.id;
  return t.record(std::move(out), [xi](Tape& tp, int self) {
    const Tensor& g = tp.grad_buf(self);
    Tensor& gx = tp.grad_buf(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
  });
}

// Single element of a 1-D tensor as a scalar.
inline Var pick(Var x, std::size_t index) {
  Tape& t = *x.tape;
  const Tensor& X = x.val();
  if (X.ndim() != 1 || index >= X.shape[0]) throw std::invalid_argument("pick: bad index");
  int xi = x.id;
  return t.record(Tensor::scalar(X.data[index]), [xi, index](Tape& tp, int self) {
    tp.grad_buf(xi).data[index] += tp.grad_buf(self).data[0];
  });
}

// ---------------------------------------------------------------------------
// Binary cross entropy
// ---------------------------------------------------------------------------

inline constexpr double kBceEps = 1e-7;

// Weighted mean of -[t log p + (1-t) log(1-p)] with p clamped into
// [eps, 1-eps]. Targets must be exactly 0 or 1; weights are untraced.
inline Var bce_loss(Var pred, const Tensor& target, const Tensor& weight) {
  Tape& t = *pred.tape;
  const Tensor& P = pred.val();
  require_same_shape(P, target, "bce_loss");
  require_same_shape(P, weight, "bce_loss");
  for (double tv : target.data)
    if (tv != 0.0 && tv != 1.0)
      throw std::invalid_argument("bce_loss: target must be 0 or 1");
  double wsum = 0.0;
  for (double w : weight.data) wsum += w;
  if (wsum <= 0.0) throw std::invalid_argument("bce_loss: weights must sum to a positive value");
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = std::clamp(P.data[i], kBceEps, 1.0 - kBceEps);
    const double tv = target.data[i];
    loss += weight.data[i] * -(tv * std::log(p) + (1.0 - tv) * std::log(1.0 - p));
  }
  loss /= wsum;
  int pi = pred.id;
  return t.record(Tensor::scalar(loss), [pi, target, weight, wsum](Tape& tp, int self) {
    const double g = tp.grad_buf(self).data[0];
    const Tensor& P_ = tp.value(pi);
    Tensor& gp = tp.grad_buf(pi);
    for (std::size_t i = 0; i < P_.size(); ++i) {
      const double raw = P_.data[i];
      if (raw < kBceEps || raw > 1.0 - kBceEps) continue;  // clamped region
      const double tv = target.data[i];
      gp.data[i] += g * weight.data[i] / wsum * (-tv / raw + (1.0 - tv) / (1.0 - raw));
    }
  });
}

inline Var bce_loss(Var pred, const Tensor& target) {
  return bce_loss(pred, target, Tensor::full(target.shape, 1.0));
}

}  // namespace ifr
