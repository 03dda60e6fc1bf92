#pragma once

// Minimal reverse-mode differentiation for the message-passing network:
// row-major double tensors, a recording tape, dense layers, Max aggregation,
// the three training losses and Adam.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conftrack/error.hpp"

namespace conftrack {

struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Tensor2(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
      throw ShapeError("Tensor2: " + std::to_string(data.size()) + " values for shape " + shape_string(r, c));
    }
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape() const { return shape_string(rows, cols); }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }
};

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 grad;

  Parameter() = default;
  Parameter(std::string n, Tensor2 v) : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Tensor2& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor2& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor2 t) { return push(std::move(t), "constant", {}); }

  /// Leaf bound to a parameter; backward() adds its gradient into p.grad.
  Var param(Parameter& p) {
    Var v = push(p.value, "param", {});
    bound_.emplace_back(v.id, &p);
    return v;
  }

  /// Reverse sweep from a 1x1 node. The tape is spent afterwards.
  void backward(Var loss) {
    ensure_recording("backward");
    const Tensor2& L = value(loss);
    if (L.rows != 1 || L.cols != 1) throw ShapeError("backward: loss must be (1x1), got " + L.shape());
    for (auto& n : nodes_) n.grad = Tensor2(n.value.rows, n.value.cols);
    nodes_[loss.id].grad.data[0] = 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      if (nodes_[k].backward) nodes_[k].backward();
    }
    for (auto [id, p] : bound_) {
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad.data[i] += nodes_[id].grad.data[i];
    }
    spent_ = true;
  }

  void reset() {
    nodes_.clear();
    bound_.clear();
    signature_ = kFnvOffset;
    spent_ = false;
  }

  /// Hash of every piecewise branch taken (ReLU signs, Max winners, clamps,
  /// Huber branches). Equal signatures mean the same smooth piece.
  std::uint64_t kink_signature() const { return signature_; }

  // internal: used by the op functions below
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    std::function<void()> backward;
  };
  Var push(Tensor2 value, const char* op, std::function<void()> bw) {
    ensure_recording(op);
    if (check_finite_) {
      for (double x : value.data) {
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
      }
    }
    nodes_.push_back({std::move(value), Tensor2(), std::move(bw)});
    return {this, nodes_.size() - 1};
  }
  Node& node(Var v) { return nodes_[v.id]; }
  void record_branch(std::uint64_t choice) { signature_ = (signature_ ^ choice) * kFnvPrime; }
  void check_owner(Var v, const char* op) const {
    if (v.tape != this || v.id >= nodes_.size()) throw StateError(std::string(op) + ": variable from another tape");
  }

 private:
  static constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
  static constexpr std::uint64_t kFnvPrime = 1099511628211ull;

  void ensure_recording(const char* op) const {
    if (spent_) throw StateError(std::string(op) + ": tape already differentiated; call reset()");
  }

  bool check_finite_;
  bool spent_ = false;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, Parameter*>> bound_;
  std::uint64_t signature_ = kFnvOffset;
};

namespace ops {

namespace detail {
inline Tape& tape_of(Var a, const char* op) {
  if (a.tape == nullptr) throw StateError(std::string(op) + ": unbound variable");
  a.tape->check_owner(a, op);
  return *a.tape;
}
inline Tape& tape_of(Var a, Var b, const char* op) {
  Tape& t = tape_of(a, op);
  t.check_owner(b, op);
  return t;
}
inline void require_same(const Tensor2& a, const Tensor2& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}
}  // namespace detail

/// (n x k) * (k x m)
inline Var matmul(Var a, Var b) {
  Tape& t = detail::tape_of(a, b, "matmul");
  const Tensor2& A = t.value(a);
  const Tensor2& B = t.value(b);
  if (A.cols != B.rows) throw ShapeError("matmul: shape mismatch " + A.shape() + " vs " + B.shape());
  Tensor2 C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      for (std::size_t j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
    }
  }
  Var out = t.push(std::move(C), "matmul", {});
  t.node(out).backward = [&t, a, b, out] {
    const Tensor2& G = t.node(out).grad;
    const Tensor2& A = t.node(a).value;
    const Tensor2& B = t.node(b).value;
    Tensor2& GA = t.node(a).grad;
    Tensor2& GB = t.node(b).grad;
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t k = 0; k < A.cols; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < B.cols; ++j) s += G(i, j) * B(k, j);
        GA(i, k) += s;
        const double aik = A(i, k);
        for (std::size_t j = 0; j < B.cols; ++j) GB(k, j) += aik * G(i, j);
      }
    }
  };
  return out;
}

/// Adds a (1 x m) row to every row of an (n x m) tensor.
inline Var add_row(Var a, Var row) {
  Tape& t = detail::tape_of(a, row, "add_row");
  const Tensor2& A = t.value(a);
  const Tensor2& R = t.value(row);
  if (R.rows != 1 || R.cols != A.cols) throw ShapeError("add_row: shape mismatch " + A.shape() + " vs " + R.shape());
  Tensor2 C = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C(i, j) += R(0, j);
  }
  Var out = t.push(std::move(C), "add_row", {});
  t.node(out).backward = [&t, a, row, out] {
    const Tensor2& G = t.node(out).grad;
    Tensor2& GA = t.node(a).grad;
    Tensor2& GR = t.node(row).grad;
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < G.cols; ++j) {
        GA(i, j) += G(i, j);
        GR(0, j) += G(i, j);
      }
    }
  };
  return out;
}

inline Var add(Var a, Var b) {
  Tape& t = detail::tape_of(a, b, "add");
  detail::require_same(t.value(a), t.value(b), "add");
  Tensor2 C = t.value(a);
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += t.value(b).data[i];
  Var out = t.push(std::move(C), "add", {});
  t.node(out).backward = [&t, a, b, out] {
    const Tensor2& G = t.node(out).grad;
    for (std::size_t i = 0; i < G.size(); ++i) {
      t.node(a).grad.data[i] += G.data[i];
      t.node(b).grad.data[i] += G.data[i];
    }
  };
  return out;
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::tape_of(a, b, "sub");
  detail::require_same(t.value(a), t.value(b), "sub");
  Tensor2 C = t.value(a);
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] -= t.value(b).data[i];
  Var out = t.push(std::move(C), "sub", {});
  t.node(out).backward = [&t, a, b, out] {
    const Tensor2& G = t.node(out).grad;
    for (std::size_t i = 0; i < G.size(); ++i) {
      t.node(a).grad.data[i] += G.data[i];
      t.node(b).grad.data[i] -= G.data[i];
    }
  };
  return out;
}

/// Multiplies column j by scales[j].
inline Var scale_cols(Var a, std::vector<double> scales) {
  Tape& t = detail::tape_of(a, "scale_cols");
  const Tensor2& A = t.value(a);
  if (scales.size() != A.cols) {
    throw ShapeError("scale_cols: " + std::to_string(scales.size()) + " scales for " + A.shape());
  }
  Tensor2 C = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C(i, j) *= scales[j];
  }
  Var out = t.push(std::move(C), "scale_cols", {});
  t.node(out).backward = [&t, a, out, scales = std::move(scales)] {
    const Tensor2& G = t.node(out).grad;
    Tensor2& GA = t.node(a).grad;
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < G.cols; ++j) GA(i, j) += G(i, j) * scales[j];
    }
  };
  return out;
}

inline Var relu(Var a) {
  Tape& t = detail::tape_of(a, "relu");
  Tensor2 C = t.value(a);
  for (double& x : C.data) {
    t.record_branch(x > 0.0 ? 0x52u : 0x4eu);
    x = std::max(x, 0.0);
  }
  Var out = t.push(std::move(C), "relu", {});
  t.node(out).backward = [&t, a, out] {
    const Tensor2& G = t.node(out).grad;
    const Tensor2& X = t.node(a).value;
    for (std::size_t i = 0; i < G.size(); ++i) {
      if (X.data[i] > 0.0) t.node(a).grad.data[i] += G.data[i];
    }
  };
  return out;
}

inline double sigmoid_value(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  Tape& t = detail::tape_of(a, "sigmoid");
  Tensor2 C = t.value(a);
  for (double& x : C.data) x = sigmoid_value(x);
  Var out = t.push(std::move(C), "sigmoid", {});
  t.node(out).backward = [&t, a, out] {
    const Tensor2& G = t.node(out).grad;
    const Tensor2& S = t.node(out).value;
    for (std::size_t i = 0; i < G.size(); ++i) t.node(a).grad.data[i] += G.data[i] * S.data[i] * (1.0 - S.data[i]);
  };
  return out;
}

/// [a | b] for equal row counts.
inline Var concat_cols(Var a, Var b) {
  Tape& t = detail::tape_of(a, b, "concat_cols");
  const Tensor2& A = t.value(a);
  const Tensor2& B = t.value(b);
  if (A.rows != B.rows) throw ShapeError("concat_cols: shape mismatch " + A.shape() + " vs " + B.shape());
  Tensor2 C(A.rows, A.cols + B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C(i, j) = A(i, j);
    for (std::size_t j = 0; j < B.cols; ++j) C(i, A.cols + j) = B(i, j);
  }
  Var out = t.push(std::move(C), "concat_cols", {});
  t.node(out).backward = [&t, a, b, out] {
    const Tensor2& G = t.node(out).grad;
    Tensor2& GA = t.node(a).grad;
    Tensor2& GB = t.node(b).grad;
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < GA.cols; ++j) GA(i, j) += G(i, j);
      for (std::size_t j = 0; j < GB.cols; ++j) GB(i, j) += G(i, GA.cols + j);
    }
  };
  return out;
}

/// Columns [c0, c1).
inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
  Tape& t = detail::tape_of(a, "slice_cols");
  const Tensor2& A = t.value(a);
  if (c0 > c1 || c1 > A.cols) {
    throw ShapeError("slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c1) + ") out of " + A.shape());
  }
  Tensor2 C(A.rows, c1 - c0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = c0; j < c1; ++j) C(i, j - c0) = A(i, j);
  }
  Var out = t.push(std::move(C), "slice_cols", {});
  t.node(out).backward = [&t, a, out, c0] {
    const Tensor2& G = t.node(out).grad;
    for (std::size_t i = 0; i < G.rows; ++i) {
      for (std::size_t j = 0; j < G.cols; ++j) t.node(a).grad(i, c0 + j) += G(i, j);
    }
  };
  return out;
}

/// Row k of the result is row idx[k] of a.
inline Var gather_rows(Var a, std::vector<std::size_t> idx) {
  Tape& t = detail::tape_of(a, "gather_rows");
  const Tensor2& A = t.value(a);
  Tensor2 C(idx.size(), A.cols);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= A.rows) {
      throw IndexError("gather_rows: row " + std::to_string(idx[k]) + " out of " + A.shape());
    }
    for (std::size_t j = 0; j < A.cols; ++j) C(k, j) = A(idx[k], j);
  }
  Var out = t.push(std::move(C), "gather_rows", {});
  t.node(out).backward = [&t, a, out, idx = std::move(idx)] {
    const Tensor2& G = t.node(out).grad;
    Tensor2& GA = t.node(a).grad;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t j = 0; j < G.cols; ++j) GA(idx[k], j) += G(k, j);
    }
  };
  return out;
}

/// Componentwise maximum of the rows sharing a segment id. Empty segments
/// produce zero rows. Ties go to the lowest row index; the gradient of each
/// output component flows only to its winning row.
inline Var max_aggregate(Var a, std::span<const std::size_t> segment, std::size_t n_segments) {
  Tape& t = detail::tape_of(a, "max_aggregate");
  const Tensor2& A = t.value(a);
  if (segment.size() != A.rows) {
    throw ShapeError("max_aggregate: " + std::to_string(segment.size()) + " segment ids for " + A.shape());
  }
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> arg(n_segments * A.cols, kNone);
  for (std::size_t r = 0; r < A.rows; ++r) {
    if (segment[r] >= n_segments) {
      throw IndexError("max_aggregate: segment " + std::to_string(segment[r]) + " out of range " +
                       std::to_string(n_segments));
    }
    for (std::size_t j = 0; j < A.cols; ++j) {
      std::size_t& w = arg[segment[r] * A.cols + j];
      if (w == kNone || A(r, j) > A(w, j)) w = r;
    }
  }
  Tensor2 C(n_segments, A.cols);
  for (std::size_t s = 0; s < n_segments; ++s) {
    for (std::size_t j = 0; j < A.cols; ++j) {
      const std::size_t w = arg[s * A.cols + j];
      if (w != kNone) C(s, j) = A(w, j);
    }
  }
  for (std::size_t w : arg) t.record_branch(w);
  Var out = t.push(std::move(C), "max_aggregate", {});
  t.node(out).backward = [&t, a, out, arg = std::move(arg)] {
    const Tensor2& G = t.node(out).grad;
    Tensor2& GA = t.node(a).grad;
    for (std::size_t s = 0; s < G.rows; ++s) {
      for (std::size_t j = 0; j < G.cols; ++j) {
        const std::size_t w = arg[s * G.cols + j];
        if (w != kNone) GA(w, j) += G(s, j);
      }
    }
  };
  return out;
}

/// Sum of all entries, as (1x1).
inline Var sum(Var a) {
  Tape& t = detail::tape_of(a, "sum");
  double s = 0.0;
  for (double x : t.value(a).data) s += x;
  Var out = t.push(Tensor2(1, 1, s), "sum", {});
  t.node(out).backward = [&t, a, out] {
    const double g = t.node(out).grad.data[0];
    for (double& x : t.node(a).grad.data) x += g;
  };
  return out;
}

/// Linear combination of (1x1) scalars.
inline Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.empty() || terms.size() != weights.size()) throw ShapeError("weighted_sum: term/weight count mismatch");
  Tape& t = detail::tape_of(terms[0], "weighted_sum");
  double s = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    t.check_owner(terms[k], "weighted_sum");
    const Tensor2& v = t.value(terms[k]);
    if (v.size() != 1) throw ShapeError("weighted_sum: term is " + v.shape());
    s += weights[k] * v.data[0];
  }
  Var out = t.push(Tensor2(1, 1, s), "weighted_sum", {});
  t.node(out).backward = [&t, out, terms = std::vector<Var>(terms.begin(), terms.end()),
                          weights = std::vector<double>(weights.begin(), weights.end())] {
    const double g = t.node(out).grad.data[0];
    for (std::size_t k = 0; k < terms.size(); ++k) t.node(terms[k]).grad.data[0] += weights[k] * g;
  };
  return out;
}

}  // namespace ops

// ---- losses ----

inline constexpr double kProbabilityClamp = 1e-12;
inline constexpr double kHuberDelta = 1.0;

/// Binary cross entropy -(1/n) Σ [y ln p + (1 - y) ln(1 - p)] over an (n x 1)
/// column of probabilities, with p clamped to [1e-12, 1 - 1e-12].
inline Var bce_loss(Var p, std::span<const double> y) {
  Tape& t = ops::detail::tape_of(p, "bce_loss");
  const Tensor2& P = t.value(p);
  if (P.cols != 1 || P.rows != y.size()) {
    throw ShapeError("bce_loss: predictions " + P.shape() + " vs " + std::to_string(y.size()) + " labels");
  }
  const double n = static_cast<double>(std::max<std::size_t>(y.size(), 1));
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double raw = P.data[i];
    const double q = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    t.record_branch(q == raw ? 0x42u : 0x43u);
    s -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  Var out = t.push(Tensor2(1, 1, s / n), "bce_loss", {});
  t.node(out).backward = [&t, p, out, y = std::vector<double>(y.begin(), y.end()), n] {
    const double g = t.node(out).grad.data[0];
    const Tensor2& P = t.node(p).value;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double raw = P.data[i];
      if (raw < kProbabilityClamp || raw > 1.0 - kProbabilityClamp) continue;
      t.node(p).grad.data[i] += g * (-(y[i] / raw) + (1.0 - y[i]) / (1.0 - raw)) / n;
    }
  };
  return out;
}

inline double huber(double x, double delta = kHuberDelta) {
  const double ax = std::abs(x);
  return ax <= delta ? 0.5 * x * x : delta * (ax - 0.5 * delta);
}

inline double huber_derivative(double x, double delta = kHuberDelta) {
  return std::abs(x) <= delta ? x : (x > 0.0 ? delta : -delta);
}

/// Σ_i mask_i Σ_k huber(pred_ik - target_ik) / n over (n x 5) boxes, where n
/// is the number of rows (hits), masked or not.
inline Var huber_loss(Var pred, const Tensor2& target, std::span<const double> mask, double delta = kHuberDelta) {
  Tape& t = ops::detail::tape_of(pred, "huber_loss");
  if (!(delta > 0.0)) throw DomainError("huber_loss: delta must be positive");
  const Tensor2& P = t.value(pred);
  ops::detail::require_same(P, target, "huber_loss");
  if (mask.size() != P.rows) {
    throw ShapeError("huber_loss: " + std::to_string(mask.size()) + " mask entries for " + P.shape());
  }
  const double n = static_cast<double>(std::max<std::size_t>(P.rows, 1));
  double s = 0.0;
  for (std::size_t i = 0; i < P.rows; ++i) {
    if (mask[i] == 0.0) continue;
    for (std::size_t k = 0; k < P.cols; ++k) {
      const double x = P(i, k) - target(i, k);
      t.record_branch(std::abs(x) <= delta ? 0x48u : 0x4cu);
      s += mask[i] * huber(x, delta);
    }
  }
  Var out = t.push(Tensor2(1, 1, s / n), "huber_loss", {});
  t.node(out).backward = [&t, pred, out, target, mask = std::vector<double>(mask.begin(), mask.end()), delta, n] {
    const double g = t.node(out).grad.data[0];
    const Tensor2& P = t.node(pred).value;
    Tensor2& GP = t.node(pred).grad;
    for (std::size_t i = 0; i < P.rows; ++i) {
      if (mask[i] == 0.0) continue;
      for (std::size_t k = 0; k < P.cols; ++k) {
        GP(i, k) += g * mask[i] * huber_derivative(P(i, k) - target(i, k), delta) / n;
      }
    }
  };
  return out;
}

/// (1/n) Σ_i Σ_k ((pred_ik - truth_ik) / scale_k)^2 over (n x 2) rows of
/// (p_T, ε_T). An empty set yields 0.
inline Var mse_tracking_loss(Var pred, const Tensor2& truth, std::array<double, 2> scales) {
  Tape& t = ops::detail::tape_of(pred, "mse_tracking_loss");
  const Tensor2& P = t.value(pred);
  ops::detail::require_same(P, truth, "mse_tracking_loss");
  if (P.cols != 2) throw ShapeError("mse_tracking_loss: expected 2 columns, got " + P.shape());
  if (!(scales[0] > 0.0) || !(scales[1] > 0.0)) throw DomainError("mse_tracking_loss: scales must be positive");
  const double n = static_cast<double>(std::max<std::size_t>(P.rows, 1));
  double s = 0.0;
  for (std::size_t i = 0; i < P.rows; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double r = (P(i, k) - truth(i, k)) / scales[k];
      s += r * r;
    }
  }
  Var out = t.push(Tensor2(1, 1, s / n), "mse_tracking_loss", {});
  t.node(out).backward = [&t, pred, out, truth, scales, n] {
    const double g = t.node(out).grad.data[0];
    const Tensor2& P = t.node(pred).value;
    for (std::size_t i = 0; i < P.rows; ++i) {
      for (std::size_t k = 0; k < 2; ++k) {
        t.node(pred).grad(i, k) += g * 2.0 * (P(i, k) - truth(i, k)) / (scales[k] * scales[k] * n);
      }
    }
  };
  return out;
}

// ---- dense networks ----

enum class Activation { kIdentity, kRelu, kSigmoid };

struct MlpSpec {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Activation hidden = Activation::kRelu;
  Activation output = Activation::kIdentity;

  void validate(const std::string& what) const {
    if (widths.size() < 2) throw ConfigError(what + ": an MLP needs at least 2 widths");
    for (auto w : widths) {
      if (w == 0) throw ConfigError(what + ": widths must be positive");
    }
  }
  /// in -> hidden x n_hidden -> out
  static MlpSpec make(std::size_t in, std::size_t hidden, std::size_t n_hidden, std::size_t out,
                      Activation output = Activation::kIdentity) {
    MlpSpec s;
    s.widths.push_back(in);
    for (std::size_t k = 0; k < n_hidden; ++k) s.widths.push_back(hidden);
    s.widths.push_back(out);
    s.output = output;
    return s;
  }
};

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::kRelu: return ops::relu(x);
    case Activation::kSigmoid: return ops::sigmoid(x);
    case Activation::kIdentity: break;
  }
  return x;
}

/// Affine layers W_l (in x out), b_l (1 x out).
struct Mlp {
  MlpSpec spec;
  std::vector<Parameter> weights;
  std::vector<Parameter> biases;

  Mlp() = default;
  Mlp(MlpSpec s, const std::string& name) : spec(std::move(s)) {
    spec.validate(name);
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
      weights.emplace_back(name + ".W" + std::to_string(l), Tensor2(spec.widths[l], spec.widths[l + 1]));
      biases.emplace_back(name + ".b" + std::to_string(l), Tensor2(1, spec.widths[l + 1]));
    }
  }

  /// Weights uniform in ±1/√fan_in, biases zero.
  void initialize(std::mt19937_64& rng) {
    for (auto& w : weights) {
      const double lim = 1.0 / std::sqrt(static_cast<double>(w.value.rows));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (double& x : w.value.data) x = u(rng);
    }
    for (auto& b : biases) std::fill(b.value.data.begin(), b.value.data.end(), 0.0);
  }

  void zero() {
    for (auto* p : parameters()) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
  }

  Var forward(Tape& t, Var x) {
    const Tensor2& X = t.value(x);
    if (X.cols != spec.widths.front()) {
      throw ShapeError("mlp_forward: input " + X.shape() + " vs first width " + std::to_string(spec.widths.front()));
    }
    Var h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      h = ops::add_row(ops::matmul(h, t.param(weights[l])), t.param(biases[l]));
      h = activate(h, l + 1 == weights.size() ? spec.output : spec.hidden);
    }
    return h;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
};

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor2> m;
  std::vector<Tensor2> v;
};

/// Bias-corrected Adam with decoupled weight decay: p <- p (1 - lr wd), then
/// p <- p - lr m_hat / (sqrt(v_hat) + eps).
inline void adam_step(const AdamConfig& cfg, AdamState& st, std::span<Parameter* const> params) {
  if (st.m.empty() && st.step == 0) {
    for (auto* p : params) {
      st.m.emplace_back(p->value.rows, p->value.cols);
      st.v.emplace_back(p->value.rows, p->value.cols);
    }
  }
  if (st.m.size() != params.size() || st.v.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(st.m.size()) + " moment sets for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = *params[k];
    if (!p.grad.same_shape(p.value) || !st.m[k].same_shape(p.value) || !st.v[k].same_shape(p.value)) {
      throw ShapeError("adam_step: " + p.name + " value " + p.value.shape() + " grad " + p.grad.shape() +
                       " moments " + st.m[k].shape());
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      double& m = st.m[k].data[i];
      double& v = st.v[k].data[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      p.value.data[i] = p.value.data[i] * decay - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    }
  }
}

// ---- finite-difference verification ----

struct GradCheckOptions {
  double h = 1e-6;
  double rel_tol = 1e-4;
  std::size_t max_entries_per_tensor = std::numeric_limits<std::size_t>::max();
  std::uint64_t sample_seed = 0;
  int max_step_increases = 2;  // retries with h * step_factor^k for unresolved entries
  double step_factor = 10.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;  // over resolvable entries
  std::string worst;           // "name[index]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;        // compared by relative error
  std::size_t unresolved = 0;     // gradient below what the difference quotient can resolve
  std::size_t unresolved_failures = 0;
  std::size_t skipped_kinks = 0;
  bool ok(double rel_tol = 1e-4) const { return max_rel_error < rel_tol && unresolved_failures == 0 && checked > 0; }
};

/// Compares tape gradients with central differences for every entry of every
/// parameter (or a seeded sample of max_entries_per_tensor per tensor).
/// Entries whose perturbed evaluations take a different branch pattern than
/// the base point (a ReLU, Max, clamp or Huber switch inside [x - h, x + h])
/// are skipped and counted. The difference quotient carries rounding noise
/// r = ε_mach max|f| / h; an entry whose gradient is below r / rel_tol is
/// retried with larger steps (stopping at a branch change), and if still
/// unresolved is required to agree within 100 r instead of rel_tol.
inline GradCheckResult gradient_check(std::span<Parameter* const> params,
                                      const std::function<Var(Tape&)>& loss_fn,
                                      const GradCheckOptions& opt = {}) {
  for (auto* p : params) p->zero_grad();
  Tape tape;
  const Var L = loss_fn(tape);
  const std::uint64_t base_sig = tape.kink_signature();
  tape.backward(L);

  auto eval = [&](std::uint64_t& sig) {
    Tape t;
    const Var l = loss_fn(t);
    sig = t.kink_signature();
    return t.value(l).data[0];
  };

  GradCheckResult res;
  std::mt19937_64 rng(opt.sample_seed);
  for (auto* p : params) {
    std::vector<std::size_t> entries(p->value.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (entries.size() > opt.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t i : entries) {
      const double x0 = p->value.data[i];
      const double analytic = p->grad.data[i];
      double h = opt.h, numeric = 0.0, noise = 0.0;
      bool kink = false, resolved = false;
      for (int step = 0; step <= opt.max_step_increases; ++step, h *= opt.step_factor) {
        std::uint64_t sp = 0, sm = 0;
        p->value.data[i] = x0 + h;
        const double fp = eval(sp);
        p->value.data[i] = x0 - h;
        const double fm = eval(sm);
        p->value.data[i] = x0;
        if (sp != base_sig || sm != base_sig) {
          kink = step == 0;
          break;
        }
        numeric = (fp - fm) / (2.0 * h);
        noise = std::numeric_limits<double>::epsilon() * std::max({std::abs(fp), std::abs(fm), 1.0}) / h;
        resolved = std::max(std::abs(numeric), std::abs(analytic)) * opt.rel_tol >= noise;
        if (resolved) break;
      }
      if (kink) {
        ++res.skipped_kinks;
        continue;
      }
      if (!resolved) {
        ++res.unresolved;
        if (std::abs(numeric - analytic) > 100.0 * noise) ++res.unresolved_failures;
        continue;
      }
      const double rel = std::abs(numeric - analytic) / std::max(std::abs(numeric), std::abs(analytic));
      ++res.checked;
      if (res.worst.empty() || rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = p->name + "[" + std::to_string(i) + "]";
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace conftrack
