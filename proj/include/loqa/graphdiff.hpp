// Copyright 2026 The LOQA Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode automatic differentiation over dense row-batched matrices.
//
// Every node on a Tape holds a finite double matrix. Primitives record a
// reverse rule only when at least one input requires a gradient, so purely
// constant sub-graphs (rewards, critic targets) cost nothing in backward().
// Batched quantities are laid out as (batch rows) x (feature columns).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loqa::graphdiff {

using Matrix = Eigen::MatrixXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid for the
/// tape generation it was created in.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var parameter(Matrix value) { return push("parameter", std::move(value), true, {}); }
  /// Leaf that never receives a gradient.
  Var constant(Matrix value) { return push("constant", std::move(value), false, {}); }
  Var constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

  /// Records the result of a primitive. `backward` is dropped unless one of
  /// `inputs` requires a gradient.
  Var record(const char* op, Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id_].requires_grad;
    }
    check_finite(op, value);
    return push(op, std::move(value), needs, needs ? std::move(backward) : Backward{});
  }
  Var record(const char* op, Matrix value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id_].requires_grad;
    }
    check_finite(op, value);
    return push(op, std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Matrix& value(const Var& v) const {
    check_owned(v);
    return nodes_[v.id_].value;
  }
  bool requires_grad(const Var& v) const {
    check_owned(v);
    return nodes_[v.id_].requires_grad;
  }
  /// Gradient accumulated by the last backward(); zero if nothing reached v.
  Matrix grad(const Var& v) const {
    check_owned(v);
    const Node& n = nodes_[v.id_];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds `g` into the gradient slot of `v` (used by reverse rules).
  void accumulate(const Var& v, const Matrix& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  template <typename Expr>
  void accumulate_expr(const Var& v, const Expr& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a scalar loss. Earlier gradients are discarded.
  void backward(const Var& loss) {
    check_owned(loss);
    const Node& root = nodes_[loss.id_];
    if (root.value.rows() != 1 || root.value.cols() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(root.value));
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id_].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      // Copy: the reverse rule may touch nodes_ storage through accumulate().
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }

  /// Forgets every node. Outstanding Vars become invalid.
  void clear() {
    nodes_.clear();
    stopped_.clear();
    replay_pos_ = 0;
    ++generation_;
  }

  /// Stop-gradient values seen on this tape, in call order. A tape given a
  /// replay list hands those values back instead, which lets a numerical
  /// check hold every stop_gradient at its base-point value.
  Matrix stopped(const Matrix& live) {
    if (replay_) {
      if (replay_pos_ >= replay_->size()) throw std::logic_error("graphdiff: stop_gradient replay ran out of values");
      const Matrix& v = (*replay_)[replay_pos_++];
      if (v.rows() != live.rows() || v.cols() != live.cols()) throw ShapeError("graphdiff: stop_gradient replay shape mismatch");
      return v;
    }
    stopped_.push_back(live);
    return live;
  }
  const std::vector<Matrix>& stopped_values() const { return stopped_; }
  void replay_stopped(const std::vector<Matrix>* values) {
    replay_ = values;
    replay_pos_ = 0;
  }

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }
  std::string op_name(const Var& v) const { return nodes_[v.id_].op; }

 private:
  struct Node {
    const char* op;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(const char* op, Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{op, std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1, generation_);
  }

  void check_owned(const Var& v) const {
    if (v.tape_ != this || v.generation_ != generation_ || v.id_ >= nodes_.size()) {
      throw std::logic_error("graphdiff: Var used with a foreign or cleared tape");
    }
  }

  static void check_finite(const char* op, const Matrix& m) {
    // A single NaN or inf poisons the sum; the sum is cheaper than allFinite().
    if (!std::isfinite(m.sum()) && !m.allFinite()) {
      throw NumericError(std::string(op) + ": produced a non-finite value (shape " + shape_str(m) + ")");
    }
  }

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 0;
  std::vector<Matrix> stopped_;
  const std::vector<Matrix>* replay_ = nullptr;
  std::size_t replay_pos_ = 0;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }
inline double Var::scalar() const {
  const Matrix& m = value();
  if (m.size() != 1) throw ShapeError("scalar: expected 1x1, got " + shape_str(m));
  return m(0, 0);
}
inline bool Var::requires_grad() const { return tape_->requires_grad(*this); }

namespace detail {

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.value()) + " and " +
                     shape_str(b.value()) + " differ");
  }
}

inline void require_same_tape(const char* op, const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands live on different tapes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
  detail::require_same_tape("add", a, b);
  detail::require_same_shape("add", a, b);
  return a.tape().record("add", a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_tape("sub", a, b);
  detail::require_same_shape("sub", a, b);
  return a.tape().record("sub", a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate_expr(b, -g);
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_tape("mul", a, b);
  detail::require_same_shape("mul", a, b);
  return a.tape().record("mul", a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate_expr(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate_expr(b, g.cwiseProduct(a.value()));
  });
}

/// Elementwise product with a constant matrix.
inline Var mul(const Var& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    throw ShapeError("mul: shapes " + shape_str(a.value()) + " and " + shape_str(c) + " differ");
  }
  return a.tape().record("mul_const", a.value().cwiseProduct(c), {a},
                         [a, c](Tape& t, const Matrix& g) { t.accumulate_expr(a, g.cwiseProduct(c)); });
}

inline Var scale(const Var& a, double s) {
  return a.tape().record("scale", a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate_expr(a, g * s); });
}

inline Var add_scalar(const Var& a, double s) {
  return a.tape().record("add_scalar", (a.value().array() + s).matrix(), {a},
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator-(const Var& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Linear algebra and layout

/// (n x k) * (k x m). Doubles as matrix-vector product when m == 1.
inline Var matmul(const Var& a, const Var& b) {
  detail::require_same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shapes " + shape_str(a.value()) + " and " + shape_str(b.value()) + " are incompatible");
  }
  Matrix out = a.value() * b.value();
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate_expr(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate_expr(b, a.value().transpose() * g);
  });
}

/// Adds a 1 x m row to every row of an n x m matrix.
inline Var add_row(const Var& x, const Var& row) {
  detail::require_same_tape("add_row", x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: cannot broadcast " + shape_str(row.value()) + " onto " + shape_str(x.value()));
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  return x.tape().record("add_row", std::move(out), {x, row}, [x, row](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (row.requires_grad()) t.accumulate_expr(row, g.colwise().sum());
  });
}

/// Dense affine map x*W + b.
inline Var affine(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

/// Column-wise concatenation of matrices sharing a row count.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat: row counts " + std::to_string(rows) + " and " + std::to_string(p.rows()) + " differ");
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return parts.front().tape().record(
      "concat", std::move(out), parts, [kept, offsets](Tape& t, const Matrix& g) {
        for (std::size_t i = 0; i < kept.size(); ++i) {
          if (kept[i].requires_grad()) t.accumulate_expr(kept[i], g.middleCols(offsets[i], kept[i].cols()));
        }
      });
}
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_str(x.value()));
  }
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return x.tape().record("slice_cols", x.value().middleCols(start, count), {x},
                         [x, start, count, rows, cols](Tape& t, const Matrix& g) {
                           Matrix full = Matrix::Zero(rows, cols);
                           full.middleCols(start, count) = g;
                           t.accumulate(x, full);
                         });
}

/// Per-row selection: out(r, 0) = x(r, index[r]).
inline Var pick(const Var& x, std::span<const int> index) {
  if (static_cast<Eigen::Index>(index.size()) != x.rows()) {
    throw ShapeError("pick: " + std::to_string(index.size()) + " indices for " + shape_str(x.value()));
  }
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    if (c < 0 || c >= x.cols()) throw ShapeError("pick: index " + std::to_string(c) + " outside " + shape_str(x.value()));
    out(r, 0) = x.value()(r, c);
  }
  std::vector<int> idx(index.begin(), index.end());
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return x.tape().record("pick", std::move(out), {x}, [x, idx, rows, cols](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) full(r, idx[static_cast<std::size_t>(r)]) = g(r, 0);
    t.accumulate(x, full);
  });
}

/// Repeats an n x 1 column into n x m.
inline Var repeat_cols(const Var& col, Eigen::Index m) {
  if (col.cols() != 1) throw ShapeError("repeat_cols: expected a column, got " + shape_str(col.value()));
  Matrix out = col.value().replicate(1, m);
  return col.tape().record("repeat_cols", std::move(out), {col},
                           [col](Tape& t, const Matrix& g) { t.accumulate_expr(col, g.rowwise().sum()); });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

inline Var sigmoid(const Var& x) {
  Matrix y = x.value().unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  Matrix yk = y;
  return x.tape().record("sigmoid", std::move(y), {x}, [x, yk](Tape& t, const Matrix& g) {
    t.accumulate_expr(x, g.cwiseProduct(yk.cwiseProduct((1.0 - yk.array()).matrix())));
  });
}

inline Var tanh(const Var& x) {
  Matrix y = x.value().array().tanh().matrix();
  Matrix yk = y;
  return x.tape().record("tanh", std::move(y), {x}, [x, yk](Tape& t, const Matrix& g) {
    t.accumulate_expr(x, g.cwiseProduct((1.0 - yk.array().square()).matrix()));
  });
}

inline Var relu(const Var& x) {
  Matrix y = x.value().cwiseMax(0.0);
  return x.tape().record("relu", std::move(y), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate_expr(x, (x.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

inline Var exp(const Var& x) {
  Matrix y = x.value().array().exp().matrix();
  Matrix yk = y;
  return x.tape().record("exp", std::move(y), {x},
                         [x, yk](Tape& t, const Matrix& g) { t.accumulate_expr(x, g.cwiseProduct(yk)); });
}

inline Var log(const Var& x) {
  if ((x.value().array() <= 0.0).any()) throw NumericError("log: non-positive input");
  return x.tape().record("log", x.value().array().log().matrix(), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate_expr(x, g.cwiseQuotient(x.value()));
  });
}

/// Huber loss with delta = 1, elementwise.
inline Var huber(const Var& x) {
  Matrix y = x.value().unaryExpr([](double v) {
    const double a = std::abs(v);
    return a <= 1.0 ? 0.5 * v * v : a - 0.5;
  });
  return x.tape().record("huber", std::move(y), {x}, [x](Tape& t, const Matrix& g) {
    Matrix d = x.value().unaryExpr([](double v) { return std::abs(v) <= 1.0 ? v : (v > 0 ? 1.0 : -1.0); });
    t.accumulate_expr(x, g.cwiseProduct(d));
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizers (each row is one distribution)

inline Matrix row_logsumexp(const Matrix& x) {
  Eigen::VectorXd m = x.rowwise().maxCoeff();
  Eigen::VectorXd s = (x.colwise() - m).array().exp().rowwise().sum().log().matrix();
  return (m + s);
}

inline Var logsumexp_rows(const Var& x) {
  Matrix lse = row_logsumexp(x.value());
  Matrix soft = (x.value().colwise() - lse.col(0)).array().exp().matrix();
  return x.tape().record("logsumexp", std::move(lse), {x}, [x, soft](Tape& t, const Matrix& g) {
    t.accumulate_expr(x, (soft.array().colwise() * g.col(0).array()).matrix());
  });
}

inline Var log_softmax(const Var& x) {
  const Matrix lse = row_logsumexp(x.value());
  Matrix y = x.value().colwise() - lse.col(0);
  Matrix soft = y.array().exp().matrix();
  return x.tape().record("log_softmax", std::move(y), {x}, [x, soft](Tape& t, const Matrix& g) {
    Eigen::VectorXd gs = g.rowwise().sum();
    t.accumulate_expr(x, g - Matrix(soft.array().colwise() * gs.array()));
  });
}

inline Var softmax(const Var& x) {
  const Matrix lse = row_logsumexp(x.value());
  Matrix y = (x.value().colwise() - lse.col(0)).array().exp().matrix();
  Matrix yk = y;
  return x.tape().record("softmax", std::move(y), {x}, [x, yk](Tape& t, const Matrix& g) {
    Eigen::VectorXd dot = g.cwiseProduct(yk).rowwise().sum();
    t.accumulate_expr(x, yk.cwiseProduct(Matrix(g.colwise() - dot)));
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& x) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return x.tape().record("sum", Matrix::Constant(1, 1, x.value().sum()), {x}, [x, rows, cols](Tape& t, const Matrix& g) {
    t.accumulate(x, Matrix::Constant(rows, cols, g(0, 0)));
  });
}

inline Var mean(const Var& x) {
  if (x.value().size() == 0) throw ShapeError("mean: empty input");
  const Eigen::Index rows = x.rows(), cols = x.cols();
  const double n = static_cast<double>(x.value().size());
  return x.tape().record("mean", Matrix::Constant(1, 1, x.value().sum() / n), {x},
                         [x, rows, cols, n](Tape& t, const Matrix& g) {
                           t.accumulate(x, Matrix::Constant(rows, cols, g(0, 0) / n));
                         });
}

/// Sum over columns: n x m -> n x 1.
inline Var sum_cols(const Var& x) {
  const Eigen::Index cols = x.cols();
  return x.tape().record("sum_cols", x.value().rowwise().sum(), {x},
                         [x, cols](Tape& t, const Matrix& g) { t.accumulate_expr(x, g.replicate(1, cols)); });
}

/// Reverse discounted cumulative sum along columns (time):
/// out(r, k) = sum_{m >= k} gamma^(m-k) x(r, m).
inline Var discounted_cumsum(const Var& x, double gamma) {
  Matrix out = x.value();
  for (Eigen::Index k = out.cols() - 1; k-- > 0;) out.col(k) += gamma * out.col(k + 1);
  return x.tape().record("discounted_cumsum", std::move(out), {x}, [x, gamma](Tape& t, const Matrix& g) {
    // Adjoint is the forward discounted cumsum.
    Matrix gx = g;
    for (Eigen::Index k = 1; k < gx.cols(); ++k) gx.col(k) += gamma * gx.col(k - 1);
    t.accumulate(x, gx);
  });
}

// ---------------------------------------------------------------------------
// DiCE support

/// Identity forward, zero contribution backward.
inline Var stop_gradient(const Var& x) { return x.tape().constant(x.tape().stopped(x.value())); }

/// exp(x - stop_gradient(x)): exactly 1 forward, d/dx = 1 backward.
inline Var magic_box(const Var& x) { return exp(sub(x, stop_gradient(x))); }

// ---------------------------------------------------------------------------
// Finite-difference oracle

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of f against central differences,
/// coordinate by coordinate, with rel = |a - c| / (|a| + |c| + 1e-12).
/// stop_gradient outputs are pinned to their values at the base point, so
/// surrogate objectives (magic box) are differentiated the way the tape does.
/// f must build the same graph for every input.
inline GradCheckResult finite_diff_check_detailed(const ScalarFn& f, std::vector<Matrix> params, double eps = 1e-4) {
  std::vector<Matrix> analytic, pinned;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& p : params) vars.push_back(tape.parameter(p));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
    pinned = tape.stopped_values();
  }
  auto eval = [&](const std::vector<Matrix>& ps) {
    Tape tape;
    tape.replay_stopped(&pinned);
    std::vector<Var> vars;
    for (const Matrix& p : ps) vars.push_back(tape.constant(p));
    return f(tape, vars).scalar();
  };
  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].size(); ++j) {
      const double orig = params[i].data()[j];
      params[i].data()[j] = orig + eps;
      const double up = eval(params);
      params[i].data()[j] = orig - eps;
      const double down = eval(params);
      params[i].data()[j] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i].data()[j];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (rel > res.max_rel_error) res = {rel, i, j, a, numeric};
    }
  }
  return res;
}

inline double finite_diff_check(const ScalarFn& f, std::vector<Matrix> params, double eps = 1e-4) {
  return finite_diff_check_detailed(f, std::move(params), eps).max_rel_error;
}

}  // namespace loqa::graphdiff
