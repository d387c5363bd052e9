/*
 * Minimal eager reverse-mode autodiff over Eigen double matrices.
 *
 * A Tape owns a growing list of nodes; every op computes its value
 * immediately and registers a backward closure that scatters the incoming
 * gradient to its parents. One tape per optimization step, then discarded.
 * Scalars are 1x1 matrices. backward() seeds the root with 1.
 */
#pragma once

#include "connlearn/common.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace connlearn::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  Var input(Matrix v) { return push(std::move(v), false, {}); }
  Var param(Matrix v) { return push(std::move(v), true, {}); }

  // Custom node escape hatch (used by the log-det loss nodes). The backward
  // closure reads this node's grad via out_grad(out) and accumulates into
  // parents via accumulate().
  Var make_node(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backward) {
    Var out = push(std::move(value), requires_grad, {});
    if (requires_grad && backward) {
      nodes_[static_cast<std::size_t>(out.id)].backward = [out, backward](Tape& tp) {
        backward(tp, tp.nodes_[static_cast<std::size_t>(out.id)].grad);
      };
    }
    return out;
  }

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  // Adds g into v's gradient accumulator (no-op for non-grad nodes).
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    n.grad += g;
  }

  // Zero matrix if the node never received gradient.
  Matrix grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.has_grad) return n.grad;
    return Matrix::Zero(n.value.rows(), n.value.cols());
  }

  // Reverse sweep from a scalar root.
  void backward(Var root) {
    Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.value.rows() != 1 || r.value.cols() != 1) throw InvalidInput("backward: root must be a 1x1 scalar");
    if (!r.requires_grad) return;  // nothing upstream depends on params
    if (!r.has_grad) {
      r.grad = Matrix::Zero(1, 1);
      r.has_grad = true;
    }
    r.grad(0, 0) += 1.0;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.has_grad && n.backward) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Ops below are free functions; they need push/node access.
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void(Tape&)> backward;
  };

  template <typename Back>
  Var op(const std::vector<Var>& parents, Matrix value, Back&& back) {
    bool rg = false;
    for (const Var& p : parents) rg = rg || requires_grad(p);
    Var out = push(std::move(value), rg, {});
    if (rg) {
      nodes_[static_cast<std::size_t>(out.id)].backward = [out, back](Tape& tp) {
        back(tp, tp.nodes_[static_cast<std::size_t>(out.id)].grad);
      };
    }
    return out;
  }

 private:
  std::vector<Node> nodes_;

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, false, std::move(backward)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }
};

namespace detail {
inline Tape& tape_of(Var a) {
  if (!a.valid()) throw InvalidInput("autodiff: invalid var");
  return *a.tape;
}
inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw InvalidInput("autodiff: vars from different tapes");
  return tape_of(a);
}
}  // namespace detail

// ---- arithmetic -------------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  return t.op({a, b}, t.value(a) + t.value(b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  return t.op({a, b}, t.value(a) - t.value(b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

// Broadcast-add a 1 x cols row vector to every row.
inline Var add_rowvec(Var a, Var r) {
  Tape& t = detail::same_tape(a, r);
  if (t.value(r).rows() != 1 || t.value(r).cols() != t.value(a).cols())
    throw InvalidInput("add_rowvec: shape mismatch");
  Matrix v = t.value(a).rowwise() + t.value(r).row(0);
  return t.op({a, r}, std::move(v), [a, r](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(r, g.colwise().sum());
  });
}

inline Var scale(Var a, double c) {
  Tape& t = detail::tape_of(a);
  return t.op({a}, t.value(a) * c, [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a, g * c); });
}

inline Var add_scalar(Var a, double s) {
  Tape& t = detail::tape_of(a);
  Matrix v = (t.value(a).array() + s).matrix();
  return t.op({a}, std::move(v), [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

inline Var hadamard(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Matrix v = t.value(a).cwiseProduct(t.value(b));
  return t.op({a, b}, std::move(v), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

inline Var hadamard_const(Var a, Matrix mask) {
  Tape& t = detail::tape_of(a);
  Matrix v = t.value(a).cwiseProduct(mask);
  return t.op({a}, std::move(v),
              [a, mask = std::move(mask)](Tape& tp, const Matrix& g) { tp.accumulate(a, g.cwiseProduct(mask)); });
}

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  if (t.value(a).cols() != t.value(b).rows()) throw InvalidInput("matmul: inner dimension mismatch");
  Matrix v = t.value(a) * t.value(b);
  return t.op({a, b}, std::move(v), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g * tp.value(b).transpose());
    tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

// value = M * b for a constant left factor (e.g. a normalized adjacency).
inline Var matmul_const_left(Matrix m, Var b) {
  Tape& t = detail::tape_of(b);
  if (m.cols() != t.value(b).rows()) throw InvalidInput("matmul_const_left: inner dimension mismatch");
  Matrix v = m * t.value(b);
  return t.op({b}, std::move(v),
              [b, m = std::move(m)](Tape& tp, const Matrix& g) { tp.accumulate(b, m.transpose() * g); });
}

inline Var transpose(Var a) {
  Tape& t = detail::tape_of(a);
  return t.op({a}, t.value(a).transpose(), [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

// ---- nonlinearities ----------------------------------------------------------

inline Var relu(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix v = t.value(a).cwiseMax(0.0);
  return t.op({a}, std::move(v), [a](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, (x.array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

inline Var exp_(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix v = t.value(a).array().exp().matrix();
  return t.op({a}, v, [a, v](Tape& tp, const Matrix& g) { tp.accumulate(a, g.cwiseProduct(v)); });
}

inline Var log_(Var a) {
  Tape& t = detail::tape_of(a);
  if ((t.value(a).array() <= 0.0).any()) throw NumericError("log_: non-positive input");
  Matrix v = t.value(a).array().log().matrix();
  return t.op({a}, std::move(v),
              [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.cwiseQuotient(tp.value(a))); });
}

// Derivative clamped near zero so exact-zero inputs stay finite.
inline Var sqrt_(Var a) {
  Tape& t = detail::tape_of(a);
  if ((t.value(a).array() < 0.0).any()) throw NumericError("sqrt_: negative input");
  Matrix v = t.value(a).array().sqrt().matrix();
  return t.op({a}, v, [a, v](Tape& tp, const Matrix& g) {
    Matrix denom = v.cwiseMax(1e-12);
    tp.accumulate(a, (0.5 * g.array() / denom.array()).matrix());
  });
}

inline Var square(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix v = t.value(a).array().square().matrix();
  return t.op({a}, std::move(v),
              [a](Tape& tp, const Matrix& g) { tp.accumulate(a, 2.0 * g.cwiseProduct(tp.value(a))); });
}

inline Var softmax_rows(Var a) {
  Tape& t = detail::tape_of(a);
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    Eigen::ArrayXd e = (x.row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  return t.op({a}, y, [a, y](Tape& tp, const Matrix& g) {
    Matrix gx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      gx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
    tp.accumulate(a, gx);
  });
}

// Row-wise layer normalization with learnable gain/bias (1 x cols each).
inline Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5) {
  Tape& t = detail::same_tape(x, gamma);
  detail::same_tape(x, beta);
  const Matrix& xv = t.value(x);
  const Eigen::Index n = xv.rows(), d = xv.cols();
  if (t.value(gamma).rows() != 1 || t.value(gamma).cols() != d || t.value(beta).rows() != 1 ||
      t.value(beta).cols() != d)
    throw InvalidInput("layer_norm_rows: gamma/beta must be 1 x cols");

  Matrix xhat(n, d);
  Vector inv_sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(i) = is;
    xhat.row(i) = ((xv.row(i).array() - mu) * is).matrix();
  }
  Matrix v(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    v.row(i) = xhat.row(i).cwiseProduct(t.value(gamma).row(0)) + t.value(beta).row(0);
  return t.op({x, gamma, beta}, std::move(v), [x, gamma, beta, xhat, inv_sigma](Tape& tp, const Matrix& g) {
    const Eigen::Index n = xhat.rows(), d = xhat.cols();
    tp.accumulate(beta, g.colwise().sum());
    tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
    const Eigen::RowVectorXd gam = tp.value(gamma).row(0);
    Matrix gx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::RowVectorXd gy = g.row(i).cwiseProduct(gam);  // dL/dxhat
      const double m1 = gy.mean();
      const double m2 = gy.cwiseProduct(xhat.row(i)).mean();
      gx.row(i) = ((gy.array() - m1 - xhat.row(i).array() * m2) * inv_sigma(i)).matrix();
    }
    tp.accumulate(x, gx);
  });
}

// ---- reductions / reshaping ---------------------------------------------------

inline Var mean_rows(Var a) {
  Tape& t = detail::tape_of(a);
  const Matrix& x = t.value(a);
  Matrix v = x.colwise().mean();
  const double n = static_cast<double>(x.rows());
  return t.op({a}, std::move(v), [a, n](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, (Matrix::Ones(x.rows(), 1) * g) / n);
  });
}

inline Var row_sum(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix v = t.value(a).rowwise().sum();
  return t.op({a}, std::move(v), [a](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, g * Matrix::Ones(1, x.cols()));
  });
}

inline Var sum_all(Var a) {
  Tape& t = detail::tape_of(a);
  Matrix v(1, 1);
  v(0, 0) = t.value(a).sum();
  return t.op({a}, std::move(v), [a](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

inline Var mean_all(Var a) {
  Tape& t = detail::tape_of(a);
  const double n = static_cast<double>(t.value(a).size());
  Matrix v(1, 1);
  v(0, 0) = t.value(a).mean();
  return t.op({a}, std::move(v), [a, n](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    tp.accumulate(a, Matrix::Constant(x.rows(), x.cols(), g(0, 0) / n));
  });
}

inline Var slice_cols(Var a, Eigen::Index j0, Eigen::Index w) {
  Tape& t = detail::tape_of(a);
  const Matrix& x = t.value(a);
  if (j0 < 0 || w < 1 || j0 + w > x.cols()) throw InvalidInput("slice_cols: range out of bounds");
  Matrix v = x.middleCols(j0, w);
  return t.op({a}, std::move(v), [a, j0, w](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    gx.middleCols(j0, w) = g;
    tp.accumulate(a, gx);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: empty");
  Tape& t = detail::tape_of(parts.front());
  Eigen::Index rows = t.value(parts.front()).rows(), cols = 0;
  for (const Var& p : parts) {
    if (t.value(p).rows() != rows) throw InvalidInput("concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, t.value(p).cols()) = t.value(p);
    off += t.value(p).cols();
  }
  return t.op(parts, std::move(v), [parts](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      const Eigen::Index w = tp.value(p).cols();
      tp.accumulate(p, g.middleCols(off, w));
      off += w;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: empty");
  Tape& t = detail::tape_of(parts.front());
  Eigen::Index cols = t.value(parts.front()).cols(), rows = 0;
  for (const Var& p : parts) {
    if (t.value(p).cols() != cols) throw InvalidInput("concat_rows: column mismatch");
    rows += t.value(p).rows();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, t.value(p).rows()) = t.value(p);
    off += t.value(p).rows();
  }
  return t.op(parts, std::move(v), [parts](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      const Eigen::Index h = tp.value(p).rows();
      tp.accumulate(p, g.middleRows(off, h));
      off += h;
    }
  });
}

// Broadcast-multiply every row of a by the 1 x cols vector r.
inline Var mul_rowvec(Var a, Var r) {
  Tape& t = detail::same_tape(a, r);
  const Matrix& x = t.value(a);
  const Matrix& rv = t.value(r);
  if (rv.rows() != 1 || rv.cols() != x.cols()) throw InvalidInput("mul_rowvec: shape mismatch");
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v.row(i) = x.row(i).cwiseProduct(rv.row(0));
  return t.op({a, r}, std::move(v), [a, r](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(a);
    const Matrix& rv = tp.value(r);
    Matrix ga(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) ga.row(i) = g.row(i).cwiseProduct(rv.row(0));
    tp.accumulate(a, ga);
    tp.accumulate(r, g.cwiseProduct(x).colwise().sum());
  });
}

// Broadcast-divide every row of a by the 1 x cols vector r.
inline Var div_rowvec(Var a, Var r) {
  Tape& t = detail::same_tape(a, r);
  const Matrix& x = t.value(a);
  const Matrix& rv = t.value(r);
  if (rv.rows() != 1 || rv.cols() != x.cols()) throw InvalidInput("div_rowvec: shape mismatch");
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v.row(i) = x.row(i).cwiseQuotient(rv.row(0));
  return t.op({a, r}, v, [a, r, v](Tape& tp, const Matrix& g) {
    const Matrix& rv = tp.value(r);
    Matrix ga(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) ga.row(i) = g.row(i).cwiseQuotient(rv.row(0));
    tp.accumulate(a, ga);
    Matrix gr = Matrix::Zero(1, rv.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      gr.row(0) -= g.row(i).cwiseProduct(v.row(i)).cwiseQuotient(rv.row(0));
    tp.accumulate(r, gr);
  });
}

// Divide each row i of a by the scalar c(i, 0).
inline Var div_colvec(Var a, Var c) {
  Tape& t = detail::same_tape(a, c);
  const Matrix& x = t.value(a);
  const Matrix& cv = t.value(c);
  if (cv.cols() != 1 || cv.rows() != x.rows()) throw InvalidInput("div_colvec: c must be rows x 1");
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v.row(i) = x.row(i) / cv(i, 0);
  return t.op({a, c}, v, [a, c, v](Tape& tp, const Matrix& g) {
    const Matrix& cv = tp.value(c);
    Matrix ga(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) ga.row(i) = g.row(i) / cv(i, 0);
    tp.accumulate(a, ga);
    Matrix gc(cv.rows(), 1);
    for (Eigen::Index i = 0; i < cv.rows(); ++i) gc(i, 0) = -g.row(i).dot(v.row(i)) / cv(i, 0);
    tp.accumulate(c, gc);
  });
}

// ---- composites ----------------------------------------------------------------

inline Var linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

// L2-normalizes each row (cosine similarity prep).
inline Var normalize_rows(Var x, double tiny = 1e-12) {
  Var n = sqrt_(add_scalar(row_sum(square(x)), tiny));
  return div_colvec(x, n);
}

}  // namespace connlearn::ad
