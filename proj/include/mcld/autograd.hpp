#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Nodes are stored in
// creation order, which is a valid topological order, so backward() walks the
// tape once in reverse. Leaves bound to a parameter store report their
// gradients through collect_param_grads().

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "mcld/error.hpp"

namespace mcld {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Mat<T>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat<T>&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Mat<T> m) {
    Node n;
    n.value = std::move(m);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Leaf referencing storage owned elsewhere (a parameter). The referenced
  /// matrix must outlive the tape.
  Var<T> leaf(const Mat<T>* external, int param_index, bool trainable) {
    Node n;
    n.external = external;
    n.param = param_index;
    n.needs_grad = grad_enabled_ && trainable;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Records an op. `backward` receives the output gradient and must
  /// accumulate into its inputs through accumulate().
  Var<T> push(Mat<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& v : inputs) needs = needs || nodes_[v.id].needs_grad;
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat<T>& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  template <typename Expr>
  void accumulate(Var<T> v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var<T> root) {
    require_shape(root.rows() == 1 && root.cols() == 1, "backward() needs a scalar root");
    accumulate(root, Mat<T>::Ones(1, 1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Adds leaf gradients into `grads`, indexed by parameter index.
  void collect_param_grads(std::vector<Mat<T>>& grads) const {
    for (const Node& n : nodes_) {
      if (n.param < 0 || !n.has_grad) continue;
      grads[n.param] += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<T> value;
    const Mat<T>* external = nullptr;
    Mat<T> grad;
    bool has_grad = false;
    bool needs_grad = false;
    int param = -1;
    Backward backward;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

namespace ag {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Mat<T> out = a.value() * b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Mat<T>& g) {
    if (t.needs_grad(a.id)) t.accumulate(a, g * t.value(b.id).transpose());
    if (t.needs_grad(b.id)) t.accumulate(b, t.value(a.id).transpose() * g);
  });
}

/// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  require_shape(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Mat<T> out = a.value() * b.value().transpose();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Mat<T>& g) {
    if (t.needs_grad(a.id)) t.accumulate(a, g * t.value(b.id));
    if (t.needs_grad(b.id)) t.accumulate(b, g.transpose() * t.value(a.id));
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  Mat<T> out = a.value() + b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Mat<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shapes differ");
  Mat<T> out = a.value() - b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Mat<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shapes differ");
  Mat<T> out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Mat<T>& g) {
    if (t.needs_grad(a.id)) t.accumulate(a, g.cwiseProduct(t.value(b.id)));
    if (t.needs_grad(b.id)) t.accumulate(b, g.cwiseProduct(t.value(a.id)));
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Mat<T> out = a.value() * s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape<T>& t, const Mat<T>& g) { t.accumulate(a, g * s); });
}

/// a (n x d) + row (1 x d), broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row: row must be 1 x cols");
  Mat<T> out = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(out), {a, row}, [a, row](Tape<T>& t, const Mat<T>& g) {
    t.accumulate(a, g);
    if (t.needs_grad(row.id)) t.accumulate(row, g.colwise().sum());
  });
}

/// a (n x d) scaled per row by col (n x 1).
template <typename T>
Var<T> mul_col(Var<T> a, Var<T> col) {
  require_shape(col.cols() == 1 && col.rows() == a.rows(), "mul_col: col must be rows x 1");
  Mat<T> out = a.value().array().colwise() * col.value().col(0).array();
  return a.tape->push(std::move(out), {a, col}, [a, col](Tape<T>& t, const Mat<T>& g) {
    if (t.needs_grad(a.id)) {
      Mat<T> ga = g.array().colwise() * t.value(col.id).col(0).array();
      t.accumulate(a, ga);
    }
    if (t.needs_grad(col.id)) {
      Mat<T> gc = g.cwiseProduct(t.value(a.id)).rowwise().sum();
      t.accumulate(col, gc);
    }
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Mat<T> out = a.value().cwiseMax(T(0));
  return a.tape->push(std::move(out), {a}, [a](Tape<T>& t, const Mat<T>& g) {
    Mat<T> ga = (t.value(a.id).array() > T(0)).select(g, T(0));
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Mat<T> out = (T(1) / (T(1) + (-a.value().array()).exp())).matrix();
  Mat<T> y = out;
  return a.tape->push(std::move(out), {a}, [a, y](Tape<T>& t, const Mat<T>& g) {
    t.accumulate(a, (g.array() * y.array() * (T(1) - y.array())).matrix());
  });
}

/// log(1 + exp(x)), evaluated without overflow.
template <typename T>
Var<T> softplus(Var<T> a) {
  const Mat<T>& x = a.value();
  Mat<T> out = x.unaryExpr([](T v) { return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); });
  return a.tape->push(std::move(out), {a}, [a](Tape<T>& t, const Mat<T>& g) {
    Mat<T> s = t.value(a.id).unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
    t.accumulate(a, g.cwiseProduct(s));
  });
}

template <typename T>
Var<T> exp(Var<T> a) {
  Mat<T> out = a.value().array().exp().matrix();
  Mat<T> y = out;
  return a.tape->push(std::move(out), {a}, [a, y](Tape<T>& t, const Mat<T>& g) { t.accumulate(a, g.cwiseProduct(y)); });
}

/// max(a, lo) elementwise; the gradient is blocked where the floor is active.
template <typename T>
Var<T> clamp_min(Var<T> a, T lo) {
  Mat<T> out = a.value().cwiseMax(lo);
  return a.tape->push(std::move(out), {a}, [a, lo](Tape<T>& t, const Mat<T>& g) {
    Mat<T> ga = (t.value(a.id).array() > lo).select(g, T(0));
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> square(Var<T> a) {
  Mat<T> out = a.value().array().square().matrix();
  return a.tape->push(std::move(out), {a}, [a](Tape<T>& t, const Mat<T>& g) {
    t.accumulate(a, (T(2) * g.array() * t.value(a.id).array()).matrix());
  });
}

/// Row-wise softmax with max subtraction.
template <typename T>
Var<T> softmax_rows(Var<T> a) {
  const Mat<T>& x = a.value();
  Mat<T> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  Mat<T> y = out;
  return a.tape->push(std::move(out), {a}, [a, y](Tape<T>& t, const Mat<T>& g) {
    Mat<T> gy = g.cwiseProduct(y);
    Mat<T> ga = gy - (y.array().colwise() * gy.rowwise().sum().array()).matrix();
    t.accumulate(a, ga);
  });
}

/// Row-wise layer normalization with affine gamma/beta (1 x d each).
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  const Mat<T>& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  require_shape(gamma.cols() == d && beta.cols() == d && gamma.rows() == 1 && beta.rows() == 1,
                "layer_norm: gamma/beta must be 1 x d");
  Mat<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = xv.row(r).mean();
    const T var = (xv.row(r).array() - mean).square().mean();
    inv_std[r] = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std[r];
  }
  Mat<T> out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return x.tape->push(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Tape<T>& t, const Mat<T>& g) {
    if (t.needs_grad(gamma.id)) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
    if (t.needs_grad(beta.id)) t.accumulate(beta, g.colwise().sum());
    if (t.needs_grad(x.id)) {
      Mat<T> gxhat = g.array().rowwise() * t.value(gamma.id).row(0).array();
      const T d = static_cast<T>(gxhat.cols());
      Mat<T> gx(gxhat.rows(), gxhat.cols());
      for (Eigen::Index r = 0; r < gxhat.rows(); ++r) {
        const T mean_g = gxhat.row(r).sum() / d;
        const T mean_gx = gxhat.row(r).dot(xhat.row(r)) / d;
        gx.row(r) = inv_std[r] * (gxhat.row(r).array() - mean_g - xhat.row(r).array() * mean_gx);
      }
      t.accumulate(x, gx);
    }
  });
}

/// Mean over rows: (n x d) -> (1 x d).
template <typename T>
Var<T> mean_rows(Var<T> a) {
  Mat<T> out = a.value().colwise().mean();
  const Eigen::Index n = a.rows();
  return a.tape->push(std::move(out), {a}, [a, n](Tape<T>& t, const Mat<T>& g) {
    Mat<T> ga = g.replicate(n, 1) / static_cast<T>(n);
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  Mat<T> out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(std::move(out), {a}, [a, r, c](Tape<T>& t, const Mat<T>& g) {
    t.accumulate(a, Mat<T>::Constant(r, c, g(0, 0)));
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Euclidean norm of consecutive column groups: (n x g*m) -> (n x m).
/// The subgradient at a zero-length group is taken as 0.
template <typename T>
Var<T> group_norms(Var<T> a, int group) {
  const Mat<T>& x = a.value();
  require_shape(x.cols() % group == 0, "group_norms: columns not divisible by group");
  const Eigen::Index m = x.cols() / group;
  Mat<T> out(x.rows(), m);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index j = 0; j < m; ++j) out(r, j) = x.row(r).segment(j * group, group).norm();
  Mat<T> y = out;
  return a.tape->push(std::move(out), {a}, [a, y, group](Tape<T>& t, const Mat<T>& g) {
    const Mat<T>& xv = t.value(a.id);
    Mat<T> ga = Mat<T>::Zero(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r)
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        if (y(r, j) == T(0)) continue;
        ga.row(r).segment(j * group, group) = xv.row(r).segment(j * group, group) * (g(r, j) / y(r, j));
      }
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Mat<T> out = a.value().middleCols(start, count);
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(std::move(out), {a}, [a, start, count, r, c](Tape<T>& t, const Mat<T>& g) {
    Mat<T> ga = Mat<T>::Zero(r, c);
    ga.middleCols(start, count) = g;
    t.accumulate(a, ga);
  });
}

template <typename T>
Var<T> slice_rows(Var<T> a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Mat<T> out = a.value().middleRows(start, count);
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(std::move(out), {a}, [a, start, count, r, c](Tape<T>& t, const Mat<T>& g) {
    Mat<T> ga = Mat<T>::Zero(r, c);
    ga.middleRows(start, count) = g;
    t.accumulate(a, ga);
  });
}

namespace detail {

template <typename T>
Var<T> concat_impl(const std::vector<Var<T>>& parts, bool along_cols) {
  require_shape(!parts.empty(), "concat: no inputs");
  Tape<T>* tape = parts.front().tape;
  Eigen::Index rows = parts.front().rows(), cols = parts.front().cols();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (along_cols) {
      require_shape(p.rows() == rows, "concat_cols: row counts differ");
      total += p.cols();
    } else {
      require_shape(p.cols() == cols, "concat_rows: column counts differ");
      total += p.rows();
    }
  }
  Mat<T> out = along_cols ? Mat<T>(rows, total) : Mat<T>(total, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    if (along_cols) {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    } else {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    }
  }
  bool needs = false;
  for (const auto& p : parts) needs = needs || tape->needs_grad(p.id);
  if (!needs) return tape->constant(std::move(out));
  std::vector<Var<T>> captured = parts;
  auto backward = [captured, along_cols](Tape<T>& t, const Mat<T>& g) {
    Eigen::Index o = 0;
    for (const auto& p : captured) {
      if (along_cols) {
        const Eigen::Index w = t.value(p.id).cols();
        if (t.needs_grad(p.id)) t.accumulate(p, g.middleCols(o, w));
        o += w;
      } else {
        const Eigen::Index h = t.value(p.id).rows();
        if (t.needs_grad(p.id)) t.accumulate(p, g.middleRows(o, h));
        o += h;
      }
    }
  };
  // One node scatters into every part; any differentiable part serves as
  // the anchor that marks the node as needing a gradient.
  Var<T> anchor = parts.front();
  for (const auto& p : parts)
    if (tape->needs_grad(p.id)) anchor = p;
  return tape->push(std::move(out), {anchor}, backward);
}

}  // namespace detail

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  return detail::concat_impl(parts, true);
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  return detail::concat_impl(parts, false);
}

}  // namespace ag
}  // namespace mcld
