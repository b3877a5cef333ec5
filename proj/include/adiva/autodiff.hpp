#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Graph is a tape: every op appends a node holding its value and a closure
// that scatters the upstream gradient into its parents. Graphs are built per
// step and thrown away; parameters enter as leaves created from a ParamTable.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "adiva/error.hpp"
#include "adiva/tensor.hpp"

namespace adiva::ad {

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Mat& value() const;
  const Mat& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Mat& upstream)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value) { return push(std::move(value), false, nullptr); }
  Var leaf(Mat value) { return push(std::move(value), true, nullptr); }

  /// Appends an op result. The node requires grad iff any parent does; when
  /// none does the closure is dropped.
  Var emit(Mat value, std::initializer_list<Var> parents, Backward backward) {
    bool rg = false;
    for (const Var& p : parents) rg = rg || nodes_[p.id()].requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : nullptr);
  }

  Var emit(Mat value, const std::vector<Var>& parents, Backward backward) {
    bool rg = false;
    for (const Var& p : parents) rg = rg || nodes_[p.id()].requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : nullptr);
  }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  const Mat& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  void accumulate(std::size_t id, const Mat& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Runs the reverse sweep from a 1x1 root.
  void backward(Var root) {
    if (root.rows() != 1 || root.cols() != 1) throw shape_mismatch("backward root must be 1x1");
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grad.resize(0, 0);
    }
    accumulate(root.id(), Mat::Ones(1, 1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Mat value, bool rg, Backward backward) {
    nodes_.push_back(Node{std::move(value), Mat(), rg, false, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
};

inline const Mat& Var::value() const { return graph_->value(id_); }
inline const Mat& Var::grad() const { return graph_->grad(id_); }
inline bool Var::requires_grad() const { return graph_->requires_grad(id_); }

namespace detail {
inline void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw shape_mismatch(std::string(op) + ": " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear ops

inline Var add(Var a, Var b) {
  detail::same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, const Mat& up) {
    g.accumulate(ia, up);
    g.accumulate(ib, up);
  });
}

inline Var sub(Var a, Var b) {
  detail::same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit(a.value() - b.value(), {a, b}, [ia, ib](Graph& g, const Mat& up) {
    g.accumulate(ia, up);
    g.accumulate(ib, -up);
  });
}

inline Var mul(Var a, Var b) {
  detail::same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Graph& g, const Mat& up) {
    g.accumulate(ia, up.cwiseProduct(g.value(ib)));
    g.accumulate(ib, up.cwiseProduct(g.value(ia)));
  });
}

inline Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.graph()->emit(a.value() * s, {a}, [ia, s](Graph& g, const Mat& up) { g.accumulate(ia, up * s); });
}

inline Var add_scalar(Var a, double s) {
  const std::size_t ia = a.id();
  return a.graph()->emit(a.value().array() + s, {a}, [ia](Graph& g, const Mat& up) { g.accumulate(ia, up); });
}

/// Elementwise product with a constant matrix (dropout masks, selectors).
inline Var mul_const(Var a, const Mat& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw shape_mismatch("mul_const: " + shape_str(a.value()) + " vs " + shape_str(c));
  const std::size_t ia = a.id();
  return a.graph()->emit(a.value().cwiseProduct(c), {a}, [ia, c](Graph& g, const Mat& up) { g.accumulate(ia, up.cwiseProduct(c)); });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw shape_mismatch("matmul: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit(a.value() * b.value(), {a, b}, [ia, ib](Graph& g, const Mat& up) {
    if (g.requires_grad(ia)) g.accumulate(ia, up * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * up);
  });
}

inline Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.graph()->emit(a.value().transpose(), {a}, [ia](Graph& g, const Mat& up) { g.accumulate(ia, up.transpose()); });
}

/// a (N x c) + row (1 x c) broadcast over rows.
inline Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw shape_mismatch("add_row: " + shape_str(a.value()) + " + " + shape_str(row.value()));
  const std::size_t ia = a.id(), ir = row.id();
  Mat v = a.value().rowwise() + row.value().row(0);
  return a.graph()->emit(std::move(v), {a, row}, [ia, ir](Graph& g, const Mat& up) {
    g.accumulate(ia, up);
    g.accumulate(ir, up.colwise().sum());
  });
}

/// a (N x c) * row (1 x c) broadcast over rows.
inline Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw shape_mismatch("mul_row: " + shape_str(a.value()) + " * " + shape_str(row.value()));
  const std::size_t ia = a.id(), ir = row.id();
  Mat v = a.value().array().rowwise() * row.value().row(0).array();
  return a.graph()->emit(std::move(v), {a, row}, [ia, ir](Graph& g, const Mat& up) {
    if (g.requires_grad(ia)) {
      Mat ga = up.array().rowwise() * g.value(ir).row(0).array();
      g.accumulate(ia, ga);
    }
    if (g.requires_grad(ir)) g.accumulate(ir, up.cwiseProduct(g.value(ia)).colwise().sum());
  });
}

/// a (N x c) - col (N x 1) broadcast over columns.
inline Var sub_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw shape_mismatch("sub_col: " + shape_str(a.value()) + " - " + shape_str(col.value()));
  const std::size_t ia = a.id(), ic = col.id();
  Mat v = a.value().colwise() - col.value().col(0);
  return a.graph()->emit(std::move(v), {a, col}, [ia, ic](Graph& g, const Mat& up) {
    g.accumulate(ia, up);
    g.accumulate(ic, -up.rowwise().sum());
  });
}

/// Stacks `times` copies of `a` vertically.
inline Var tile_rows(Var a, Index times) {
  const Index r = a.rows();
  Mat v(r * times, a.cols());
  for (Index t = 0; t < times; ++t) v.middleRows(t * r, r) = a.value();
  const std::size_t ia = a.id();
  return a.graph()->emit(std::move(v), {a}, [ia, r, times](Graph& g, const Mat& up) {
    Mat acc = Mat::Zero(r, up.cols());
    for (Index t = 0; t < times; ++t) acc += up.middleRows(t * r, r);
    g.accumulate(ia, acc);
  });
}

/// Repeats every row `times` times consecutively (row i -> rows i*times .. i*times+times-1).
inline Var repeat_rows(Var a, Index times) {
  const Index r = a.rows();
  Mat v(r * times, a.cols());
  for (Index i = 0; i < r; ++i)
    for (Index t = 0; t < times; ++t) v.row(i * times + t) = a.value().row(i);
  const std::size_t ia = a.id();
  return a.graph()->emit(std::move(v), {a}, [ia, r, times](Graph& g, const Mat& up) {
    Mat acc = Mat::Zero(r, up.cols());
    for (Index i = 0; i < r; ++i)
      for (Index t = 0; t < times; ++t) acc.row(i) += up.row(i * times + t);
    g.accumulate(ia, acc);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw shape_mismatch("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw shape_mismatch("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  std::vector<std::pair<std::size_t, Index>> spans;
  Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return parts.front().graph()->emit(std::move(v), parts, [spans](Graph& g, const Mat& up) {
    for (const auto& [id, start] : spans) {
      if (g.requires_grad(id)) g.accumulate(id, up.middleCols(start, g.value(id).cols()));
    }
  });
}

inline Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw shape_mismatch("slice_cols out of range");
  const std::size_t ia = a.id();
  const Index total = a.cols();
  return a.graph()->emit(a.value().middleCols(start, count), {a}, [ia, start, count, total](Graph& g, const Mat& up) {
    Mat full = Mat::Zero(up.rows(), total);
    full.middleCols(start, count) = up;
    g.accumulate(ia, full);
  });
}

/// Row-major reshape.
inline Var reshape(Var a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw shape_mismatch("reshape: size mismatch");
  const std::size_t ia = a.id();
  const Index r0 = a.rows(), c0 = a.cols();
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return a.graph()->emit(std::move(v), {a}, [ia, r0, c0](Graph& g, const Mat& up) {
    g.accumulate(ia, Eigen::Map<const Mat>(up.data(), r0, c0));
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

inline Var exp(Var a) {
  const std::size_t ia = a.id();
  Mat v = a.value().array().exp();
  Mat keep = v;
  return a.graph()->emit(std::move(v), {a}, [ia, keep](Graph& g, const Mat& up) { g.accumulate(ia, up.cwiseProduct(keep)); });
}

inline Var log(Var a) {
  const std::size_t ia = a.id();
  return a.graph()->emit(a.value().array().log(), {a}, [ia](Graph& g, const Mat& up) {
    g.accumulate(ia, up.cwiseQuotient(g.value(ia)));
  });
}

inline Var abs(Var a) {
  const std::size_t ia = a.id();
  return a.graph()->emit(a.value().cwiseAbs(), {a}, [ia](Graph& g, const Mat& up) {
    Mat s = g.value(ia).unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    g.accumulate(ia, up.cwiseProduct(s));
  });
}

inline Var square(Var a) {
  const std::size_t ia = a.id();
  return a.graph()->emit(a.value().array().square(), {a}, [ia](Graph& g, const Mat& up) {
    g.accumulate(ia, 2.0 * up.cwiseProduct(g.value(ia)));
  });
}

/// Exact (erf) GELU.
inline Var gelu(Var a) {
  const std::size_t ia = a.id();
  Mat v = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); });
  return a.graph()->emit(std::move(v), {a}, [ia](Graph& g, const Mat& up) {
    Mat d = g.value(ia).unaryExpr([](double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    });
    g.accumulate(ia, up.cwiseProduct(d));
  });
}

inline Var leaky_relu(Var a, double slope = 0.2) {
  const std::size_t ia = a.id();
  Mat v = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return a.graph()->emit(std::move(v), {a}, [ia, slope](Graph& g, const Mat& up) {
    Mat d = g.value(ia).unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    g.accumulate(ia, up.cwiseProduct(d));
  });
}

inline Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  Mat v = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Mat keep = v;
  return a.graph()->emit(std::move(v), {a}, [ia, keep](Graph& g, const Mat& up) {
    g.accumulate(ia, up.cwiseProduct(keep.cwiseProduct((1.0 - keep.array()).matrix())));
  });
}

// ---------------------------------------------------------------------------
// Row-wise reductions and normalizations

/// (x - mean) / sqrt(var + eps) per row, population variance.
inline Var row_standardize(Var a, double eps = 1e-5) {
  const Mat& x = a.value();
  const Index c = x.cols();
  Mat y(x.rows(), c);
  Vec inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).mean();
    const double var = (x.row(i).array() - m).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    y.row(i) = (x.row(i).array() - m) * inv_std(i);
  }
  Mat ykeep = y;
  const std::size_t ia = a.id();
  return a.graph()->emit(std::move(y), {a}, [ia, ykeep, inv_std](Graph& g, const Mat& up) {
    Mat gx(up.rows(), up.cols());
    for (Index i = 0; i < up.rows(); ++i) {
      const double mg = up.row(i).mean();
      const double mgy = up.row(i).dot(ykeep.row(i)) / static_cast<double>(up.cols());
      gx.row(i) = inv_std(i) * (up.row(i).array() - mg - ykeep.row(i).array() * mgy);
    }
    g.accumulate(ia, gx);
  });
}

inline Mat softmax_rows(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

inline Var row_softmax(Var a) {
  Mat y = softmax_rows(a.value());
  Mat ykeep = y;
  const std::size_t ia = a.id();
  return a.graph()->emit(std::move(y), {a}, [ia, ykeep](Graph& g, const Mat& up) {
    Vec dots = up.cwiseProduct(ykeep).rowwise().sum();
    Mat gx = ykeep.cwiseProduct((up.colwise() - dots));
    g.accumulate(ia, gx);
  });
}

/// log sum_j exp(a_ij), one value per row (N x 1).
inline Var row_logsumexp(Var a) {
  const Mat& x = a.value();
  Mat v(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    v(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  const std::size_t ia = a.id();
  return a.graph()->emit(std::move(v), {a}, [ia](Graph& g, const Mat& up) {
    Mat sm = softmax_rows(g.value(ia));
    g.accumulate(ia, sm.array().colwise() * up.col(0).array());
  });
}

/// max_j a_ij (N x 1). Gradient routes to the first maximizing column.
inline Var row_max(Var a) {
  const Mat& x = a.value();
  Mat v(x.rows(), 1);
  std::vector<Index> arg(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    Index j = 0;
    v(i, 0) = x.row(i).maxCoeff(&j);
    arg[static_cast<std::size_t>(i)] = j;
  }
  const std::size_t ia = a.id();
  const Index cols = x.cols();
  return a.graph()->emit(std::move(v), {a}, [ia, arg, cols](Graph& g, const Mat& up) {
    Mat gx = Mat::Zero(up.rows(), cols);
    for (Index i = 0; i < up.rows(); ++i) gx(i, arg[static_cast<std::size_t>(i)]) = up(i, 0);
    g.accumulate(ia, gx);
  });
}

/// Rows scaled to unit L2 norm. A zero row is an error, not a division by zero.
inline Var row_l2_normalize(Var a) {
  const Mat& x = a.value();
  Vec norms = x.rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i) {
    if (norms(i) == 0.0) throw numeric_error("ZeroVector", "cannot L2-normalize a zero row (row " + std::to_string(i) + ")");
  }
  Mat y = x.array().colwise() / norms.array();
  Mat ykeep = y;
  const std::size_t ia = a.id();
  return a.graph()->emit(std::move(y), {a}, [ia, ykeep, norms](Graph& g, const Mat& up) {
    Vec dots = up.cwiseProduct(ykeep).rowwise().sum();
    Mat gx = (up - (ykeep.array().colwise() * dots.array()).matrix()).array().colwise() / norms.array();
    g.accumulate(ia, gx);
  });
}

/// Row-wise dot product of equally shaped a, b (N x 1).
inline Var row_dot(Var a, Var b) {
  detail::same_shape(a, b, "row_dot");
  const std::size_t ia = a.id(), ib = b.id();
  Mat v = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.graph()->emit(std::move(v), {a, b}, [ia, ib](Graph& g, const Mat& up) {
    if (g.requires_grad(ia)) g.accumulate(ia, g.value(ib).array().colwise() * up.col(0).array());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).array().colwise() * up.col(0).array());
  });
}

/// Row sums (N x 1).
inline Var row_sum(Var a) {
  const std::size_t ia = a.id();
  const Index cols = a.cols();
  Mat v = a.value().rowwise().sum();
  return a.graph()->emit(std::move(v), {a}, [ia, cols](Graph& g, const Mat& up) {
    g.accumulate(ia, up.col(0).replicate(1, cols));
  });
}

inline Var sum(Var a) {
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return a.graph()->emit(std::move(v), {a}, [ia, r, c](Graph& g, const Mat& up) { g.accumulate(ia, Mat::Constant(r, c, up(0, 0))); });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// ---------------------------------------------------------------------------
// Block-diagonal (segmented) products over stacked per-sample blocks.

/// X: (n*a) x k, Y: (n*b) x k. Returns stacked X_s Y_s^T, shape (n*a) x b.
inline Var seg_matmul_abt(Var x, Var y, Index blocks) {
  if (blocks <= 0 || x.rows() % blocks || y.rows() % blocks || x.cols() != y.cols()) {
    throw shape_mismatch("seg_matmul_abt: " + shape_str(x.value()) + ", " + shape_str(y.value()));
  }
  const Index ra = x.rows() / blocks, rb = y.rows() / blocks;
  Mat v(x.rows(), rb);
  for (Index s = 0; s < blocks; ++s) {
    v.middleRows(s * ra, ra).noalias() = x.value().middleRows(s * ra, ra) * y.value().middleRows(s * rb, rb).transpose();
  }
  const std::size_t ix = x.id(), iy = y.id();
  return x.graph()->emit(std::move(v), {x, y}, [ix, iy, ra, rb, blocks](Graph& g, const Mat& up) {
    const Mat& xv = g.value(ix);
    const Mat& yv = g.value(iy);
    if (g.requires_grad(ix)) {
      Mat gx(xv.rows(), xv.cols());
      for (Index s = 0; s < blocks; ++s) gx.middleRows(s * ra, ra).noalias() = up.middleRows(s * ra, ra) * yv.middleRows(s * rb, rb);
      g.accumulate(ix, gx);
    }
    if (g.requires_grad(iy)) {
      Mat gy(yv.rows(), yv.cols());
      for (Index s = 0; s < blocks; ++s)
        gy.middleRows(s * rb, rb).noalias() = up.middleRows(s * ra, ra).transpose() * xv.middleRows(s * ra, ra);
      g.accumulate(iy, gy);
    }
  });
}

/// X: (n*a) x b, Y: (n*b) x k. Returns stacked X_s Y_s, shape (n*a) x k.
inline Var seg_matmul_ab(Var x, Var y, Index blocks) {
  if (blocks <= 0 || x.rows() % blocks || y.rows() % blocks || x.cols() != y.rows() / blocks) {
    throw shape_mismatch("seg_matmul_ab: " + shape_str(x.value()) + ", " + shape_str(y.value()));
  }
  const Index ra = x.rows() / blocks, rb = y.rows() / blocks;
  Mat v(x.rows(), y.cols());
  for (Index s = 0; s < blocks; ++s) {
    v.middleRows(s * ra, ra).noalias() = x.value().middleRows(s * ra, ra) * y.value().middleRows(s * rb, rb);
  }
  const std::size_t ix = x.id(), iy = y.id();
  return x.graph()->emit(std::move(v), {x, y}, [ix, iy, ra, rb, blocks](Graph& g, const Mat& up) {
    const Mat& xv = g.value(ix);
    const Mat& yv = g.value(iy);
    if (g.requires_grad(ix)) {
      Mat gx(xv.rows(), xv.cols());
      for (Index s = 0; s < blocks; ++s) gx.middleRows(s * ra, ra).noalias() = up.middleRows(s * ra, ra) * yv.middleRows(s * rb, rb).transpose();
      g.accumulate(ix, gx);
    }
    if (g.requires_grad(iy)) {
      Mat gy(yv.rows(), yv.cols());
      for (Index s = 0; s < blocks; ++s)
        gy.middleRows(s * rb, rb).noalias() = xv.middleRows(s * ra, ra).transpose() * up.middleRows(s * ra, ra);
      g.accumulate(iy, gy);
    }
  });
}

}  // namespace adiva::ad
