#ifndef MAPGN_TENSOR_HPP
#define MAPGN_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mapgn/error.hpp"
#include "mapgn/rng.hpp"

namespace mapgn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using TokenId = std::int32_t;

// A trainable weight living outside any tape. Gradients from every tape the
// parameter is bound to accumulate into `grad`.
template <typename S>
struct Parameter {
  Matrix<S> value;
  Matrix<S> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename S>
class Tape;

// Lightweight handle to a node on a tape. Copying a Tensor copies the handle.
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<S>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<S>& tape() const { return *tape_; }
  int id() const { return id_; }

  const Matrix<S>& value() const { return tape_->value(id_); }
  const Matrix<S>& grad() const { return tape_->grad_of(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  S item() const { return value()(0, 0); }

 private:
  Tape<S>* tape_ = nullptr;
  int id_ = -1;
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << "[" << r << "x" << c << "]";
  return os.str();
}

template <typename S>
std::string shape_str(const Tensor<S>& t) {
  return shape_str(t.rows(), t.cols());
}

// Records operations in topological order; `backward` replays them in reverse.
// A tape and its tensors belong to one thread.
template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Disables recording of backward rules (inference).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Tensor<S> constant(Matrix<S> v) {
    Node n;
    n.own = std::move(v);
    nodes_.push_back(std::move(n));
    return {this, last_id()};
  }

  // Owned leaf that receives gradient.
  Tensor<S> variable(Matrix<S> v) {
    Node n;
    n.own = std::move(v);
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return {this, last_id()};
  }

  // Leaf bound to an external parameter; gradient lands in p.grad.
  Tensor<S> parameter(Parameter<S>& p) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    Node n;
    n.ext = &p.value;
    n.ext_grad = &p.grad;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return {this, last_id()};
  }

  Tensor<S> record(Matrix<S> value, std::initializer_list<Tensor<S>> inputs, BackwardFn fn) {
    bool rg = false;
    if (grad_enabled_) {
      for (const auto& t : inputs) {
        check_owner(t);
        rg = rg || requires_grad(t.id());
      }
    }
    return push(std::move(value), rg, std::move(fn));
  }

  Tensor<S> record(Matrix<S> value, const std::vector<Tensor<S>>& inputs, BackwardFn fn) {
    bool rg = false;
    if (grad_enabled_) {
      for (const auto& t : inputs) {
        check_owner(t);
        rg = rg || requires_grad(t.id());
      }
    }
    return push(std::move(value), rg, std::move(fn));
  }

  const Matrix<S>& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ext ? *n.ext : n.own;
  }

  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Gradient buffer, allocated as zeros on first access.
  Matrix<S>& grad_of(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    Matrix<S>& g = n.ext_grad ? *n.ext_grad : n.grad;
    const Matrix<S>& v = value(id);
    if (g.rows() != v.rows() || g.cols() != v.cols()) g.setZero(v.rows(), v.cols());
    return g;
  }
  const Matrix<S>& grad_of(int id) const { return const_cast<Tape*>(this)->grad_of(id); }

  // Adds `delta` into the gradient of `t` when it participates in differentiation.
  template <typename Expr>
  void accumulate(const Tensor<S>& t, const Expr& delta) {
    if (!requires_grad(t.id())) return;
    grad_of(t.id()).noalias() += delta;
  }

  void backward(const Tensor<S>& loss) {
    check_owner(loss);
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ContractError("backward: loss must be a scalar, got " + shape_str(loss));
    }
    if (swept_) throw ContractError("backward: tape has already been swept");
    swept_ = true;
    if (!requires_grad(loss.id())) return;
    grad_of(loss.id()).setOnes();
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || !n.backward) continue;
      if (n.grad.size() == 0) continue;  // no gradient flowed here
      n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void check_owner(const Tensor<S>& t) const {
    if (!t.valid() || &t.tape() != this) {
      throw ContractError("tensor does not belong to this tape");
    }
  }

 private:
  struct Node {
    Matrix<S> own;
    const Matrix<S>* ext = nullptr;
    Matrix<S>* ext_grad = nullptr;
    Matrix<S> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  int last_id() const { return static_cast<int>(nodes_.size()) - 1; }

  Tensor<S> push(Matrix<S> value, bool rg, BackwardFn fn) {
    Node n;
    n.own = std::move(value);
    n.requires_grad = rg;
    if (rg) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, last_id()};
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool swept_ = false;
};

namespace detail {

template <typename S>
Tape<S>& same_tape(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError("operands live on different tapes");
  }
  return a.tape();
}

[[noreturn]] inline void dim_error(const std::string& op, const std::string& detail) {
  throw DimensionError(op + ": shape mismatch " + detail);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b);
  if (a.cols() != b.rows()) detail::dim_error("matmul", shape_str(a) + " x " + shape_str(b));
  Matrix<S> out = a.value() * b.value();
  return tape.record(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    t.accumulate(a, g * b.value().transpose());
    t.accumulate(b, a.value().transpose() * g);
  });
}

// Elementwise sum of equal shapes, or bias-add when `b` is a single row.
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b);
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    Matrix<S> out = a.value() + b.value();
    return tape.record(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
      const Matrix<S>& g = t.grad_of(self);
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }
  if (b.rows() == 1 && a.cols() == b.cols()) {
    Matrix<S> out = a.value().rowwise() + b.value().row(0);
    return tape.record(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
      const Matrix<S>& g = t.grad_of(self);
      t.accumulate(a, g);
      t.accumulate(b, g.colwise().sum());
    });
  }
  detail::dim_error("add", shape_str(a) + " + " + shape_str(b));
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    detail::dim_error("sub", shape_str(a) + " - " + shape_str(b));
  }
  Matrix<S> out = a.value() - b.value();
  return tape.record(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

// Elementwise product of equal shapes.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    detail::dim_error("mul", shape_str(a) + " * " + shape_str(b));
  }
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return tape.record(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    t.accumulate(a, g.cwiseProduct(b.value()));
    t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

// Multiplies row i of `a` by the scalar `col(i, 0)`.
template <typename S>
Tensor<S> scale_rows(const Tensor<S>& a, const Tensor<S>& col) {
  Tape<S>& tape = detail::same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) {
    detail::dim_error("scale_rows", shape_str(a) + " by " + shape_str(col));
  }
  Matrix<S> out = col.value().col(0).asDiagonal() * a.value();
  return tape.record(std::move(out), {a, col}, [a, col](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    t.accumulate(a, col.value().col(0).asDiagonal() * g);
    t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Matrix<S> out = a.value() * c;
  return a.tape().record(std::move(out), {a}, [a, c](Tape<S>& t, int self) {
    t.accumulate(a, t.grad_of(self) * c);
  });
}

// 1 - a, elementwise.
template <typename S>
Tensor<S> one_minus(const Tensor<S>& a) {
  Matrix<S> out = (S(1) - a.value().array()).matrix();
  return a.tape().record(std::move(out), {a}, [a](Tape<S>& t, int self) {
    t.accumulate(a, -t.grad_of(self));
  });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  Matrix<S> out = a.value().transpose();
  return a.tape().record(std::move(out), {a}, [a](Tape<S>& t, int self) {
    t.accumulate(a, t.grad_of(self).transpose());
  });
}

// Reinterprets the row-major element sequence with a new shape.
template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.size()) {
    detail::dim_error("reshape", shape_str(a) + " -> " + shape_str(rows, cols));
  }
  Matrix<S> out = Eigen::Map<const Matrix<S>>(a.value().data(), rows, cols);
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return a.tape().record(std::move(out), {a}, [a, r0, c0](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    t.accumulate(a, Eigen::Map<const Matrix<S>>(g.data(), r0, c0));
  });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape<S>& t, int self) {
    const S g = t.grad_of(self)(0, 0);
    t.accumulate(a, Matrix<S>::Constant(a.rows(), a.cols(), g));
  });
}

// ---------------------------------------------------------------------------
// Activations

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Matrix<S> out = a.value().array().tanh().matrix();
  return a.tape().record(std::move(out), {a}, [a](Tape<S>& t, int self) {
    const Matrix<S>& y = t.value(self);
    t.accumulate(a, t.grad_of(self).cwiseProduct((S(1) - y.array().square()).matrix()));
  });
}

template <typename S>
Matrix<S> sigmoid_values(const Matrix<S>& x) {
  Matrix<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S v = x.data()[i];
    if (v >= 0) {
      y.data()[i] = S(1) / (S(1) + std::exp(-v));
    } else {
      const S e = std::exp(v);
      y.data()[i] = e / (S(1) + e);
    }
  }
  return y;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Matrix<S> out = sigmoid_values(a.value());
  return a.tape().record(std::move(out), {a}, [a](Tape<S>& t, int self) {
    const Matrix<S>& y = t.value(self);
    t.accumulate(a, t.grad_of(self).cwiseProduct((y.array() * (S(1) - y.array())).matrix()));
  });
}

// Row-wise softmax. When `mask` is non-empty (same shape, nonzero = keep),
// masked entries get probability exactly 0. Every row needs one kept entry.
template <typename S>
Matrix<S> softmax_rows_values(const Matrix<S>& x, const Matrix<S>& mask = {}) {
  const bool masked = mask.size() != 0;
  Matrix<S> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!masked || mask(r, c) != 0) mx = std::max(mx, x(r, c));
    }
    S z = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const S e = (!masked || mask(r, c) != 0) ? std::exp(x(r, c) - mx) : S(0);
      y(r, c) = e;
      z += e;
    }
    y.row(r) /= z;
  }
  return y;
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a, const Matrix<S>& mask = {}) {
  if (mask.size() != 0 && (mask.rows() != a.rows() || mask.cols() != a.cols())) {
    detail::dim_error("softmax_rows", shape_str(a) + " with mask " + shape_str(mask.rows(), mask.cols()));
  }
  Matrix<S> out = softmax_rows_values(a.value(), mask);
  return a.tape().record(std::move(out), {a}, [a](Tape<S>& t, int self) {
    const Matrix<S>& y = t.value(self);
    const Matrix<S>& g = t.grad_of(self);
    Eigen::Matrix<S, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    Matrix<S> ga = y.cwiseProduct((g.colwise() - dot));
    t.accumulate(a, ga);
  });
}

// Inverted dropout: kept entries are scaled by 1/(1-rate), so evaluation mode is
// the identity and returns `a` itself.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  if (rng == nullptr) throw ContractError("dropout: training mode needs a random stream");
  const S keep_scale = S(1) / static_cast<S>(1.0 - rate);
  Matrix<S> keep(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < keep.size(); ++i) {
    keep.data()[i] = uniform01(*rng) < rate ? S(0) : keep_scale;
  }
  Matrix<S> out = a.value().cwiseProduct(keep);
  return a.tape().record(std::move(out), {a}, [a, keep = std::move(keep)](Tape<S>& t, int self) {
    t.accumulate(a, t.grad_of(self).cwiseProduct(keep));
  });
}

// ---------------------------------------------------------------------------
// Indexing and layout

// Rows of `table` selected by `ids`; repeated ids accumulate gradient.
template <typename S>
Tensor<S> embedding(const Tensor<S>& table, std::span<const TokenId> ids) {
  const Eigen::Index vocab = table.rows();
  Matrix<S> out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table " +
                           shape_str(table));
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<TokenId> idv(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [table, idv = std::move(idv)](Tape<S>& t, int self) {
    if (!t.requires_grad(table.id())) return;
    const Matrix<S>& g = t.grad_of(self);
    Matrix<S>& gt = t.grad_of(table.id());
    for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Tape<S>& tape = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::same_tape(parts.front(), p);
    if (p.rows() != rows) {
      detail::dim_error("concat_cols", shape_str(parts.front()) + " vs " + shape_str(p));
    }
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return tape.record(std::move(out), parts, [parts](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    Eigen::Index o = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleCols(o, p.cols()));
      o += p.cols();
    }
  });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.cols()) {
    detail::dim_error("slice_cols", shape_str(a) + " cols [" + std::to_string(begin) + ", " +
                                        std::to_string(begin + count) + ")");
  }
  Matrix<S> out = a.value().middleCols(begin, count);
  return a.tape().record(std::move(out), {a}, [a, begin, count](Tape<S>& t, int self) {
    if (!t.requires_grad(a.id())) return;
    t.grad_of(a.id()).middleCols(begin, count) += t.grad_of(self);
  });
}

// Concatenates along the row axis.
template <typename S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("stack_rows: no inputs");
  Tape<S>& tape = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::same_tape(parts.front(), p);
    if (p.cols() != cols) {
      detail::dim_error("stack_rows", shape_str(parts.front()) + " vs " + shape_str(p));
    }
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return tape.record(std::move(out), parts, [parts](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    Eigen::Index o = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleRows(o, p.rows()));
      o += p.rows();
    }
  });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.rows()) {
    detail::dim_error("slice_rows", shape_str(a) + " rows [" + std::to_string(begin) + ", " +
                                        std::to_string(begin + count) + ")");
  }
  Matrix<S> out = a.value().middleRows(begin, count);
  return a.tape().record(std::move(out), {a}, [a, begin, count](Tape<S>& t, int self) {
    if (!t.requires_grad(a.id())) return;
    t.grad_of(a.id()).middleRows(begin, count) += t.grad_of(self);
  });
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& a, std::span<const Eigen::Index> rows) {
  Matrix<S> out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " outside " + shape_str(a));
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  return a.tape().record(std::move(out), {a}, [a, idx = std::move(idx)](Tape<S>& t, int self) {
    if (!t.requires_grad(a.id())) return;
    const Matrix<S>& g = t.grad_of(self);
    Matrix<S>& ga = t.grad_of(a.id());
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

// Repeats `a` (B x C) `times` times along rows: row t*B + b equals a[b].
template <typename S>
Tensor<S> tile_rows(const Tensor<S>& a, Eigen::Index times) {
  if (times <= 0) detail::dim_error("tile_rows", "times=" + std::to_string(times));
  const Eigen::Index b = a.rows();
  Matrix<S> out(b * times, a.cols());
  for (Eigen::Index k = 0; k < times; ++k) out.middleRows(k * b, b) = a.value();
  return a.tape().record(std::move(out), {a}, [a, times, b](Tape<S>& t, int self) {
    if (!t.requires_grad(a.id())) return;
    const Matrix<S>& g = t.grad_of(self);
    Matrix<S>& ga = t.grad_of(a.id());
    for (Eigen::Index k = 0; k < times; ++k) ga += g.middleRows(k * b, b);
  });
}

// Row-wise selection: row i comes from `a` where keep[i], else from `b`.
// Pure routing, so a kept row is bit-identical to the source row.
template <typename S>
Tensor<S> where_rows(const std::vector<bool>& keep, const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>& tape = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols() || static_cast<Eigen::Index>(keep.size()) != a.rows()) {
    detail::dim_error("where_rows", shape_str(a) + " / " + shape_str(b) + " keep=" + std::to_string(keep.size()));
  }
  Matrix<S> out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) out.row(r) = keep[r] ? a.value().row(r) : b.value().row(r);
  return tape.record(std::move(out), {a, b}, [keep, a, b](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    const bool ga_on = t.requires_grad(a.id()), gb_on = t.requires_grad(b.id());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (keep[r]) {
        if (ga_on) t.grad_of(a.id()).row(r) += g.row(r);
      } else if (gb_on) {
        t.grad_of(b.id()).row(r) += g.row(r);
      }
    }
  });
}

// Batched attention read-out: out[b] = sum_m weights(b, m) * values[m*B + b].
template <typename S>
Tensor<S> attend(const Tensor<S>& weights, const Tensor<S>& values) {
  Tape<S>& tape = detail::same_tape(weights, values);
  const Eigen::Index B = weights.rows(), M = weights.cols();
  if (values.rows() != B * M) {
    detail::dim_error("attend", shape_str(weights) + " over " + shape_str(values));
  }
  const Matrix<S>& w = weights.value();
  const Matrix<S>& v = values.value();
  Matrix<S> out = Matrix<S>::Zero(B, v.cols());
  for (Eigen::Index m = 0; m < M; ++m) {
    out.noalias() += w.col(m).asDiagonal() * v.middleRows(m * B, B);
  }
  return tape.record(std::move(out), {weights, values}, [weights, values, B, M](Tape<S>& t, int self) {
    const Matrix<S>& g = t.grad_of(self);
    const Matrix<S>& w = weights.value();
    const Matrix<S>& v = values.value();
    if (t.requires_grad(weights.id())) {
      Matrix<S>& gw = t.grad_of(weights.id());
      for (Eigen::Index m = 0; m < M; ++m) {
        gw.col(m) += g.cwiseProduct(v.middleRows(m * B, B)).rowwise().sum();
      }
    }
    if (t.requires_grad(values.id())) {
      Matrix<S>& gv = t.grad_of(values.id());
      for (Eigen::Index m = 0; m < M; ++m) {
        gv.middleRows(m * B, B).noalias() += w.col(m).asDiagonal() * g;
      }
    }
  });
}

// Scatter-add of per-position weights onto token ids:
// out(b, ids[b][m]) += weights(b, m). Negative ids (padding) are dropped.
template <typename S>
Tensor<S> scatter_to_vocab(const Tensor<S>& weights, const std::vector<std::vector<TokenId>>& ids,
                           Eigen::Index vocab) {
  const Eigen::Index B = weights.rows(), M = weights.cols();
  if (static_cast<Eigen::Index>(ids.size()) != B) {
    detail::dim_error("scatter_to_vocab", shape_str(weights) + " with " + std::to_string(ids.size()) + " id rows");
  }
  Matrix<S> out = Matrix<S>::Zero(B, vocab);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& row = ids[static_cast<std::size_t>(b)];
    for (Eigen::Index m = 0; m < M && m < static_cast<Eigen::Index>(row.size()); ++m) {
      const TokenId id = row[static_cast<std::size_t>(m)];
      if (id < 0) continue;
      if (id >= vocab) throw DimensionError("scatter_to_vocab: id " + std::to_string(id) + " >= vocab");
      out(b, id) += weights.value()(b, m);
    }
  }
  return weights.tape().record(std::move(out), {weights}, [weights, ids, B, M](Tape<S>& t, int self) {
    if (!t.requires_grad(weights.id())) return;
    const Matrix<S>& g = t.grad_of(self);
    Matrix<S>& gw = t.grad_of(weights.id());
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& row = ids[static_cast<std::size_t>(b)];
      for (Eigen::Index m = 0; m < M && m < static_cast<Eigen::Index>(row.size()); ++m) {
        const TokenId id = row[static_cast<std::size_t>(m)];
        if (id >= 0) gw(b, m) += g(b, id);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Loss

struct SmoothingSpec {
  double epsilon = 0.0;
  TokenId excluded = -1;  // id outside the smoothing support (PAD), or -1
  double floor = 1e-12;
};

// Per-row label-smoothed negative log-likelihood of a probability matrix,
// weighted and summed: sum_b w_b * -sum_t q_bt log(P_bt + floor).
// Rows with weight 0 contribute nothing and receive no gradient.
template <typename S>
Tensor<S> smoothed_nll_rows(const Tensor<S>& probs, std::span<const TokenId> targets,
                            std::span<const S> weights, const SmoothingSpec& sm) {
  const Eigen::Index B = probs.rows(), V = probs.cols();
  if (static_cast<Eigen::Index>(targets.size()) != B || static_cast<Eigen::Index>(weights.size()) != B) {
    detail::dim_error("smoothed_nll_rows", shape_str(probs) + " with " + std::to_string(targets.size()) + " targets");
  }
  const bool has_excluded = sm.excluded >= 0 && sm.excluded < V;
  const Eigen::Index support = V - (has_excluded ? 1 : 0);
  const S off = static_cast<S>(sm.epsilon / static_cast<double>(support));
  const S on = static_cast<S>(1.0 - sm.epsilon) + off;
  const S fl = static_cast<S>(sm.floor);
  std::vector<TokenId> tg(targets.begin(), targets.end());
  std::vector<S> w(weights.begin(), weights.end());
  auto q = [=](Eigen::Index t, TokenId target) -> S {
    if (has_excluded && t == sm.excluded) return S(0);
    return t == target ? on : off;
  };
  const Matrix<S>& p = probs.value();
  S total = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    if (w[b] == S(0)) continue;
    if (tg[b] < 0 || tg[b] >= V) throw DimensionError("smoothed_nll_rows: target out of range");
    S row = 0;
    for (Eigen::Index t = 0; t < V; ++t) {
      const S qt = q(t, tg[b]);
      if (qt != S(0)) row -= qt * std::log(p(b, t) + fl);
    }
    total += w[b] * row;
  }
  Matrix<S> out(1, 1);
  out(0, 0) = total;
  return probs.tape().record(std::move(out), {probs}, [probs, tg, w, q, fl, B, V](Tape<S>& t, int self) {
    if (!t.requires_grad(probs.id())) return;
    const S g = t.grad_of(self)(0, 0);
    const Matrix<S>& p = probs.value();
    Matrix<S>& gp = t.grad_of(probs.id());
    for (Eigen::Index b = 0; b < B; ++b) {
      if (w[b] == S(0)) continue;
      for (Eigen::Index c = 0; c < V; ++c) {
        const S qt = q(c, tg[b]);
        if (qt != S(0)) gp(b, c) -= g * w[b] * qt / (p(b, c) + fl);
      }
    }
  });
}

}  // namespace mapgn

#endif  // MAPGN_TENSOR_HPP
