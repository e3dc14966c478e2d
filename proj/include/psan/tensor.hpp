#pragma once

// Dense tensors over Eigen storage with reverse-mode autodiff.
//
// A TensorT is a shared handle to a value matrix plus optional gradient
// state; everything is rank 2, with row vectors standing in for rank 1 and
// 1x1 matrices for scalars. Operations are free functions. While a TapeT is
// alive on the current thread they record pull-back closures onto it; with
// no tape in scope the same functions are plain evaluation.
//
// backward() replays the tape in reverse creation order. Creation order is
// a topological order (operands always precede results), so the reverse
// visits every node exactly once after all of its consumers. Gradients
// accumulate into requires-grad tensors until zero_grad(): running backward
// twice without zeroing doubles them exactly.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "psan/errors.hpp"

namespace psan {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Validity mask over one axis; empty means everything is valid.
using Mask = std::vector<std::uint8_t>;

template <typename Scalar>
class TapeT;

namespace detail {

template <typename Scalar>
struct TensorDataT {
  MatrixT<Scalar> value;
  MatrixT<Scalar> grad;   // persistent; lazily allocated on first accumulation
  MatrixT<Scalar> flow;   // scratch buffer for the backward pass in progress
  std::uint64_t flow_pass = 0;
  bool requires_grad = false;
  const void* producer = nullptr;  // tape that produced this as an op output
};

}  // namespace detail

template <typename Scalar>
class TensorT {
 public:
  using Matrix = MatrixT<Scalar>;
  using Data = detail::TensorDataT<Scalar>;

  TensorT() = default;

  explicit TensorT(Matrix v, bool requires_grad = false)
      : d_(std::make_shared<Data>()) {
    d_->value = std::move(v);
    d_->requires_grad = requires_grad;
  }

  static TensorT zeros(Eigen::Index rows, Eigen::Index cols) {
    return TensorT(Matrix::Zero(rows, cols));
  }

  static TensorT scalar(Scalar v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return TensorT(std::move(m));
  }

  // A trainable leaf.
  static TensorT param(Matrix v) { return TensorT(std::move(v), true); }

  bool valid() const { return static_cast<bool>(d_); }
  Eigen::Index rows() const { return d_->value.rows(); }
  Eigen::Index cols() const { return d_->value.cols(); }

  const Matrix& value() const { return d_->value; }

  // Mutable access for optimizers, checkpoint restore and finite
  // differencing. Mutating a value that a live tape still references
  // invalidates that tape's backward pass.
  Matrix& raw_value() { return d_->value; }

  Scalar item() const {
    if (rows() != 1 || cols() != 1)
      throw ShapeError("item: tensor is not a scalar");
    return d_->value(0, 0);
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) { d_->requires_grad = b; }

  bool has_grad() const { return d_->grad.size() != 0; }

  // Accumulated gradient; zeros when backward has not touched this tensor.
  Matrix grad() const {
    if (!has_grad()) return Matrix::Zero(rows(), cols());
    return d_->grad;
  }

  void zero_grad() { d_->grad.resize(0, 0); }

  const std::shared_ptr<Data>& ptr() const { return d_; }

 private:
  std::shared_ptr<Data> d_;
};

template <typename Scalar>
class TapeT {
 public:
  using Data = detail::TensorDataT<Scalar>;
  using Matrix = MatrixT<Scalar>;

  // Constructing a tape makes it the active recorder for this thread;
  // destruction restores the previous one. Tapes are single-threaded, but
  // independent threads each get their own active tape.
  TapeT() : prev_(active_) { active_ = this; }
  ~TapeT() { active_ = prev_; }
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* active() noexcept { return active_; }

  std::size_t size() const noexcept { return nodes_.size(); }

  void record(std::shared_ptr<Data> out,
              std::function<void(TapeT&, const Matrix&)> pull) {
    out->producer = this;
    nodes_.push_back(Node{std::move(out), std::move(pull)});
  }

  // Add a local gradient contribution to a tensor. Feeds both the transient
  // flow buffer (for further propagation) and, for requires-grad tensors,
  // the persistent grad accumulator.
  void add_flow(const std::shared_ptr<Data>& d, Matrix contribution) {
    if (contribution.rows() != d->value.rows() ||
        contribution.cols() != d->value.cols())
      throw TapeError("gradient contribution shape does not match the value");
    if (d->requires_grad) {
      if (d->grad.size() == 0)
        d->grad = Matrix::Zero(d->value.rows(), d->value.cols());
      d->grad += contribution;
    }
    if (d->flow_pass != pass_) {
      d->flow = std::move(contribution);
      d->flow_pass = pass_;
    } else {
      d->flow += contribution;
    }
  }

  void backward(const TensorT<Scalar>& loss) {
    if (!loss.valid()) throw TapeError("backward: empty tensor");
    if (loss.rows() != 1 || loss.cols() != 1) {
      std::ostringstream os;
      os << "backward: loss must be a 1x1 scalar, got " << loss.rows() << "x"
         << loss.cols();
      throw ShapeError(os.str());
    }
    if (loss.ptr()->producer != this)
      throw TapeError("backward: loss was not produced on this tape");
    ++pass_;
    add_flow(loss.ptr(), Matrix::Ones(1, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->out->flow_pass != pass_) continue;  // nothing flowed back here
      it->pull(*this, it->out->flow);
    }
  }

 private:
  struct Node {
    std::shared_ptr<Data> out;
    std::function<void(TapeT&, const Matrix&)> pull;
  };

  std::vector<Node> nodes_;
  std::uint64_t pass_ = 0;
  TapeT* prev_ = nullptr;
  static inline thread_local TapeT* active_ = nullptr;
};

namespace detail {

// An input participates in backward if it is a trainable leaf or was itself
// produced on the active tape.
template <typename Scalar>
bool tracked(const TapeT<Scalar>* tape, const TensorT<Scalar>& t) {
  return t.requires_grad() || t.ptr()->producer == tape;
}

template <typename Scalar>
void check_same_shape(const TensorT<Scalar>& a, const TensorT<Scalar>& b,
                      const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shapes " << a.rows() << "x" << a.cols() << " and "
       << b.rows() << "x" << b.cols() << " do not match";
    throw ShapeError(os.str());
  }
}

inline bool mask_on(const Mask& m, std::size_t i) {
  return m.empty() || m[i] != 0;
}

}  // namespace detail

// ---- linear algebra ----

template <typename Scalar>
TensorT<Scalar> matmul(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: inner dimensions " << a.rows() << "x" << a.cols() << " * "
       << b.rows() << "x" << b.cols() << " do not match";
    throw ShapeError(os.str());
  }
  TensorT<Scalar> out(MatrixT<Scalar>(a.value() * b.value()));
  auto* tape = TapeT<Scalar>::active();
  if (tape) {
    bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
    if (ta || tb) {
      auto ad = a.ptr(), bd = b.ptr();
      tape->record(out.ptr(), [ad, bd, ta, tb](TapeT<Scalar>& t,
                                               const MatrixT<Scalar>& g) {
        if (ta) t.add_flow(ad, g * bd->value.transpose());
        if (tb) t.add_flow(bd, ad->value.transpose() * g);
      });
    }
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> transpose(const TensorT<Scalar>& x) {
  TensorT<Scalar> out(MatrixT<Scalar>(x.value().transpose()));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    tape->record(out.ptr(), [xd](TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
      t.add_flow(xd, g.transpose());
    });
  }
  return out;
}

// ---- elementwise ----

template <typename Scalar>
TensorT<Scalar> add(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  detail::check_same_shape(a, b, "add");
  TensorT<Scalar> out(MatrixT<Scalar>(a.value() + b.value()));
  auto* tape = TapeT<Scalar>::active();
  if (tape) {
    bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
    if (ta || tb) {
      auto ad = a.ptr(), bd = b.ptr();
      tape->record(out.ptr(), [ad, bd, ta, tb](TapeT<Scalar>& t,
                                               const MatrixT<Scalar>& g) {
        if (ta) t.add_flow(ad, g);
        if (tb) t.add_flow(bd, g);
      });
    }
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> sub(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  detail::check_same_shape(a, b, "sub");
  TensorT<Scalar> out(MatrixT<Scalar>(a.value() - b.value()));
  auto* tape = TapeT<Scalar>::active();
  if (tape) {
    bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
    if (ta || tb) {
      auto ad = a.ptr(), bd = b.ptr();
      tape->record(out.ptr(), [ad, bd, ta, tb](TapeT<Scalar>& t,
                                               const MatrixT<Scalar>& g) {
        if (ta) t.add_flow(ad, g);
        if (tb) t.add_flow(bd, MatrixT<Scalar>(-g));
      });
    }
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> operator+(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
TensorT<Scalar> operator-(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  return sub(a, b);
}

template <typename Scalar>
TensorT<Scalar> hadamard(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  detail::check_same_shape(a, b, "hadamard");
  TensorT<Scalar> out(MatrixT<Scalar>(a.value().cwiseProduct(b.value())));
  auto* tape = TapeT<Scalar>::active();
  if (tape) {
    bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
    if (ta || tb) {
      auto ad = a.ptr(), bd = b.ptr();
      tape->record(out.ptr(), [ad, bd, ta, tb](TapeT<Scalar>& t,
                                               const MatrixT<Scalar>& g) {
        if (ta) t.add_flow(ad, g.cwiseProduct(bd->value));
        if (tb) t.add_flow(bd, g.cwiseProduct(ad->value));
      });
    }
  }
  return out;
}

// Scalar constant times tensor; the only scalar broadcast we support besides
// row-bias addition.
template <typename Scalar>
TensorT<Scalar> scale(Scalar c, const TensorT<Scalar>& x) {
  TensorT<Scalar> out(MatrixT<Scalar>(c * x.value()));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    tape->record(out.ptr(),
                 [xd, c](TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
                   t.add_flow(xd, MatrixT<Scalar>(c * g));
                 });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> operator*(Scalar c, const TensorT<Scalar>& x) {
  return scale(c, x);
}

template <typename Scalar>
TensorT<Scalar> operator*(const TensorT<Scalar>& x, Scalar c) {
  return scale(c, x);
}

// Add a 1 x cols bias row to every row of x.
template <typename Scalar>
TensorT<Scalar> add_rowvec(const TensorT<Scalar>& x, const TensorT<Scalar>& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) {
    std::ostringstream os;
    os << "add_rowvec: bias must be 1x" << x.cols() << ", got " << b.rows()
       << "x" << b.cols();
    throw ShapeError(os.str());
  }
  MatrixT<Scalar> v = x.value();
  v.rowwise() += b.value().row(0);
  TensorT<Scalar> out(std::move(v));
  auto* tape = TapeT<Scalar>::active();
  if (tape) {
    bool tx = detail::tracked(tape, x), tb = detail::tracked(tape, b);
    if (tx || tb) {
      auto xd = x.ptr(), bd = b.ptr();
      tape->record(out.ptr(), [xd, bd, tx, tb](TapeT<Scalar>& t,
                                               const MatrixT<Scalar>& g) {
        if (tx) t.add_flow(xd, g);
        if (tb) t.add_flow(bd, MatrixT<Scalar>(g.colwise().sum()));
      });
    }
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> relu(const TensorT<Scalar>& x) {
  TensorT<Scalar> out(MatrixT<Scalar>(x.value().cwiseMax(Scalar(0))));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    tape->record(out.ptr(), [xd](TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
      MatrixT<Scalar> gx = g;
      for (Eigen::Index i = 0; i < gx.rows(); ++i)
        for (Eigen::Index j = 0; j < gx.cols(); ++j)
          if (xd->value(i, j) <= Scalar(0)) gx(i, j) = Scalar(0);
      t.add_flow(xd, std::move(gx));
    });
  }
  return out;
}

template <typename Scalar>
TensorT<Scalar> tanh(const TensorT<Scalar>& x) {
  TensorT<Scalar> out(MatrixT<Scalar>(x.value().array().tanh().matrix()));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    auto od = out.ptr();
    tape->record(out.ptr(),
                 [xd, od](TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
                   const auto& y = od->value.array();
                   t.add_flow(
                       xd, MatrixT<Scalar>((g.array() * (1 - y * y)).matrix()));
                 });
  }
  return out;
}

// ---- reductions and rearrangements ----

template <typename Scalar>
TensorT<Scalar> sum_all(const TensorT<Scalar>& x) {
  TensorT<Scalar> out = TensorT<Scalar>::scalar(x.value().sum());
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    tape->record(out.ptr(), [xd](TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
      t.add_flow(xd, MatrixT<Scalar>::Constant(xd->value.rows(),
                                               xd->value.cols(), g(0, 0)));
    });
  }
  return out;
}

// Mean along one axis over the unmasked entries. axis 0 collapses rows into
// a 1 x cols result, axis 1 collapses columns into rows x 1. The mask, when
// given, runs along the collapsed axis; a fully masked reduction is an error.
template <typename Scalar>
TensorT<Scalar> mean(const TensorT<Scalar>& x, int axis,
                     const Mask& mask = {}) {
  if (axis != 0 && axis != 1) throw ShapeError("mean: axis must be 0 or 1");
  const Eigen::Index along = axis == 0 ? x.rows() : x.cols();
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != along) {
    std::ostringstream os;
    os << "mean: mask length " << mask.size() << " does not match axis size "
       << along;
    throw ShapeError(os.str());
  }
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < along; ++i)
    if (detail::mask_on(mask, static_cast<std::size_t>(i))) ++count;
  if (count == 0) throw NumericError("mean: every position is masked");

  MatrixT<Scalar> v;
  if (axis == 0) {
    v = MatrixT<Scalar>::Zero(1, x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (detail::mask_on(mask, static_cast<std::size_t>(r)))
        v.row(0) += x.value().row(r);
  } else {
    v = MatrixT<Scalar>::Zero(x.rows(), 1);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (detail::mask_on(mask, static_cast<std::size_t>(c)))
        v.col(0) += x.value().col(c);
  }
  v /= static_cast<Scalar>(count);

  TensorT<Scalar> out(std::move(v));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    const Mask m = mask;
    tape->record(out.ptr(), [xd, m, axis, count](TapeT<Scalar>& t,
                                                 const MatrixT<Scalar>& g) {
      MatrixT<Scalar> gx =
          MatrixT<Scalar>::Zero(xd->value.rows(), xd->value.cols());
      const Scalar inv = Scalar(1) / static_cast<Scalar>(count);
      if (axis == 0) {
        for (Eigen::Index r = 0; r < gx.rows(); ++r)
          if (detail::mask_on(m, static_cast<std::size_t>(r)))
            gx.row(r) = g.row(0) * inv;
      } else {
        for (Eigen::Index c = 0; c < gx.cols(); ++c)
          if (detail::mask_on(m, static_cast<std::size_t>(c)))
            gx.col(c) = g.col(0) * inv;
      }
      t.add_flow(xd, std::move(gx));
    });
  }
  return out;
}

// Numerically stable softmax along one axis. Masked positions come out as
// exact zeros and are excluded from the normalization; a slice with nothing
// unmasked is an error. axis 1 normalizes each row, axis 0 each column; the
// mask runs along the normalized axis and applies to every slice.
template <typename Scalar>
TensorT<Scalar> softmax(const TensorT<Scalar>& x, int axis,
                        const Mask& mask = {}) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const Eigen::Index along = axis == 1 ? x.cols() : x.rows();
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != along) {
    std::ostringstream os;
    os << "softmax: mask length " << mask.size() << " does not match axis size "
       << along;
    throw ShapeError(os.str());
  }
  bool any_on = false;
  for (Eigen::Index i = 0; i < along; ++i)
    if (detail::mask_on(mask, static_cast<std::size_t>(i))) any_on = true;
  if (!any_on) throw NumericError("softmax: every position is masked");

  const Eigen::Index slices = axis == 1 ? x.rows() : x.cols();
  MatrixT<Scalar> y = MatrixT<Scalar>::Zero(x.rows(), x.cols());
  auto at = [&](const MatrixT<Scalar>& m, Eigen::Index s,
                Eigen::Index i) -> Scalar {
    return axis == 1 ? m(s, i) : m(i, s);
  };
  auto put = [&](MatrixT<Scalar>& m, Eigen::Index s, Eigen::Index i,
                 Scalar v) {
    if (axis == 1)
      m(s, i) = v;
    else
      m(i, s) = v;
  };
  for (Eigen::Index s = 0; s < slices; ++s) {
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < along; ++i)
      if (detail::mask_on(mask, static_cast<std::size_t>(i)))
        hi = std::max(hi, at(x.value(), s, i));
    Scalar z = 0;
    for (Eigen::Index i = 0; i < along; ++i)
      if (detail::mask_on(mask, static_cast<std::size_t>(i)))
        z += std::exp(at(x.value(), s, i) - hi);
    for (Eigen::Index i = 0; i < along; ++i)
      if (detail::mask_on(mask, static_cast<std::size_t>(i)))
        put(y, s, i, std::exp(at(x.value(), s, i) - hi) / z);
  }

  TensorT<Scalar> out(std::move(y));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    auto od = out.ptr();
    const Mask m = mask;
    tape->record(out.ptr(), [xd, od, m, axis, along, slices](
                                TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
      auto at = [&](const MatrixT<Scalar>& mm, Eigen::Index s,
                    Eigen::Index i) -> Scalar {
        return axis == 1 ? mm(s, i) : mm(i, s);
      };
      MatrixT<Scalar> gx =
          MatrixT<Scalar>::Zero(xd->value.rows(), xd->value.cols());
      for (Eigen::Index s = 0; s < slices; ++s) {
        Scalar dot = 0;
        for (Eigen::Index i = 0; i < along; ++i)
          if (detail::mask_on(m, static_cast<std::size_t>(i)))
            dot += at(g, s, i) * at(od->value, s, i);
        for (Eigen::Index i = 0; i < along; ++i) {
          if (!detail::mask_on(m, static_cast<std::size_t>(i))) continue;
          const Scalar yv = at(od->value, s, i);
          const Scalar gv = yv * (at(g, s, i) - dot);
          if (axis == 1)
            gx(s, i) = gv;
          else
            gx(i, s) = gv;
        }
      }
      t.add_flow(xd, std::move(gx));
    });
  }
  return out;
}

// Concatenate along axis 0 (stack rows) or axis 1 (widen columns).
template <typename Scalar>
TensorT<Scalar> concat(const std::vector<TensorT<Scalar>>& parts, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  if (parts.empty()) throw ValueError("concat: nothing to concatenate");
  Eigen::Index rows = parts[0].rows(), cols = parts[0].cols();
  Eigen::Index total = axis == 0 ? rows : cols;
  for (std::size_t p = 1; p < parts.size(); ++p) {
    if (axis == 0) {
      if (parts[p].cols() != cols)
        throw ShapeError("concat: column counts differ");
      total += parts[p].rows();
    } else {
      if (parts[p].rows() != rows)
        throw ShapeError("concat: row counts differ");
      total += parts[p].cols();
    }
  }
  MatrixT<Scalar> v = axis == 0 ? MatrixT<Scalar>(total, cols)
                                : MatrixT<Scalar>(rows, total);
  std::vector<Eigen::Index> offsets(parts.size());
  Eigen::Index at = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = at;
    if (axis == 0) {
      v.middleRows(at, parts[p].rows()) = parts[p].value();
      at += parts[p].rows();
    } else {
      v.middleCols(at, parts[p].cols()) = parts[p].value();
      at += parts[p].cols();
    }
  }

  TensorT<Scalar> out(std::move(v));
  auto* tape = TapeT<Scalar>::active();
  if (tape) {
    std::vector<std::shared_ptr<detail::TensorDataT<Scalar>>> ds;
    std::vector<std::uint8_t> tr;
    bool any = false;
    for (const auto& p : parts) {
      ds.push_back(p.ptr());
      bool t = detail::tracked(tape, p);
      tr.push_back(t ? 1 : 0);
      any = any || t;
    }
    if (any) {
      tape->record(out.ptr(), [ds, tr, offsets, axis](
                                  TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
        for (std::size_t p = 0; p < ds.size(); ++p) {
          if (!tr[p]) continue;
          if (axis == 0)
            t.add_flow(ds[p], MatrixT<Scalar>(g.middleRows(
                                  offsets[p], ds[p]->value.rows())));
          else
            t.add_flow(ds[p], MatrixT<Scalar>(g.middleCols(
                                  offsets[p], ds[p]->value.cols())));
        }
      });
    }
  }
  return out;
}

// Single row as a 1 x cols tensor.
template <typename Scalar>
TensorT<Scalar> row(const TensorT<Scalar>& x, Eigen::Index i) {
  if (i < 0 || i >= x.rows()) {
    std::ostringstream os;
    os << "row: index " << i << " out of range for " << x.rows() << " rows";
    throw ShapeError(os.str());
  }
  TensorT<Scalar> out(MatrixT<Scalar>(x.value().row(i)));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    tape->record(out.ptr(),
                 [xd, i](TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
                   MatrixT<Scalar> gx = MatrixT<Scalar>::Zero(
                       xd->value.rows(), xd->value.cols());
                   gx.row(i) = g.row(0);
                   t.add_flow(xd, std::move(gx));
                 });
  }
  return out;
}

// First m rows of x.
template <typename Scalar>
TensorT<Scalar> top_rows(const TensorT<Scalar>& x, Eigen::Index m) {
  if (m < 1 || m > x.rows()) {
    std::ostringstream os;
    os << "top_rows: cannot take " << m << " rows from " << x.rows();
    throw ShapeError(os.str());
  }
  TensorT<Scalar> out(MatrixT<Scalar>(x.value().topRows(m)));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, x)) {
    auto xd = x.ptr();
    tape->record(out.ptr(),
                 [xd, m](TapeT<Scalar>& t, const MatrixT<Scalar>& g) {
                   MatrixT<Scalar> gx = MatrixT<Scalar>::Zero(
                       xd->value.rows(), xd->value.cols());
                   gx.topRows(m) = g;
                   t.add_flow(xd, std::move(gx));
                 });
  }
  return out;
}

// Mean negative log likelihood of a batch of two-way logits. Labels must be
// 0 or 1; the gradient with respect to the logits is
// (softmax(logits) - onehot(labels)) / batch.
template <typename Scalar>
TensorT<Scalar> cross_entropy(const TensorT<Scalar>& logits,
                              const std::vector<int>& labels) {
  if (logits.cols() != 2)
    throw ShapeError("cross_entropy: expected two columns of logits");
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    std::ostringstream os;
    os << "cross_entropy: " << labels.size() << " labels for "
       << logits.rows() << " rows of logits";
    throw ShapeError(os.str());
  }
  const Eigen::Index batch = logits.rows();
  MatrixT<Scalar> probs(batch, 2);
  Scalar total = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y != 0 && y != 1) {
      std::ostringstream os;
      os << "cross_entropy: label " << y << " out of range at row " << b;
      throw ValueError(os.str());
    }
    const Scalar l0 = logits.value()(b, 0), l1 = logits.value()(b, 1);
    const Scalar hi = std::max(l0, l1);
    const Scalar e0 = std::exp(l0 - hi), e1 = std::exp(l1 - hi);
    const Scalar z = e0 + e1;
    probs(b, 0) = e0 / z;
    probs(b, 1) = e1 / z;
    const Scalar lse = hi + std::log(z);
    total += lse - (y == 0 ? l0 : l1);
  }
  TensorT<Scalar> out =
      TensorT<Scalar>::scalar(total / static_cast<Scalar>(batch));
  auto* tape = TapeT<Scalar>::active();
  if (tape && detail::tracked(tape, logits)) {
    auto ld = logits.ptr();
    const std::vector<int> ys = labels;
    tape->record(out.ptr(), [ld, ys, probs, batch](TapeT<Scalar>& t,
                                                   const MatrixT<Scalar>& g) {
      MatrixT<Scalar> gl = probs;
      for (Eigen::Index b = 0; b < batch; ++b)
        gl(b, ys[static_cast<std::size_t>(b)]) -= Scalar(1);
      gl *= g(0, 0) / static_cast<Scalar>(batch);
      t.add_flow(ld, std::move(gl));
    });
  }
  return out;
}

using Tensor = TensorT<double>;
using Tape = TapeT<double>;
using Matrix = MatrixT<double>;

}  // namespace psan
