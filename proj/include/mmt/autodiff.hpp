#pragma once

#include "mmt/common.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace mmt {

// Define-by-run reverse-mode engine. Tensors hold flat row-major storage plus
// an optional gradient of the same shape; primitives map the storage onto
// Eigen matrices, compute forward values eagerly, and record a backward
// closure on the tape when any input requires grad. The tape is rebuilt every
// forward pass; backward() may be called once per build, then clear().
//
// No broadcasting: every primitive documents the exact shapes it accepts and
// throws ShapeError otherwise. Supported ranks are 1 and 2 (a scalar is a
// rank-1 tensor of size 1).

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using EVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
struct TensorT {
  std::vector<int> shape;
  EVec<S> value;  // flat, row-major
  EVec<S> grad;   // empty until first accumulation
  bool requires_grad = false;

  Eigen::Index numel() const { return value.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  // Matrix extent helpers; a rank-1 tensor is an n x 1 column.
  int rows() const { return shape[0]; }
  int cols() const { return rank() == 2 ? shape[1] : 1; }

  Eigen::Map<EMat<S>> mat() {
    return Eigen::Map<EMat<S>>(value.data(), rows(), cols());
  }
  Eigen::Map<const EMat<S>> mat() const {
    return Eigen::Map<const EMat<S>>(value.data(), rows(), cols());
  }
  Eigen::Map<EMat<S>> grad_mat() {
    return Eigen::Map<EMat<S>>(grad.data(), rows(), cols());
  }

  S scalar() const {
    if (numel() != 1) {
      throw ContractError("Tensor::scalar: tensor has " + std::to_string(numel()) + " elements");
    }
    return value[0];
  }

  void ensure_grad() {
    if (grad.size() != value.size()) grad = EVec<S>::Zero(value.size());
  }

  void zero_grad() { grad.resize(0); }
};

template <class S>
using TensorPtrT = std::shared_ptr<TensorT<S>>;

template <class S>
TensorPtrT<S> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<TensorT<S>>();
  Eigen::Index n = 1;
  for (int d : shape) {
    if (d <= 0) throw ContractError("make_tensor: dimensions must be positive, got " + shape_str(shape));
    n *= d;
  }
  t->shape = std::move(shape);
  t->value = EVec<S>::Zero(n);
  t->requires_grad = requires_grad;
  return t;
}

template <class S>
TensorPtrT<S> from_matrix(const EMat<S>& m, bool requires_grad = false) {
  auto t = make_tensor<S>(
      std::vector<int>{static_cast<int>(m.rows()), static_cast<int>(m.cols())}, requires_grad);
  t->mat() = m;
  return t;
}

template <class S>
TensorPtrT<S> from_vector(const EVec<S>& v, bool requires_grad = false) {
  auto t = make_tensor<S>(std::vector<int>{static_cast<int>(v.size())}, requires_grad);
  t->value = v;
  return t;
}

template <class S>
TensorPtrT<S> make_scalar(S v, bool requires_grad = false) {
  auto t = make_tensor<S>(std::vector<int>{1}, requires_grad);
  t->value[0] = v;
  return t;
}

template <class S>
class TapeT {
 public:
  void record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }

  // Backward step owned by one node: it runs only when the node's output
  // actually received gradient. Outputs built but never consumed by the
  // loss (side diagnostics, an unused task head) then cost nothing instead
  // of reading an empty gradient buffer.
  void record(const TensorPtrT<S>& out, std::function<void()> backward_fn) {
    entries_.push_back([out, fn = std::move(backward_fn)]() {
      if (out->grad.size() == 0) return;
      fn();
    });
  }

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and walks the tape once in reverse, summing
  // contributions into each participating tensor's grad. One backward per
  // build; clear() before reuse.
  void backward(const TensorPtrT<S>& loss) {
    if (loss->numel() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    }
    if (!loss->requires_grad) {
      throw ContractError("backward: loss is not connected to any tensor requiring grad");
    }
    if (finished_) {
      throw ContractError("backward: tape already consumed; clear() before reuse");
    }
    finished_ = true;
    loss->ensure_grad();
    loss->grad[0] += S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

  void clear() {
    entries_.clear();
    finished_ = false;
  }

 private:
  std::vector<std::function<void()>> entries_;
  bool recording_ = true;
  bool finished_ = false;
};

namespace detail {

template <class S>
bool track(const TapeT<S>& tape, std::initializer_list<const TensorPtrT<S>*> ins) {
  if (!tape.recording()) return false;
  for (const auto* p : ins) {
    if ((*p)->requires_grad) return true;
  }
  return false;
}

template <class S>
void require_same_shape(const char* op, const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a->shape) + " and " +
                     shape_str(b->shape) + " differ");
  }
}

template <class S>
void require_rank2(const char* op, const TensorPtrT<S>& a) {
  if (a->rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a->shape));
  }
}

}  // namespace detail

// out = a @ b for a (m x k), b (k x n).
template <class S>
TensorPtrT<S> matmul(TapeT<S>& tape, const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
  detail::require_rank2("matmul", a);
  detail::require_rank2("matmul", b);
  if (a->cols() != b->rows()) {
    throw ShapeError("matmul: inner dimensions of " + shape_str(a->shape) + " and " +
                     shape_str(b->shape) + " do not match");
  }
  auto out = make_tensor<S>(std::vector<int>{a->rows(), b->cols()});
  out->mat().noalias() = a->mat() * b->mat();
  if (detail::track<S>(tape, {&a, &b})) {
    out->requires_grad = true;
    tape.record(out, [a, b, out]() {
      auto g = out->grad_mat();
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad_mat().noalias() += g * b->mat().transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad_mat().noalias() += a->mat().transpose() * g;
      }
    });
  }
  return out;
}

// Elementwise sum of two same-shape tensors.
template <class S>
TensorPtrT<S> add(TapeT<S>& tape, const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
  detail::require_same_shape("add", a, b);
  auto out = make_tensor<S>(a->shape);
  out->value = a->value + b->value;
  if (detail::track<S>(tape, {&a, &b})) {
    out->requires_grad = true;
    tape.record(out, [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad += out->grad;
      }
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> sub(TapeT<S>& tape, const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
  detail::require_same_shape("sub", a, b);
  auto out = make_tensor<S>(a->shape);
  out->value = a->value - b->value;
  if (detail::track<S>(tape, {&a, &b})) {
    out->requires_grad = true;
    tape.record(out, [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad -= out->grad;
      }
    });
  }
  return out;
}

// Hadamard product of two same-shape tensors.
template <class S>
TensorPtrT<S> mul(TapeT<S>& tape, const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
  detail::require_same_shape("mul", a, b);
  auto out = make_tensor<S>(a->shape);
  out->value = a->value.cwiseProduct(b->value);
  if (detail::track<S>(tape, {&a, &b})) {
    out->requires_grad = true;
    tape.record(out, [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad.cwiseProduct(b->value);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad += out->grad.cwiseProduct(a->value);
      }
    });
  }
  return out;
}

// Adds a rank-1 bias of length c to every row of a (r x c).
template <class S>
TensorPtrT<S> add_rowwise(TapeT<S>& tape, const TensorPtrT<S>& a, const TensorPtrT<S>& bias) {
  detail::require_rank2("add_rowwise", a);
  if (bias->rank() != 1 || bias->dim(0) != a->cols()) {
    throw ShapeError("add_rowwise: bias " + shape_str(bias->shape) + " does not match columns of " +
                     shape_str(a->shape));
  }
  auto out = make_tensor<S>(a->shape);
  out->mat() = a->mat().rowwise() + bias->value.transpose();
  if (detail::track<S>(tape, {&a, &bias})) {
    out->requires_grad = true;
    tape.record(out, [a, bias, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad;
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        bias->grad += out->grad_mat().colwise().sum().transpose();
      }
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> scale(TapeT<S>& tape, const TensorPtrT<S>& a, S c) {
  auto out = make_tensor<S>(a->shape);
  out->value = a->value * c;
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out, c]() {
      a->ensure_grad();
      a->grad += out->grad * c;
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> add_const(TapeT<S>& tape, const TensorPtrT<S>& a, S c) {
  auto out = make_tensor<S>(a->shape);
  out->value = a->value.array() + c;
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out]() {
      a->ensure_grad();
      a->grad += out->grad;
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> tanh(TapeT<S>& tape, const TensorPtrT<S>& a) {
  auto out = make_tensor<S>(a->shape);
  out->value = a->value.array().tanh();
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out]() {
      a->ensure_grad();
      a->grad.array() += out->grad.array() * (S(1) - out->value.array().square());
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> sigmoid(TapeT<S>& tape, const TensorPtrT<S>& a) {
  auto out = make_tensor<S>(a->shape);
  out->value = (S(1) / (S(1) + (-a->value.array()).exp())).matrix();
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out]() {
      a->ensure_grad();
      a->grad.array() += out->grad.array() * out->value.array() * (S(1) - out->value.array());
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> relu(TapeT<S>& tape, const TensorPtrT<S>& a) {
  auto out = make_tensor<S>(a->shape);
  out->value = a->value.cwiseMax(S(0));
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out]() {
      a->ensure_grad();
      a->grad.array() +=
          out->grad.array() * (a->value.array() > S(0)).template cast<S>();
    });
  }
  return out;
}

// max(a, c) elementwise; gradient passes only where a > c.
template <class S>
TensorPtrT<S> clamp_min(TapeT<S>& tape, const TensorPtrT<S>& a, S c) {
  auto out = make_tensor<S>(a->shape);
  out->value = a->value.cwiseMax(c);
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out, c]() {
      a->ensure_grad();
      a->grad.array() += out->grad.array() * (a->value.array() > c).template cast<S>();
    });
  }
  return out;
}

// Natural log; caller guarantees positivity (clamp_min first if unsure).
template <class S>
TensorPtrT<S> log(TapeT<S>& tape, const TensorPtrT<S>& a) {
  auto out = make_tensor<S>(a->shape);
  out->value = a->value.array().log();
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out]() {
      a->ensure_grad();
      a->grad.array() += out->grad.array() / a->value.array();
    });
  }
  return out;
}

namespace detail {

// Softmax over one contiguous slice with the max-shift trick; writes in place.
template <class S>
void softmax_slice(Eigen::Ref<EVec<S>> x) {
  const S m = x.maxCoeff();
  x = (x.array() - m).exp();
  x /= x.sum();
}

}  // namespace detail

// Softmax along `axis` of a rank-2 tensor (1 = per row, 0 = per column).
// Rank-1 tensors are treated as a single slice.
template <class S>
TensorPtrT<S> softmax(TapeT<S>& tape, const TensorPtrT<S>& a, int axis = 1) {
  auto out = make_tensor<S>(a->shape);
  out->value = a->value;
  if (a->rank() == 1) {
    detail::softmax_slice<S>(out->value);
  } else if (a->rank() == 2 && axis == 1) {
    for (int r = 0; r < a->rows(); ++r) {
      EVec<S> row = out->mat().row(r).transpose();
      detail::softmax_slice<S>(row);
      out->mat().row(r) = row.transpose();
    }
  } else if (a->rank() == 2 && axis == 0) {
    for (int c = 0; c < a->cols(); ++c) {
      EVec<S> col = out->mat().col(c);
      detail::softmax_slice<S>(col);
      out->mat().col(c) = col;
    }
  } else {
    throw ShapeError("softmax: unsupported axis " + std::to_string(axis) + " for shape " +
                     shape_str(a->shape));
  }
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    const int ax = a->rank() == 1 ? 1 : axis;
    tape.record(out, [a, out, ax]() {
      a->ensure_grad();
      auto backprop_slice = [](Eigen::Ref<const EVec<S>> y, Eigen::Ref<const EVec<S>> g,
                               EVec<S>& dx) {
        const S dot = y.dot(g);
        dx = (y.array() * (g.array() - dot)).matrix();
      };
      if (a->rank() == 1) {
        EVec<S> dx;
        backprop_slice(out->value, out->grad, dx);
        a->grad += dx;
      } else if (ax == 1) {
        for (int r = 0; r < a->rows(); ++r) {
          EVec<S> dx;
          backprop_slice(out->mat().row(r).transpose(), out->grad_mat().row(r).transpose(), dx);
          a->grad_mat().row(r) += dx.transpose();
        }
      } else {
        for (int c = 0; c < a->cols(); ++c) {
          EVec<S> dx;
          backprop_slice(out->mat().col(c), out->grad_mat().col(c), dx);
          a->grad_mat().col(c) += dx;
        }
      }
    });
  }
  return out;
}

// Row-wise softmax restricted to positions where mask is nonzero; masked
// positions come out exactly 0. Every row needs at least one unmasked entry.
template <class S>
TensorPtrT<S> masked_softmax(TapeT<S>& tape, const TensorPtrT<S>& scores, const EMat<S>& mask) {
  detail::require_rank2("masked_softmax", scores);
  if (mask.rows() != scores->rows() || mask.cols() != scores->cols()) {
    throw ShapeError("masked_softmax: mask " + std::to_string(mask.rows()) + "x" +
                     std::to_string(mask.cols()) + " does not match scores " +
                     shape_str(scores->shape));
  }
  auto out = make_tensor<S>(scores->shape);
  for (int r = 0; r < scores->rows(); ++r) {
    S m = std::numeric_limits<S>::lowest();
    int live = 0;
    for (int c = 0; c < scores->cols(); ++c) {
      if (mask(r, c) != S(0)) {
        m = std::max(m, scores->mat()(r, c));
        ++live;
      }
    }
    if (live == 0) {
      throw ContractError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    }
    S z = S(0);
    for (int c = 0; c < scores->cols(); ++c) {
      if (mask(r, c) != S(0)) {
        const S e = std::exp(scores->mat()(r, c) - m);
        out->mat()(r, c) = e;
        z += e;
      }
    }
    out->mat().row(r) /= z;
  }
  if (detail::track<S>(tape, {&scores})) {
    out->requires_grad = true;
    // y is 0 at masked positions, so the softmax jacobian y*(g - g.y) already
    // sends no gradient there.
    tape.record(out, [scores, out]() {
      scores->ensure_grad();
      for (int r = 0; r < scores->rows(); ++r) {
        const EVec<S> y = out->mat().row(r).transpose();
        const EVec<S> g = out->grad_mat().row(r).transpose();
        const S dot = y.dot(g);
        scores->grad_mat().row(r) += (y.array() * (g.array() - dot)).matrix().transpose();
      }
    });
  }
  return out;
}

// Concatenate along axis 0 (stacked rows) or 1 (side by side). Rank-1 inputs
// concatenate along axis 0 into a rank-1 output.
template <class S>
TensorPtrT<S> concat(TapeT<S>& tape, const std::vector<TensorPtrT<S>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int rank = parts[0]->rank();
  for (const auto& p : parts) {
    if (p->rank() != rank) {
      throw ShapeError("concat: mixed ranks " + shape_str(parts[0]->shape) + " and " +
                       shape_str(p->shape));
    }
  }
  TensorPtrT<S> out;
  if (rank == 1) {
    if (axis != 0) throw ShapeError("concat: rank-1 tensors concatenate along axis 0");
    int n = 0;
    for (const auto& p : parts) n += p->dim(0);
    out = make_tensor<S>(std::vector<int>{n});
    int at = 0;
    for (const auto& p : parts) {
      out->value.segment(at, p->dim(0)) = p->value;
      at += p->dim(0);
    }
  } else if (rank == 2 && (axis == 0 || axis == 1)) {
    int rows = 0, cols = 0;
    if (axis == 0) {
      cols = parts[0]->cols();
      for (const auto& p : parts) {
        if (p->cols() != cols) {
          throw ShapeError("concat axis 0: column counts differ: " + shape_str(parts[0]->shape) +
                           " vs " + shape_str(p->shape));
        }
        rows += p->rows();
      }
    } else {
      rows = parts[0]->rows();
      for (const auto& p : parts) {
        if (p->rows() != rows) {
          throw ShapeError("concat axis 1: row counts differ: " + shape_str(parts[0]->shape) +
                           " vs " + shape_str(p->shape));
        }
        cols += p->cols();
      }
    }
    out = make_tensor<S>(std::vector<int>{rows, cols});
    int at = 0;
    for (const auto& p : parts) {
      if (axis == 0) {
        out->mat().middleRows(at, p->rows()) = p->mat();
        at += p->rows();
      } else {
        out->mat().middleCols(at, p->cols()) = p->mat();
        at += p->cols();
      }
    }
  } else {
    throw ShapeError("concat: unsupported axis " + std::to_string(axis) + " for rank " +
                     std::to_string(rank));
  }
  bool any = false;
  for (const auto& p : parts) any = any || p->requires_grad;
  if (tape.recording() && any) {
    out->requires_grad = true;
    tape.record(out, [parts, out, axis, rank]() {
      int at = 0;
      for (const auto& p : parts) {
        if (rank == 1) {
          if (p->requires_grad) {
            p->ensure_grad();
            p->grad += out->grad.segment(at, p->dim(0));
          }
          at += p->dim(0);
        } else if (axis == 0) {
          if (p->requires_grad) {
            p->ensure_grad();
            p->grad_mat() += out->grad_mat().middleRows(at, p->rows());
          }
          at += p->rows();
        } else {
          if (p->requires_grad) {
            p->ensure_grad();
            p->grad_mat() += out->grad_mat().middleCols(at, p->cols());
          }
          at += p->cols();
        }
      }
    });
  }
  return out;
}

// Mean along `axis` of a rank-2 tensor: axis 0 gives column means (length c),
// axis 1 gives row means (length r).
template <class S>
TensorPtrT<S> mean(TapeT<S>& tape, const TensorPtrT<S>& a, int axis) {
  detail::require_rank2("mean", a);
  TensorPtrT<S> out;
  if (axis == 0) {
    out = make_tensor<S>(std::vector<int>{a->cols()});
    out->value = a->mat().colwise().mean().transpose();
  } else if (axis == 1) {
    out = make_tensor<S>(std::vector<int>{a->rows()});
    out->value = a->mat().rowwise().mean();
  } else {
    throw ShapeError("mean: unsupported axis " + std::to_string(axis));
  }
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out, axis]() {
      a->ensure_grad();
      if (axis == 0) {
        const S inv = S(1) / S(a->rows());
        a->grad_mat().rowwise() += (out->grad * inv).transpose();
      } else {
        const S inv = S(1) / S(a->cols());
        a->grad_mat().colwise() += out->grad * inv;
      }
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> mean_all(TapeT<S>& tape, const TensorPtrT<S>& a) {
  auto out = make_scalar<S>(a->value.mean());
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out]() {
      a->ensure_grad();
      a->grad.array() += out->grad[0] / S(a->numel());
    });
  }
  return out;
}

template <class S>
TensorPtrT<S> sum(TapeT<S>& tape, const TensorPtrT<S>& a) {
  auto out = make_scalar<S>(a->value.sum());
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out]() {
      a->ensure_grad();
      a->grad.array() += out->grad[0];
    });
  }
  return out;
}

// Inverted dropout: keeps entries with probability 1-p and rescales survivors
// by 1/(1-p) at train time; the identity (same tensor) when not training.
template <class S>
TensorPtrT<S> dropout(TapeT<S>& tape, const TensorPtrT<S>& a, S p, bool training,
                      CounterRng& rng) {
  if (p < S(0) || p >= S(1)) {
    throw ContractError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == S(0)) return a;
  auto out = make_tensor<S>(a->shape);
  auto keep = std::make_shared<EVec<S>>(a->numel());
  const S inv = S(1) / (S(1) - p);
  for (Eigen::Index i = 0; i < a->numel(); ++i) {
    (*keep)[i] = rng.bernoulli(static_cast<double>(p)) ? S(0) : inv;
  }
  out->value = a->value.cwiseProduct(*keep);
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    tape.record(out, [a, out, keep]() {
      a->ensure_grad();
      a->grad += out->grad.cwiseProduct(*keep);
    });
  }
  return out;
}

// Gathers rows of table (V x D) by id into a (B x D) tensor; backward
// scatter-adds into the gathered rows.
template <class S>
TensorPtrT<S> embedding_lookup(TapeT<S>& tape, const TensorPtrT<S>& table,
                               std::span<const int> ids) {
  detail::require_rank2("embedding_lookup", table);
  const int v = table->rows();
  auto out = make_tensor<S>(std::vector<int>{static_cast<int>(ids.size()), table->cols()});
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const int id = ids[b];
    if (id < 0 || id >= v) {
      throw ContractError("embedding_lookup: id " + std::to_string(id) + " outside table of " +
                          std::to_string(v) + " rows");
    }
    out->mat().row(static_cast<int>(b)) = table->mat().row(id);
  }
  if (detail::track<S>(tape, {&table})) {
    out->requires_grad = true;
    std::vector<int> idv(ids.begin(), ids.end());
    tape.record(out, [table, out, idv = std::move(idv)]() {
      table->ensure_grad();
      for (std::size_t b = 0; b < idv.size(); ++b) {
        table->grad_mat().row(idv[b]) += out->grad_mat().row(static_cast<int>(b));
      }
    });
  }
  return out;
}

// Gathers one entry per row: out[i] = a[i, ids[i]]. Backward scatter-adds
// into the picked slots only.
template <class S>
TensorPtrT<S> pick(TapeT<S>& tape, const TensorPtrT<S>& a, std::span<const int> ids) {
  detail::require_rank2("pick", a);
  if (static_cast<int>(ids.size()) != a->rows()) {
    throw ShapeError("pick: " + std::to_string(ids.size()) + " ids for " +
                     std::to_string(a->rows()) + " rows");
  }
  auto out = make_tensor<S>(std::vector<int>{a->rows()});
  for (int i = 0; i < a->rows(); ++i) {
    const int c = ids[i];
    if (c < 0 || c >= a->cols()) {
      throw ContractError("pick: column " + std::to_string(c) + " outside row of " +
                          std::to_string(a->cols()));
    }
    out->value[i] = a->mat()(i, c);
  }
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    std::vector<int> idv(ids.begin(), ids.end());
    tape.record(out, [a, out, idv = std::move(idv)]() {
      a->ensure_grad();
      for (int i = 0; i < a->rows(); ++i) a->grad_mat()(i, idv[i]) += out->grad[i];
    });
  }
  return out;
}

// Per-row distance between two (r x d) tensors. Cosine is 1 - cos(a_i, b_i)
// and requires nonzero rows; dot is the negated inner product (an argmin-
// compatible similarity); euclidean is the L2 norm of the difference.
template <class S>
TensorPtrT<S> rowwise_distance(TapeT<S>& tape, const TensorPtrT<S>& a, const TensorPtrT<S>& b,
                               DistanceKind kind = DistanceKind::Cosine) {
  detail::require_same_shape("rowwise_distance", a, b);
  detail::require_rank2("rowwise_distance", a);
  const int r = a->rows();
  auto out = make_tensor<S>(std::vector<int>{r});
  for (int i = 0; i < r; ++i) {
    const auto u = a->mat().row(i);
    const auto v = b->mat().row(i);
    switch (kind) {
      case DistanceKind::Cosine: {
        const S nu = u.norm(), nv = v.norm();
        if (nu == S(0) || nv == S(0)) {
          throw ContractError("rowwise_distance: cosine distance undefined for zero row " +
                              std::to_string(i));
        }
        out->value[i] = S(1) - u.dot(v) / (nu * nv);
        break;
      }
      case DistanceKind::Dot:
        out->value[i] = -u.dot(v);
        break;
      case DistanceKind::Euclidean:
        out->value[i] = (u - v).norm();
        break;
    }
  }
  if (detail::track<S>(tape, {&a, &b})) {
    out->requires_grad = true;
    tape.record(out, [a, b, out, kind]() {
      // Grad buffers must exist even when every upstream entry is zero;
      // producers further back read them unconditionally.
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (int i = 0; i < a->rows(); ++i) {
        const S g = out->grad[i];
        if (g == S(0)) continue;
        const EVec<S> u = a->mat().row(i).transpose();
        const EVec<S> v = b->mat().row(i).transpose();
        EVec<S> du, dv;
        switch (kind) {
          case DistanceKind::Cosine: {
            const S nu = u.norm(), nv = v.norm();
            const S c = u.dot(v) / (nu * nv);
            du = -(v / (nu * nv) - c * u / (nu * nu));
            dv = -(u / (nu * nv) - c * v / (nv * nv));
            break;
          }
          case DistanceKind::Dot:
            du = -v;
            dv = -u;
            break;
          case DistanceKind::Euclidean: {
            const S d = (u - v).norm();
            if (d == S(0)) continue;
            du = (u - v) / d;
            dv = -du;
            break;
          }
        }
        if (a->requires_grad) a->grad_mat().row(i) += g * du.transpose();
        if (b->requires_grad) b->grad_mat().row(i) += g * dv.transpose();
      }
    });
  }
  return out;
}

// Scales row i of a (or entry i of a rank-1 tensor) by the constant w[i].
template <class S>
TensorPtrT<S> rowwise_scale(TapeT<S>& tape, const TensorPtrT<S>& a, const EVec<S>& w) {
  if (a->rows() != w.size()) {
    throw ShapeError("rowwise_scale: weight length " + std::to_string(w.size()) +
                     " does not match rows of " + shape_str(a->shape));
  }
  auto out = make_tensor<S>(a->shape);
  out->mat() = w.asDiagonal() * a->mat();
  if (detail::track<S>(tape, {&a})) {
    out->requires_grad = true;
    auto wc = std::make_shared<EVec<S>>(w);
    tape.record(out, [a, out, wc]() {
      a->ensure_grad();
      a->grad_mat() += wc->asDiagonal() * out->grad_mat();
    });
  }
  return out;
}

// out[b, :] = sum_i weights[b, i] * states[i][b, :], with gradients into both
// the per-position states and the weight matrix.
template <class S>
TensorPtrT<S> attention_combine(TapeT<S>& tape, const std::vector<TensorPtrT<S>>& states,
                                const TensorPtrT<S>& weights) {
  if (states.empty()) throw ContractError("attention_combine: no states");
  detail::require_rank2("attention_combine", weights);
  const int n = static_cast<int>(states.size());
  const int batch = states[0]->rows();
  const int h = states[0]->cols();
  if (weights->rows() != batch || weights->cols() != n) {
    throw ShapeError("attention_combine: weights " + shape_str(weights->shape) + " do not match " +
                     std::to_string(n) + " states of " + shape_str(states[0]->shape));
  }
  for (const auto& s : states) {
    if (s->rows() != batch || s->cols() != h) {
      throw ShapeError("attention_combine: state shape " + shape_str(s->shape) +
                       " differs from " + shape_str(states[0]->shape));
    }
  }
  auto out = make_tensor<S>(std::vector<int>{batch, h});
  for (int i = 0; i < n; ++i) {
    out->mat() += weights->mat().col(i).asDiagonal() * states[i]->mat();
  }
  bool any = weights->requires_grad;
  for (const auto& s : states) any = any || s->requires_grad;
  if (tape.recording() && any) {
    out->requires_grad = true;
    tape.record(out, [states, weights, out, n]() {
      for (int i = 0; i < n; ++i) {
        if (states[i]->requires_grad) {
          states[i]->ensure_grad();
          states[i]->grad_mat() += weights->mat().col(i).asDiagonal() * out->grad_mat();
        }
        if (weights->requires_grad) {
          weights->ensure_grad();
          weights->grad_mat().col(i) +=
              (states[i]->mat().cwiseProduct(out->grad_mat())).rowwise().sum();
        }
      }
    });
  }
  return out;
}

}  // namespace mmt
