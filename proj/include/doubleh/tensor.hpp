// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a reverse-mode tape.
//
// Every tensor is rank 2; a vector is a single row. Row-wise ops (layernorm,
// l2_normalize, softmax) treat each row as an independent vector, which is how
// the message-passing layers batch many neighbor vectors into one op.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "doubleh/errors.hpp"
#include "doubleh/random.hpp"

namespace doubleh {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Tensor row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(1, n, std::move(values));
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  bool same_shape(const Tensor& other) const noexcept { return rows_ == other.rows_ && cols_ == other.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor transposed() const {
    Tensor t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

enum class Mode { Train, Eval };
enum class Reduction { Sum, Mean };
enum class SegmentReduce { Sum, Mean, Max };

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of computed values. Node ids are assigned in creation
/// order, so the record is topologically sorted by construction.
class Tape {
 public:
  /// Reads the node's output gradient and accumulates into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value) { return push(std::move(value), true, nullptr, "variable"); }
  Var constant(Tensor value) { return push(std::move(value), false, nullptr, "constant"); }

  /// Records an op result. The backward rule is kept only when an input needs
  /// a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward), op);
  }

  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op) {
    bool needs = false;
    for (const Var& in : inputs) {
      if (in.tape() != this) throw ConfigError(std::string(op) + ": operand from a different tape");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr, op);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer for node `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.grad) n.grad.emplace(n.value.rows(), n.value.cols());
    return *n.grad;
  }

  /// Upstream gradient of `id` during backward; null when nothing reached it.
  const Tensor* upstream(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.grad ? &*n.grad : nullptr;
  }

  /// Gradient of `v` after backward(). Zero when `v` is disconnected from the loss.
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad) return *n.grad;
    return Tensor(n.value.rows(), n.value.cols());
  }

  void backward(Var loss) {
    if (loss.tape() != this) throw ConfigError("backward: loss from a different tape");
    const Tensor& lv = nodes_[loss.id()].value;
    if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_string(lv));
    for (Node& n : nodes_) n.grad.reset();
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.backward && n.grad) n.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn backward, const char* op) {
    if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite value");
    nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  // stable references across push_back
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline Tape& tape_of(Var v, const char* op) {
  if (v.tape() == nullptr) throw ConfigError(std::string(op) + ": unbound variable");
  return *v.tape();
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  const double* xp = x.data();
  double* yp = y.data();
  for (std::size_t i = 0; i < n; ++i) yp[i] += a * xp[i];
}

}  // namespace detail

/// y = x W^T (+ b) for every row of x. W is out x in; b is 1 x out.
inline Var affine(Var x, Var w, std::optional<Var> b = std::nullopt) {
  Tape& tape = detail::tape_of(x, "affine");
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  if (X.cols() != W.cols()) {
    throw ShapeError("affine: input " + shape_string(X) + " does not conform to weight " + shape_string(W));
  }
  if (b && (b->value().rows() != 1 || b->value().cols() != W.rows())) {
    throw ShapeError("affine: bias " + shape_string(b->value()) + " does not conform to weight " + shape_string(W));
  }
  const std::size_t n = X.rows(), in = W.cols(), out = W.rows();
  const Tensor Wt = W.transposed();
  Tensor Y(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    auto y = Y.row(r);
    if (b) std::copy_n(b->value().values().begin(), out, y.begin());
    const auto xr = X.row(r);
    for (std::size_t i = 0; i < in; ++i) {
      if (xr[i] != 0.0) detail::axpy(xr[i], Wt.row(i), y);
    }
  }
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  const std::size_t xid = x.id(), wid = w.id();
  const std::optional<std::size_t> bid = b ? std::optional(b->id()) : std::nullopt;
  return tape.record(
      std::move(Y), inputs,
      [xid, wid, bid](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        const Tensor& X = t.value(xid);
        const Tensor& W = t.value(wid);
        if (t.requires_grad(xid)) {
          Tensor& dX = t.grad_buffer(xid);
          for (std::size_t r = 0; r < G.rows(); ++r) {
            const auto g = G.row(r);
            for (std::size_t o = 0; o < g.size(); ++o) {
              if (g[o] != 0.0) detail::axpy(g[o], W.row(o), dX.row(r));
            }
          }
        }
        if (t.requires_grad(wid)) {
          Tensor& dW = t.grad_buffer(wid);
          for (std::size_t r = 0; r < G.rows(); ++r) {
            const auto g = G.row(r);
            for (std::size_t o = 0; o < g.size(); ++o) {
              if (g[o] != 0.0) detail::axpy(g[o], X.row(r), dW.row(o));
            }
          }
        }
        if (bid && t.requires_grad(*bid)) {
          Tensor& db = t.grad_buffer(*bid);
          for (std::size_t r = 0; r < G.rows(); ++r) detail::axpy(1.0, G.row(r), db.row(0));
        }
      },
      "affine");
}

/// Per-row (x - mean) / sqrt(var + eps) with population variance. No gain or bias.
inline Var layernorm(Var x, double eps = 1e-5) {
  Tape& tape = detail::tape_of(x, "layernorm");
  const Tensor& X = x.value();
  if (X.cols() == 0) throw ShapeError("layernorm: empty rows");
  if (!(eps > 0.0)) throw ConfigError("layernorm: eps must be positive");
  const std::size_t n = X.rows(), d = X.cols();
  Tensor Y(n, d);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto xr = X.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto yr = Y.row(r);
    for (std::size_t c = 0; c < d; ++c) yr[c] = (xr[c] - mean) * inv_std[r];
  }
  const std::size_t xid = x.id();
  return tape.record(
      std::move(Y), {x},
      [xid, inv = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        const Tensor& Y = t.value(self);
        Tensor& dX = t.grad_buffer(xid);
        const std::size_t d = G.cols();
        for (std::size_t r = 0; r < G.rows(); ++r) {
          const auto g = G.row(r);
          const auto y = Y.row(r);
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            g_mean += g[c];
            gy_mean += g[c] * y[c];
          }
          g_mean /= static_cast<double>(d);
          gy_mean /= static_cast<double>(d);
          auto dx = dX.row(r);
          for (std::size_t c = 0; c < d; ++c) dx[c] += inv[r] * (g[c] - g_mean - y[c] * gy_mean);
        }
      },
      "layernorm");
}

inline Var relu(Var x) {
  Tape& tape = detail::tape_of(x, "relu");
  Tensor Y = x.value();
  for (double& v : Y.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t xid = x.id();
  return tape.record(
      std::move(Y), {x},
      [xid](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        const Tensor& X = t.value(xid);
        Tensor& dX = t.grad_buffer(xid);
        for (std::size_t i = 0; i < G.size(); ++i) {
          if (X[i] > 0.0) dX[i] += G[i];
        }
      },
      "relu");
}

/// Inverted dropout: train mode zeroes each entry with probability p and
/// scales survivors by 1/(1-p). Eval mode and p = 0 return `x` unchanged and
/// draw nothing from `rng`. Entries are visited in row-major order.
inline Var dropout(Var x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0) || p >= 1.0) throw ConfigError("dropout: probability must lie in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) return x;
  Tape& tape = detail::tape_of(x, "dropout");
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = uniform01(rng) < p ? 0.0 : scale;
  Tensor Y = x.value();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= mask[i];
  const std::size_t xid = x.id();
  return tape.record(
      std::move(Y), {x},
      [xid, mask = std::move(mask)](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        Tensor& dX = t.grad_buffer(xid);
        for (std::size_t i = 0; i < G.size(); ++i) dX[i] += G[i] * mask[i];
      },
      "dropout");
}

/// Per-row x / max(||x||_2, eps).
inline Var l2_normalize(Var x, double eps = 1e-12) {
  Tape& tape = detail::tape_of(x, "l2_normalize");
  const Tensor& X = x.value();
  Tensor Y(X.rows(), X.cols());
  std::vector<double> denom(X.rows());
  std::vector<char> clamped(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double sq = 0.0;
    for (double v : X.row(r)) sq += v * v;
    const double norm = std::sqrt(sq);
    clamped[r] = norm <= eps;
    denom[r] = clamped[r] ? eps : norm;
    auto yr = Y.row(r);
    const auto xr = X.row(r);
    for (std::size_t c = 0; c < X.cols(); ++c) yr[c] = xr[c] / denom[r];
  }
  const std::size_t xid = x.id();
  return tape.record(
      std::move(Y), {x},
      [xid, denom = std::move(denom), clamped = std::move(clamped)](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        const Tensor& Y = t.value(self);
        Tensor& dX = t.grad_buffer(xid);
        for (std::size_t r = 0; r < G.rows(); ++r) {
          const auto g = G.row(r);
          const auto y = Y.row(r);
          auto dx = dX.row(r);
          double gy = 0.0;
          if (!clamped[r]) {
            for (std::size_t c = 0; c < g.size(); ++c) gy += g[c] * y[c];
          }
          for (std::size_t c = 0; c < g.size(); ++c) dx[c] += (g[c] - y[c] * gy) / denom[r];
        }
      },
      "l2_normalize");
}

/// Row-stabilized softmax of a single logit row.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

struct CrossEntropy {
  Var loss;      ///< 1 x 1
  Tensor probs;  ///< rows x classes
};

/// Fused log-softmax cross-entropy over the rows of `logits`.
inline CrossEntropy softmax_cross_entropy(Var logits, std::span<const std::size_t> targets,
                                          Reduction reduction = Reduction::Sum) {
  Tape& tape = detail::tape_of(logits, "softmax_cross_entropy");
  const Tensor& Z = logits.value();
  if (Z.cols() < 2) throw ShapeError("softmax_cross_entropy: need at least two classes");
  if (Z.rows() == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  if (targets.size() != Z.rows()) throw ShapeError("softmax_cross_entropy: target count does not match rows");
  Tensor P(Z.rows(), Z.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < Z.rows(); ++r) {
    if (targets[r] >= Z.cols()) {
      throw ConfigError("softmax_cross_entropy: target " + std::to_string(targets[r]) + " out of range");
    }
    const auto z = Z.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    const double log_z = mx + std::log(s);
    auto p = P.row(r);
    for (std::size_t c = 0; c < z.size(); ++c) p[c] = std::exp(z[c] - log_z);
    total += log_z - z[targets[r]];
  }
  const double scale = reduction == Reduction::Mean ? 1.0 / static_cast<double>(Z.rows()) : 1.0;
  const std::size_t zid = logits.id();
  Var loss = tape.record(
      Tensor(1, 1, total * scale), {logits},
      [zid, P, scale, tg = std::vector<std::size_t>(targets.begin(), targets.end())](Tape& t, std::size_t self) {
        const double g = (*t.upstream(self))[0] * scale;
        Tensor& dZ = t.grad_buffer(zid);
        for (std::size_t r = 0; r < P.rows(); ++r) {
          auto dz = dZ.row(r);
          const auto p = P.row(r);
          for (std::size_t c = 0; c < p.size(); ++c) dz[c] += g * (p[c] - (c == tg[r] ? 1.0 : 0.0));
        }
      },
      "softmax_cross_entropy");
  return {loss, std::move(P)};
}

/// Rows of x picked by `index`, repeats allowed.
inline Var gather_rows(Var x, std::span<const std::size_t> index) {
  Tape& tape = detail::tape_of(x, "gather_rows");
  const Tensor& X = x.value();
  Tensor Y(index.size(), X.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= X.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(X.row(index[i]).begin(), X.cols(), Y.row(i).begin());
  }
  const std::size_t xid = x.id();
  return tape.record(
      std::move(Y), {x},
      [xid, idx = std::vector<std::size_t>(index.begin(), index.end())](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        Tensor& dX = t.grad_buffer(xid);
        for (std::size_t i = 0; i < idx.size(); ++i) detail::axpy(1.0, G.row(i), dX.row(idx[i]));
      },
      "gather_rows");
}

/// Stacks row blocks with equal column counts.
inline Var concat_rows(std::span<const Var> parts, std::size_t cols) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  Tape& tape = detail::tape_of(parts.front(), "concat_rows");
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor Y(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t at = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), Y.values().begin() + at * cols);
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.rows();
  }
  return tape.record(
      std::move(Y), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& d = t.grad_buffer(ids[k]);
          const double* g = G.values().data() + offsets[k] * G.cols();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
      },
      "concat_rows");
}

/// [a | b] row by row.
inline Var concat_cols(Var a, Var b) {
  Tape& tape = detail::tape_of(a, "concat_cols");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows()) throw ShapeError("concat_cols: row mismatch " + shape_string(A) + " vs " + shape_string(B));
  Tensor Y(A.rows(), A.cols() + B.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    auto y = Y.row(r);
    std::copy(A.row(r).begin(), A.row(r).end(), y.begin());
    std::copy(B.row(r).begin(), B.row(r).end(), y.begin() + static_cast<std::ptrdiff_t>(A.cols()));
  }
  const std::size_t aid = a.id(), bid = b.id(), ac = A.cols();
  return tape.record(
      std::move(Y), {a, b},
      [aid, bid, ac](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        if (t.requires_grad(aid)) {
          Tensor& dA = t.grad_buffer(aid);
          for (std::size_t r = 0; r < G.rows(); ++r) detail::axpy(1.0, G.row(r).first(ac), dA.row(r));
        }
        if (t.requires_grad(bid)) {
          Tensor& dB = t.grad_buffer(bid);
          for (std::size_t r = 0; r < G.rows(); ++r) detail::axpy(1.0, G.row(r).subspan(ac), dB.row(r));
        }
      },
      "concat_cols");
}

/// Reduces rows of x into `segments` output rows; row i goes to segment[i].
/// Segments with no members produce zero rows.
inline Var segment_reduce(Var x, std::span<const std::size_t> segment, std::size_t segments,
                          SegmentReduce kind = SegmentReduce::Sum) {
  Tape& tape = detail::tape_of(x, "segment_reduce");
  const Tensor& X = x.value();
  if (segment.size() != X.rows()) throw ShapeError("segment_reduce: one segment id per row required");
  const std::size_t d = X.cols();
  Tensor Y(segments, d);
  std::vector<std::size_t> count(segments, 0);
  // Max keeps, per output entry, the source row that won.
  std::vector<std::size_t> arg;
  if (kind == SegmentReduce::Max) arg.assign(segments * d, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const std::size_t s = segment[i];
    if (s >= segments) throw ShapeError("segment_reduce: segment id out of range");
    const auto xr = X.row(i);
    auto yr = Y.row(s);
    if (kind == SegmentReduce::Max) {
      for (std::size_t c = 0; c < d; ++c) {
        std::size_t& a = arg[s * d + c];
        if (count[s] == 0 || xr[c] > yr[c]) {
          yr[c] = xr[c];
          a = i;
        }
      }
    } else {
      detail::axpy(1.0, xr, yr);
    }
    ++count[s];
  }
  std::vector<double> scale(segments, 1.0);
  if (kind == SegmentReduce::Mean) {
    for (std::size_t s = 0; s < segments; ++s) {
      if (count[s] > 0) scale[s] = 1.0 / static_cast<double>(count[s]);
      for (double& v : Y.row(s)) v *= scale[s];
    }
  }
  const std::size_t xid = x.id();
  return tape.record(
      std::move(Y), {x},
      [xid, kind, d, scale = std::move(scale), arg = std::move(arg),
       seg = std::vector<std::size_t>(segment.begin(), segment.end())](Tape& t, std::size_t self) {
        const Tensor& G = *t.upstream(self);
        Tensor& dX = t.grad_buffer(xid);
        if (kind == SegmentReduce::Max) {
          for (std::size_t s = 0; s < G.rows(); ++s)
            for (std::size_t c = 0; c < d; ++c) {
              const std::size_t a = arg[s * d + c];
              if (a != std::numeric_limits<std::size_t>::max()) dX(a, c) += G(s, c);
            }
          return;
        }
        for (std::size_t i = 0; i < seg.size(); ++i) detail::axpy(scale[seg[i]], G.row(seg[i]), dX.row(i));
      },
      "segment_reduce");
}

/// Sum of all entries, as a 1 x 1 value.
inline Var sum(Var x) {
  Tape& tape = detail::tape_of(x, "sum");
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t xid = x.id();
  return tape.record(
      Tensor(1, 1, s), {x},
      [xid](Tape& t, std::size_t self) {
        const double g = (*t.upstream(self))[0];
        for (double& v : t.grad_buffer(xid).values()) v += g;
      },
      "sum");
}

/// sum(x .* weights) as a 1 x 1 value; `weights` is a constant.
inline Var weighted_sum(Var x, const Tensor& weights) {
  Tape& tape = detail::tape_of(x, "weighted_sum");
  if (!x.value().same_shape(weights)) throw ShapeError("weighted_sum: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value()[i] * weights[i];
  const std::size_t xid = x.id();
  return tape.record(
      Tensor(1, 1, s), {x},
      [xid, weights](Tape& t, std::size_t self) {
        const double g = (*t.upstream(self))[0];
        Tensor& dX = t.grad_buffer(xid);
        for (std::size_t i = 0; i < weights.size(); ++i) dX[i] += g * weights[i];
      },
      "weighted_sum");
}

// --- Adam -------------------------------------------------------------------

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

/// One bias-corrected Adam update over a parameter list, in place.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      const AdamOptions& opt = {}) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(grads[k]) || !params[k]->same_shape(state.m[k])) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
    if (!p.all_finite()) throw NumericError("adam_step: non-finite parameter");
  }
}

}  // namespace doubleh
