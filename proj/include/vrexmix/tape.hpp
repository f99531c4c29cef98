// Copyright 2026 The vrexmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the node's gradient onto its parents. Nodes are
// appended after their parents, so walking the node list backwards is a
// reverse topological order and each node is visited once.

#ifndef VREXMIX_TAPE_HPP_
#define VREXMIX_TAPE_HPP_

#include "vrexmix/error.hpp"
#include "vrexmix/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vrexmix {

template <typename Scalar>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
template <typename Scalar>
class Traced {
 public:
  Traced() = default;

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  Scalar scalar() const { return value()(0, 0); }

  std::size_t id() const { return id_; }
  Tape<Scalar>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<Scalar>;
  Traced(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Result of one backward pass.
template <typename Scalar>
class Gradients {
 public:
  /// Gradient of the root with respect to `v`; zeros shaped like `v` when the
  /// root does not depend on it.
  Matrix<Scalar> of(const Traced<Scalar>& v) const {
    if (v.tape() == tape_ && v.id() < reached_.size() && reached_[v.id()]) return grads_[v.id()];
    return Matrix<Scalar>::Zero(v.rows(), v.cols());
  }

  bool reached(const Traced<Scalar>& v) const {
    return v.tape() == tape_ && v.id() < reached_.size() && reached_[v.id()];
  }

 private:
  friend class Tape<Scalar>;
  const Tape<Scalar>* tape_ = nullptr;
  std::vector<Matrix<Scalar>> grads_;
  std::vector<bool> reached_;
};

template <typename Scalar>
class Tape {
 public:
  using MatrixType = Matrix<Scalar>;
  using Value = Traced<Scalar>;
  /// Adds the node's contribution to each parent gradient. Entries of
  /// `parent_grads` are null for parents that do not require a gradient.
  using BackwardFn =
      std::function<void(const MatrixType& out_grad, std::span<MatrixType* const> parent_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Value variable(MatrixType value) { return push(std::move(value), {}, nullptr, true); }

  /// Leaf that never receives a gradient.
  Value constant(MatrixType value) { return push(std::move(value), {}, nullptr, false); }

  Value record(MatrixType value, std::initializer_list<Value> parents, BackwardFn fn) {
    return record(std::move(value), std::vector<Value>(parents), std::move(fn));
  }

  Value record(MatrixType value, const std::vector<Value>& parents, BackwardFn fn) {
    std::vector<std::size_t> ids;
    ids.reserve(parents.size());
    bool needs_grad = false;
    for (const auto& p : parents) {
      if (p.tape() != this) throw UsageError("operand belongs to a different tape");
      ids.push_back(p.id());
      needs_grad = needs_grad || nodes_[p.id()].requires_grad;
    }
    return push(std::move(value), std::move(ids), std::move(fn), needs_grad);
  }

  const MatrixType& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar root. Does not modify the tape, so repeated
  /// calls return identical gradients.
  Gradients<Scalar> backward(const Value& root) const {
    if (root.tape() != this) throw UsageError("backward: root belongs to a different tape");
    if (!root.is_scalar())
      throw UsageError("backward: root must be a scalar, got " + shape_string(root.value()));

    Gradients<Scalar> out;
    out.tape_ = this;
    out.grads_.resize(nodes_.size());
    out.reached_.assign(nodes_.size(), false);
    out.grads_[root.id()] = MatrixType::Ones(1, 1);
    out.reached_[root.id()] = true;

    std::vector<MatrixType*> parent_grads;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      if (!out.reached_[i]) continue;
      const Node& node = nodes_[i];
      if (!node.backward || !node.requires_grad) continue;
      parent_grads.clear();
      for (std::size_t p : node.parents) {
        if (!nodes_[p].requires_grad) {
          parent_grads.push_back(nullptr);
          continue;
        }
        if (!out.reached_[p]) {
          out.grads_[p] = MatrixType::Zero(nodes_[p].value.rows(), nodes_[p].value.cols());
          out.reached_[p] = true;
        }
        parent_grads.push_back(&out.grads_[p]);
      }
      node.backward(out.grads_[i], std::span<MatrixType* const>(parent_grads));
    }
    return out;
  }

 private:
  struct Node {
    MatrixType value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Value push(MatrixType value, std::vector<std::size_t> parents, BackwardFn fn, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(fn), requires_grad});
    return Value(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

enum class VarianceMode { population, sample };

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

template <typename Scalar>
Traced<Scalar> matmul(const Traced<Scalar>& a, const Traced<Scalar>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree for " + shape_string(a.value()) + " and " +
                     shape_string(b.value()));
  Tape<Scalar>& tape = *a.tape();
  Matrix<Scalar> out = a.value() * b.value();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(std::move(out), {a, b},
                     [&tape, ia, ib](const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (pg[0]) pg[0]->noalias() += g * tape.value(ib).transpose();
                       if (pg[1]) pg[1]->noalias() += tape.value(ia).transpose() * g;
                     });
}

/// Elementwise sum of equally shaped operands.
template <typename Scalar>
Traced<Scalar> add(const Traced<Scalar>& a, const Traced<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("add: shapes differ, " + shape_string(a.value()) + " and " +
                     shape_string(b.value()));
  Tape<Scalar>& tape = *a.tape();
  return tape.record(a.value() + b.value(), {a, b},
                     [](const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (pg[0]) *pg[0] += g;
                       if (pg[1]) *pg[1] += g;
                     });
}

/// Adds a 1 x n row to every row of an m x n operand.
template <typename Scalar>
Traced<Scalar> add_row_broadcast(const Traced<Scalar>& a, const Traced<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_row_broadcast: cannot broadcast " + shape_string(row.value()) + " over " +
                     shape_string(a.value()));
  Tape<Scalar>& tape = *a.tape();
  Matrix<Scalar> out = a.value();
  out.rowwise() += row.value().row(0);
  return tape.record(std::move(out), {a, row},
                     [](const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (pg[0]) *pg[0] += g;
                       if (pg[1]) *pg[1] += g.colwise().sum();
                     });
}

template <typename Scalar>
Traced<Scalar> scale(const Traced<Scalar>& a, Scalar factor) {
  Tape<Scalar>& tape = *a.tape();
  return tape.record(a.value() * factor, {a},
                     [factor](const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (pg[0]) *pg[0] += g * factor;
                     });
}

/// max(0, x) elementwise. The subgradient at exactly 0 is 0.
template <typename Scalar>
Traced<Scalar> relu(const Traced<Scalar>& a) {
  Tape<Scalar>& tape = *a.tape();
  const std::size_t ia = a.id();
  return tape.record(a.value().cwiseMax(Scalar(0)), {a},
                     [&tape, ia](const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (!pg[0]) return;
                       const Matrix<Scalar>& x = tape.value(ia);
                       *pg[0] += (x.array() > Scalar(0)).select(g, Scalar(0)).matrix();
                     });
}

/// Mean over the batch of -sum_c target_c * log softmax(logits)_c.
/// `targets` rows are probability distributions (one-hot or soft).
template <typename Scalar>
Traced<Scalar> softmax_cross_entropy(const Traced<Scalar>& logits, const Matrix<Scalar>& targets) {
  const Matrix<Scalar>& z = logits.value();
  if (z.cols() < 2) throw ValidationError("softmax_cross_entropy: need at least 2 classes");
  if (z.rows() == 0) throw ValidationError("softmax_cross_entropy: empty batch");
  if (targets.rows() != z.rows() || targets.cols() != z.cols())
    throw ShapeError("softmax_cross_entropy: targets " + shape_string(targets) +
                     " do not match logits " + shape_string(z));
  for (Eigen::Index r = 0; r < targets.rows(); ++r) {
    const Scalar s = targets.row(r).sum();
    if (!(std::abs(s - Scalar(1)) <= Scalar(1e-9)))
      throw ValidationError("softmax_cross_entropy: target row " + std::to_string(r) +
                            " sums to " + std::to_string(static_cast<double>(s)) + ", expected 1");
  }

  const Eigen::Index batch = z.rows();
  Matrix<Scalar> probs(z.rows(), z.cols());
  Scalar total = 0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    Eigen::Index arg = 0;
    const Scalar top = z.row(r).maxCoeff(&arg);
    Scalar rest = 0;
    for (Eigen::Index c = 0; c < z.cols(); ++c)
      if (c != arg) rest += std::exp(z(r, c) - top);
    const Scalar log_norm = std::log1p(rest);
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const Scalar log_p = z(r, c) - top - log_norm;
      probs(r, c) = std::exp(log_p);
      if (targets(r, c) != Scalar(0)) total -= targets(r, c) * log_p;
    }
  }

  Tape<Scalar>& tape = *logits.tape();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(batch);
  return tape.record(std::move(out), {logits},
                     [probs = std::move(probs), targets, batch](
                         const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (pg[0]) *pg[0] += (probs - targets) * (g(0, 0) / static_cast<Scalar>(batch));
                     });
}

template <typename Scalar>
Traced<Scalar> reduce_mean(const Traced<Scalar>& a) {
  const Eigen::Index n = a.value().size();
  if (n == 0) throw ValidationError("reduce_mean: empty input");
  Tape<Scalar>& tape = *a.tape();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum() / static_cast<Scalar>(n);
  return tape.record(std::move(out), {a},
                     [n](const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (pg[0]) pg[0]->array() += g(0, 0) / static_cast<Scalar>(n);
                     });
}

/// Variance of all entries of `a`. Population mode divides by n, sample mode
/// by n - 1. The gradient uses sum(a_i - mean) = 0, so only the direct term
/// (2 / divisor)(a_i - mean) survives.
template <typename Scalar>
Traced<Scalar> variance(const Traced<Scalar>& a, VarianceMode mode = VarianceMode::population) {
  const Eigen::Index n = a.value().size();
  if (n < 2) throw ValidationError("variance: need at least 2 entries, got " + std::to_string(n));
  const Scalar mean = a.value().sum() / static_cast<Scalar>(n);
  Matrix<Scalar> centered = a.value().array() - mean;
  const Scalar divisor = static_cast<Scalar>(mode == VarianceMode::population ? n : n - 1);
  Matrix<Scalar> out(1, 1);
  out(0, 0) = centered.squaredNorm() / divisor;
  Tape<Scalar>& tape = *a.tape();
  return tape.record(std::move(out), {a},
                     [centered = std::move(centered), divisor](
                         const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       if (pg[0]) *pg[0] += centered * (Scalar(2) * g(0, 0) / divisor);
                     });
}

/// Stacks scalar nodes into an n x 1 column.
template <typename Scalar>
Traced<Scalar> stack(std::span<const Traced<Scalar>> scalars) {
  if (scalars.empty()) throw ValidationError("stack: no operands");
  Tape<Scalar>& tape = *scalars.front().tape();
  Matrix<Scalar> out(static_cast<Eigen::Index>(scalars.size()), 1);
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (!scalars[i].is_scalar())
      throw ShapeError("stack: operand " + std::to_string(i) + " is " +
                       shape_string(scalars[i].value()) + ", expected a scalar");
    out(static_cast<Eigen::Index>(i), 0) = scalars[i].scalar();
  }
  return tape.record(std::move(out), std::vector<Traced<Scalar>>(scalars.begin(), scalars.end()),
                     [](const Matrix<Scalar>& g, std::span<Matrix<Scalar>* const> pg) {
                       for (std::size_t i = 0; i < pg.size(); ++i)
                         if (pg[i]) (*pg[i])(0, 0) += g(static_cast<Eigen::Index>(i), 0);
                     });
}

template <typename Scalar>
Traced<Scalar> stack(const std::vector<Traced<Scalar>>& scalars) {
  return stack(std::span<const Traced<Scalar>>(scalars));
}

}  // namespace vrexmix

#endif  // VREXMIX_TAPE_HPP_
