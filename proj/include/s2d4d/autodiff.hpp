#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "s2d4d/hierarchy.hpp"
#include "s2d4d/rng.hpp"
#include "s2d4d/types.hpp"

// Reverse-mode differentiation over dense row-major matrices (rank <= 2).
//
// Every backward rule is written with graph operations, so a gradient
// returned with `create_graph = true` is itself a differentiable node; this
// is what the gradient penalty needs (a loss built from an input-gradient is
// differentiated again with respect to the network parameters).

namespace s2d4d::ad {

struct Node;
class Var;

using BackwardFn = std::function<std::vector<Var>(const Var& grad_out)>;

struct Node {
  Matrix value;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  bool requires_grad = false;
  const char* op = "leaf";
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Matrix& value() const { return node_->value; }
  /// Mutable access for optimizer updates of parameter leaves.
  Matrix& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }
  /// Scalar value of a 1×1 node.
  double item() const;

 private:
  std::shared_ptr<Node> node_;
};

/// While alive, newly created nodes record no inputs (pure values).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);
Var scalar(double x);
/// Trainable leaf.
Var parameter(Matrix value);
/// Leaf that gradients may be taken with respect to (not trained).
Var variable(Matrix value);

// Elementwise / structural ops. Binary ops require identical shapes unless noted.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a (r×c) + b (1×c) broadcast over rows.
Var add_row(const Var& a, const Var& b);
/// a (r×c) * col (r×1) broadcast over columns.
Var mul_col(const Var& a, const Var& col);
/// a (r×c) * row (1×c) broadcast over rows.
Var mul_row(const Var& a, const Var& row);
/// op(a) * op(b) with optional transposes.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
Var transpose(const Var& a);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var concat_cols(const Var& a, const Var& b);
/// Columns [begin, begin+count).
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);
/// Places a (r×count) at columns [begin, begin+count) of an r×total zero matrix.
Var pad_cols(const Var& a, Eigen::Index begin, Eigen::Index total);

Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
/// Elementwise power (for fractional exponents the input must be positive).
Var pow(const Var& a, double exponent);
Var square(const Var& a);
Var sqrt(const Var& a);
/// |a| with sign(0) = 0 subgradient.
Var abs(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// r×c -> r×1
Var row_sum(const Var& a);
/// r×c -> 1×c
Var col_sum(const Var& a);
/// r×1 -> r×c
Var broadcast_cols(const Var& a, Eigen::Index cols);
/// 1×c -> r×c
Var broadcast_rows(const Var& a, Eigen::Index rows);

/// Sum of absolute values.
Var l1_norm(const Var& a);
/// Frobenius norm.
Var l2_norm(const Var& a);

/// out(:, j) = a(:, index[j]).
Var gather_cols(const Var& a, std::shared_ptr<const std::vector<int>> index);
/// out(:, index[j]) += a(:, j); out has `cols` columns.
Var scatter_cols(const Var& a, std::shared_ptr<const std::vector<int>> index, Eigen::Index cols);

/// Per-row vertex transfer: row b of `a` holds `transfer.cols` vertices ×
/// `channels`; result holds `transfer.rows` vertices × `channels`.
Var transfer(const Var& a, std::shared_ptr<const SparseTransfer> op, Eigen::Index channels, bool transposed = false);

/// Gradients of the scalar `output` with respect to `wrt`. With
/// `create_graph` the results are differentiable graph nodes. Inputs the
/// output does not depend on get zero gradients; inputs that do not require
/// gradients raise InvalidInputError.
std::vector<Var> gradient(const Var& output, const std::vector<Var>& wrt, bool create_graph = false);

/// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)).
Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const std::vector<Var>& params);

/// In-place bias-corrected Adam update of parameter leaves.
void adam_step(std::vector<Var>& params, const std::vector<Var>& grads, AdamState& state, const AdamOptions& opts);
void adam_step(std::vector<Var>& params, const std::vector<Matrix>& grads, AdamState& state, const AdamOptions& opts);

}  // namespace s2d4d::ad
