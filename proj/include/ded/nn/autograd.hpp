#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a handle to a graph node. Every op allocates a node holding its
// value and, when any input requires gradients, a closure that pushes the
// node's gradient back into its inputs. backward() runs the closures in
// reverse topological order. Parameters are ordinary leaf nodes that live
// across graphs; their gradients accumulate until zeroed by the optimizer.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace ded::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph construction on this thread while alive.
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
Var leaf(Matrix value);  // requires_grad = true

// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
void backward(const Var& root);

// Arithmetic. Shapes must match unless stated otherwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // row: 1 x cols, broadcast down
Var mul_col(const Var& a, const Var& col);  // col: rows x 1, broadcast across
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// Elementwise.
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var silu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var log_sigmoid(const Var& a);

// Structure.
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const Eigen::Index> index);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);  // row-major order
// Repeats a (r x c) block `times` times vertically.
Var tile_rows(const Var& a, Eigen::Index times);
// Repeats a (r x c) block `times` times horizontally.
Var tile_cols(const Var& a, Eigen::Index times);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);  // rows x 1
// Mean over consecutive row blocks of equal length; rows must divide evenly.
Var block_mean_rows(const Var& a, Eigen::Index block);

// Row-wise layer normalization with learned gain/bias (1 x cols each).
Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);

// Row segment [start, start + length).
struct Segment {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

// Scaled dot-product attention batched over independent row segments and
// heads. For segment s and head h, queries are q rows q_segments[s] and
// columns [h*dk, (h+1)*dk); keys/values use kv_segments[s]. The output has
// q's row count and heads*dv columns.
Var segmented_attention(const Var& q, const Var& k, const Var& v,
                        std::span<const Segment> q_segments,
                        std::span<const Segment> kv_segments, int heads);

// For each row n, the mean over rows listed in neighbors[n] (zero row when
// the list is empty). Each output coordinate sums its addends in ascending
// value order, so the result is bitwise independent of neighbor ordering.
Var neighbor_mean(const Var& a, const std::vector<std::vector<Eigen::Index>>& neighbors);

}  // namespace ded::nn
