// Minimal dense tensor with reverse-mode automatic differentiation.
//
// Tensors are rank 0, 1 or 2 and hold 64-bit floats. Rank-1 tensors are stored
// as row vectors, so feature vectors compose with weight matrices on the right
// (y = x * W). The graph is built define-by-run: every primitive records a node
// with its inputs and a backward rule; `backward` walks the recorded nodes in
// reverse creation order, which is a reverse topological order by construction.
//
// Broadcasting is intentionally narrow: scalar-tensor, plus row-vector bias in
// `add`/`mul` ((n,d) op (1,d)). Everything else must match shapes exactly.
//
// A graph and its tensors are confined to one thread at a time; independent
// graphs may live on different threads (the node-id counter is atomic).
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lmot/errors.hpp"

namespace lmot {

using Shape = std::vector<Eigen::Index>;

std::string shape_str(const Shape& s);

namespace detail {

struct Node {
  std::int64_t id = 0;
  int rank = 2;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;  // empty until first accumulation
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad or reachable from such a leaf
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Eigen::MatrixXd& g);
};

}  // namespace detail

/// True unless a NoGradGuard is active on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
/// Primitives still compute values but produce detached constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  /// Rank-2 leaf.
  static Tensor matrix(Eigen::MatrixXd v, bool requires_grad = false);
  /// Rank-1 leaf (stored as a 1 x n row).
  static Tensor row(Eigen::RowVectorXd v, bool requires_grad = false);
  /// Rank-0 leaf.
  static Tensor scalar(double v, bool requires_grad = false);
  /// Leaf with an explicit rank (0, 1 or 2); storage shape must agree.
  static Tensor leaf(Eigen::MatrixXd v, int rank, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Eigen::MatrixXd& value() const;
  /// Leaf-only in-place value update (optimizer steps, finite differences).
  Eigen::MatrixXd& mutable_value();
  bool has_grad() const;
  const Eigen::MatrixXd& grad() const;
  void zero_grad();
  bool requires_grad() const;
  int rank() const;
  Shape shape() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  Eigen::Index size() const;
  std::int64_t node_id() const;
  /// Row-major flat copy of the values.
  std::vector<double> flat() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Primitives. Each computes the forward value and registers a backward rule.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& a, int axis, Eigen::Index begin, Eigen::Index len);
Tensor transpose(const Tensor& a);
/// Softmax over the last axis (per row).
Tensor softmax(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(1 + e^x), evaluated in the overflow-safe form.
Tensor softplus(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor abs(const Tensor& a);
/// Per-row normalization to zero mean / unit variance (no affine part).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor gather_rows(const Tensor& a, const std::vector<Eigen::Index>& rows);
/// Reinterprets the row-major flat data with a new (rows, cols) shape.
Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols);
/// Repeats a (1, d) row n times into an (n, d) matrix.
Tensor tile_rows(const Tensor& a, Eigen::Index n);

/// Reverse pass from a scalar loss. Every leaf with requires_grad reachable
/// from `loss` receives its accumulated gradient; repeated use of a tensor
/// sums contributions. Grads persist until zero_grad.
void backward(const Tensor& loss);

/// Max relative error between the reverse-mode gradient of f (summed to a
/// scalar if f returns a non-scalar) and central finite differences at x.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-6);

}  // namespace lmot
