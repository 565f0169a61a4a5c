#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pathweaver/numcore/tensor.hpp"

namespace pathweaver::num {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Non-leaf nodes own their parents, so a
// computation graph lives exactly as long as its root handle.
struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

// Handle to a tape node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool defined() const noexcept { return static_cast<bool>(node_); }
  void zero_grad() { node_->grad = Tensor(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Leaf without gradient.
Var constant(Tensor value);
// Trainable leaf; its gradient accumulates across backward() calls until
// cleared with zero_grad().
Var leaf(Tensor value);

// Populates gradients of every requires-grad node reachable from `loss`.
// Throws ContractError unless `loss` is 1 x 1.
void backward(const Var& loss);

// While alive, new ops on this thread record no tape.
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

namespace detail {
// Builds a result node; the tape entry is dropped when no parent needs a
// gradient or recording is disabled.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);
}  // namespace detail

}  // namespace pathweaver::num
