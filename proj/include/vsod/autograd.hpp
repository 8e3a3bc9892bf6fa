#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vsod/tensor.hpp"

namespace vsod::nn {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(const Tensor&)> backward_fn;
};

Tensor& grad_of(Node& node);

}  // namespace detail

/// Handle to a node of the reverse-mode graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  explicit operator bool() const noexcept { return defined(); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient accumulated by backward(); zeros of value's shape when none.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Seeds d(root)/d(root) = 1 for every entry and propagates to all leaves.
void backward(const Var& root);

/// While alive, new ops do not record graph edges on this thread.
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

/// Builds an op result. `backward` receives the result's gradient and
/// accumulates into parent gradients via detail::grad_of.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(const Tensor&)> backward);

}  // namespace vsod::nn
