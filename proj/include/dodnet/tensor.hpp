#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dodnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// One entry of the define-by-run tape. A node owns its forward value and,
/// once backward reaches it, a gradient buffer of identical shape.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward_fn;

  T* grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

/// Dense row-major tensor handle. Copies share the underlying node; use
/// `clone()` for a deep copy.
template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  const T* ptr() const { return node_->value.data(); }
  T* mutable_ptr() { return node_->value.data(); }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Gradient buffer; all zeros if backward never reached this tensor.
  std::span<const T> grad() const;
  std::span<T> mutable_grad() { return {node_->grad_buffer(), node_->value.size()}; }
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Whether ops record themselves on the tape. Thread-local.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Forward outputs are scanned for NaN/Inf when enabled (the default).
void set_finite_checks(bool enabled);
bool finite_checks();

/// Builds the output of a differentiable op. `backward` is attached only when
/// grad mode is on and at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward);

}  // namespace dodnet
