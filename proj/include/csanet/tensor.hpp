#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csanet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation receives tensors of incompatible shape. The
/// message names the offending dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Rank-4 shape in (batch, channel, height, width) order.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const;
  bool operator==(const Shape&) const = default;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches the node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense 4-D tensor of doubles. Copies are cheap handles onto the same
/// storage; results of operations on tensors that require grad remember how
/// they were produced so that backward() can differentiate them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  /// Writable view. Only meaningful on leaves; mutating a recorded
  /// intermediate invalidates its backward rule.
  std::span<double> mutable_data() { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  double item() const;
  double at(int n, int c, int h, int w) const;

  /// Same values, detached from any recorded history.
  Tensor detach() const;
  Tensor clone() const;

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Records a new operation output. If any input requires grad the output
/// keeps the inputs alive and registers `backward`; otherwise the history is
/// dropped. Exposed so tests and tools can define custom operations.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, const char* op,
                   std::function<void(detail::Node&)> backward);

/// The ordered list of operations reachable from a root tensor. Every
/// node appears after all of its inputs.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<detail::Node* const> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool is_topological() const;

 private:
  std::vector<detail::Node*> nodes_;
};

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls
/// until cleared; intermediate gradients are released afterwards.
void backward(const Tensor& loss);

}  // namespace csanet
