#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace corrtrack {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Thrown when tensor extents do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an operation produces NaN/Inf. Non-finite values are an
/// error state, never a silent result.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
};

/// Dense row-major tensor of doubles. A Tensor is a cheap shared handle;
/// values produced by an op are treated as immutable. Mutable access via
/// data() is reserved for leaf tensors (parameter init, optimizer steps,
/// finite-difference probes).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t size() const { return impl_->data.size(); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  const std::vector<double>& values() const { return impl_->data; }

  /// Single-element read; requires size() == 1.
  double value() const;
  /// 2-D element read.
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool requires_grad);

  /// Storage identity, used as the key in gradient maps.
  const TensorImpl* id() const { return impl_.get(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  Tensor clone() const;

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Records operation nodes in execution order (a topological order of the
/// data flow) and owns the tensor-identity -> gradient map filled in by
/// backward(). One tape per training step; single-threaded.
class GradientTape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, GradientTape&)>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  /// The innermost live tape on this thread, or nullptr.
  static GradientTape* active();

  void record(const Tensor& output, BackwardFn fn);

  /// Runs the reverse pass from a scalar loss. Visits each recorded node
  /// exactly once, newest first.
  void backward(const Tensor& loss);

  /// Accumulated gradient of t, or an undefined Tensor if t never
  /// received one. Gradients match the tensor's shape.
  Tensor grad(const Tensor& t) const;

  /// Adds g into t's gradient slot (zero-initialized on first touch).
  /// No-op for tensors that do not require grad.
  void accumulate(const Tensor& t, const Tensor& g);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const TensorImpl*, Tensor> grads_;
  GradientTape* prev_ = nullptr;
};

}  // namespace corrtrack
