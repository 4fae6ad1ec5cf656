#include "corrtrack/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace corrtrack {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data.assign(shape_numel(t.impl_->shape), 0.0);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->data) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    std::ostringstream os;
    os << "from_data: shape " << shape_str(shape) << " expects "
       << shape_numel(shape) << " values, got " << data.size();
    throw ShapeError(os.str());
  }
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = 1.0;
  return t;
}

double Tensor::value() const {
  if (size() != 1) {
    throw ShapeError("value(): tensor has " + std::to_string(size()) +
                     " elements, expected exactly 1");
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw ShapeError("at(i,j): tensor is not 2-D");
  if (i >= dim(0) || j >= dim(1)) throw ShapeError("at(i,j): out of range");
  return impl_->data[i * dim(1) + j];
}

Tensor& Tensor::set_requires_grad(bool requires_grad) {
  impl_->requires_grad = requires_grad;
  return *this;
}

Tensor Tensor::clone() const {
  return from_data(shape(), impl_->data, impl_->requires_grad);
}

namespace {
thread_local GradientTape* g_active_tape = nullptr;
}

GradientTape::GradientTape() : prev_(g_active_tape) { g_active_tape = this; }

GradientTape::~GradientTape() { g_active_tape = prev_; }

GradientTape* GradientTape::active() { return g_active_tape; }

void GradientTape::record(const Tensor& output, BackwardFn fn) {
  nodes_.push_back(Node{output, std::move(fn)});
}

void GradientTape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a single-element tensor, got " +
                     shape_str(loss.shape()));
  }
  grads_.clear();
  grads_.emplace(loss.id(), Tensor::full(loss.shape(), 1.0));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto found = grads_.find(it->output.id());
    if (found == grads_.end()) continue;  // node does not feed the loss
    it->fn(found->second, *this);
  }
}

Tensor GradientTape::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor();
  return it->second;
}

void GradientTape::accumulate(const Tensor& t, const Tensor& g) {
  if (!t.requires_grad()) return;
  if (t.shape() != g.shape()) {
    throw ShapeError("accumulate: gradient shape " + shape_str(g.shape()) +
                     " does not match tensor shape " + shape_str(t.shape()));
  }
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    grads_.emplace(t.id(), g.clone());
    return;
  }
  Tensor& slot = it->second;
  const double* src = g.data();
  double* dst = slot.data();
  for (std::size_t i = 0; i < slot.size(); ++i) dst[i] += src[i];
}

}  // namespace corrtrack
