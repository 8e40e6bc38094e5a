#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hfm/error.hpp"
#include "hfm/scalar.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

// Extents in (batch, channel, height, width) order, or a lower rank.
using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorImpl;

// Tensor storage starts on a fixed vector-register boundary. The vectorized
// kernels pick their loop peeling from the pointer alignment, so fixing it
// keeps floating-point summation order, and with it results, reproducible
// from run to run.
using Buffer = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

// Backward rule recorded by an operation. It reads the output gradient and
// accumulates into the gradients of the inputs that require them.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& output)> backward;
};

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  bool has_grad() const { return !grad.empty(); }
  std::span<Scalar> ensure_grad();
};

// Shared handle to a dense row-major array. Copies alias the same storage;
// values are treated as immutable once an operation has consumed them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, const std::vector<Scalar>& values, bool requires_grad = false);
  static Tensor from(Shape shape, Buffer values, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const Scalar> data() const { return impl_->data; }
  // Leaves only: parameters mutated by the optimizer or filled by loaders.
  std::span<Scalar> mutable_data();
  Scalar item() const;
  Scalar at(int n, int c, int h, int w) const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool is_leaf() const { return impl_->node == nullptr; }
  bool has_grad() const { return impl_->has_grad(); }
  // Accumulated gradient; zeros when nothing has flowed into this tensor.
  std::span<const Scalar> grad() const;
  std::span<Scalar> mutable_grad() { return impl_->ensure_grad(); }
  void clear_grad() { impl_->grad.clear(); }

  // Same values, no history, no gradient requirement.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Builds the result of an operation. When any input requires a gradient the
// backward rule is recorded and the result joins the graph; otherwise the
// rule is dropped and the result is a plain constant.
Tensor make_result(Shape shape, Buffer values, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& output)> backward);

// Operations recorded between a scalar loss and the leaves, in topological
// order (inputs before consumers).
class Graph {
 public:
  explicit Graph(const Tensor& loss);

  const std::vector<std::shared_ptr<TensorImpl>>& nodes() const { return order_; }

  // Seeds d(loss)/d(loss) = 1 and replays every backward rule once, in
  // reverse order. Leaf gradients accumulate; intermediate ones are released.
  void backward();

 private:
  std::shared_ptr<TensorImpl> loss_;
  std::vector<std::shared_ptr<TensorImpl>> order_;
};

void backward(const Tensor& loss);

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
