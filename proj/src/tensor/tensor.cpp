#include "hfm/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int extent : shape) {
    require(extent >= 0, "negative extent in shape " + to_string(shape));
    n *= static_cast<std::size_t>(extent);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::span<Scalar> TensorImpl::ensure_grad() {
  if (grad.empty() && !data.empty()) grad.assign(data.size(), Scalar(0));
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Scalar(0), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  const std::size_t n = hfm::numel(shape);
  return from(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, const std::vector<Scalar>& values, bool requires_grad) {
  return from(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad) {
  return from(std::move(shape), Buffer(values), requires_grad);
}

Tensor Tensor::from(Shape shape, Buffer values, bool requires_grad) {
  require(hfm::numel(shape) == values.size(),
          "tensor shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
              " values");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
  return from({}, Buffer{value}, requires_grad);
}

int Tensor::dim(int axis) const {
  require(axis >= 0 && axis < rank(), "axis out of range for shape " + to_string(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

std::span<Scalar> Tensor::mutable_data() {
  require(is_leaf(), "only leaf tensors may be mutated");
  return impl_->data;
}

Scalar Tensor::item() const {
  require(numel() == 1, "item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

Scalar Tensor::at(int n, int c, int h, int w) const {
  require(rank() == 4, "at() needs a rank-4 tensor");
  const auto& s = impl_->shape;
  return impl_->data[((static_cast<std::size_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
}

std::span<const Scalar> Tensor::grad() const {
  if (!impl_->requires_grad) {
    // Constants never accumulate; hand back a zero view of matching size.
    impl_->grad.assign(impl_->data.size(), Scalar(0));
  }
  return impl_->ensure_grad();
}

Tensor Tensor::detach() const {
  return from(impl_->shape, impl_->data, false);
}

Tensor make_result(Shape shape, Buffer values, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& output)> backward) {
  Tensor result = Tensor::from(std::move(shape), std::move(values), false);
  bool tracked = false;
  for (const Tensor& input : inputs) tracked = tracked || input.requires_grad();
  if (!tracked) return result;

  auto node = std::make_shared<Node>();
  node->inputs.reserve(inputs.size());
  for (const Tensor& input : inputs) node->inputs.push_back(input.impl());
  node->backward = std::move(backward);
  result.impl()->requires_grad = true;
  result.impl()->node = std::move(node);
  return result;
}

Graph::Graph(const Tensor& loss) : loss_(loss.impl()) {
  require(loss.defined(), "backward on an undefined tensor");
  require(loss.numel() == 1, "backward needs a scalar loss, got shape " + to_string(loss.shape()));

  // Iterative post-order DFS over non-leaf tensors.
  std::unordered_set<const TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  if (loss_->node) {
    stack.emplace_back(loss_, 0);
    visited.insert(loss_.get());
  }
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->node->inputs;
    if (next < inputs.size()) {
      const auto& child = inputs[next++];
      if (child->node && visited.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      order_.push_back(impl);
      stack.pop_back();
    }
  }
}

void Graph::backward() {
  if (!loss_->requires_grad) return;
  if (!loss_->node) {
    loss_->ensure_grad()[0] += Scalar(1);
    return;
  }
  loss_->ensure_grad()[0] = Scalar(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorImpl& impl = **it;
    if (impl.has_grad()) impl.node->backward(impl);
    impl.grad.clear();
    impl.grad.shrink_to_fit();
  }
}

void backward(const Tensor& loss) {
  Graph graph(loss);
  graph.backward();
}

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
