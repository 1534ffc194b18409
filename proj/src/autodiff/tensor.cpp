#include "lego/autodiff/tensor.hpp"

#include <numeric>

namespace lego::ad {

std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out += (i ? "," : "") + std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename S>
Tensor<S>::Tensor(Shape shape, std::vector<S> values, bool requires_grad)
    : Tensor(adopt(std::move(shape), Buffer<S>(values.begin(), values.end()), requires_grad)) {}

template <typename S>
Tensor<S> Tensor<S>::adopt(Shape shape, Buffer<S> values, bool requires_grad) {
  Tensor<S> t;
  t.data_ = std::make_shared<TensorData<S>>();
  for (const auto d : shape) {
    if (d < 0) {
      throw Error("negative dimension in shape " + to_string(shape));
    }
  }
  if (ad::numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw Error("tensor data length " + std::to_string(values.size()) +
                " does not match shape " + to_string(shape));
  }
  t.data_->shape = std::move(shape);
  t.data_->value = std::move(values);
  t.data_->requires_grad = requires_grad;
  return t;
}

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), S(0), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::empty(Shape shape, bool requires_grad) {
  const auto n = static_cast<std::size_t>(ad::numel(shape));
  return adopt(std::move(shape), Buffer<S>(n), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S value, bool requires_grad) {
  const auto n = static_cast<std::size_t>(ad::numel(shape));
  return adopt(std::move(shape), Buffer<S>(n, value), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::scalar(S value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<S>{value}, requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<S> values(static_cast<std::size_t>(ad::numel(shape)));
  for (auto& v : values) {
    v = static_cast<S>(stddev * normal(rng));
  }
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

template <typename S>
std::int64_t Tensor<S>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw Error("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return data_->shape[static_cast<std::size_t>(a)];
}

template <typename S>
S Tensor<S>::item() const {
  if (numel() != 1) {
    throw Error("item() on a tensor of shape " + to_string(shape()));
  }
  return data_->value[0];
}

template <typename S>
Tensor<S> Tensor<S>::clone() const {
  return adopt(shape(), data_->value, false);
}

template <typename S>
void Tape<S>::record(Tensor<S> output, std::function<void()> backward) {
  entries_.push_back(Entry{std::move(output), std::move(backward)});
}

template <typename S>
void Tape<S>::backward(const Tensor<S>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw Error("backward: loss is not connected to any tensor requiring grad");
  }
  Tensor<S> root = loss;
  root.grad_buffer()[0] += S(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) {
      it->backward();
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace lego::ad
