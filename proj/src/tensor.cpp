#include "tgfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tgfuse {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (numel(shape_) != data.size()) {
    throw ShapeError("tensor: shape " + to_string(shape_) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     to_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  return size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

std::span<const double> Tensor::data() const noexcept {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() on shape " + to_string(shape_));
  return (*data_)[0];
}

std::vector<double> Tensor::to_vector() const {
  return data_ ? *data_ : std::vector<double>{};
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

Tensor Tensor::reshape(Shape shape) const {
  if (numel(shape) != size()) {
    throw ShapeError("reshape: " + to_string(shape_) + " -> " + to_string(shape));
  }
  if (!tracked()) {
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }
  return tape_->record(std::move(shape), *data_, std::span<const Tensor>(this, 1),
                       [](std::span<const double> dy, GradSlots dx) {
                         if (!dx[0]) return;
                         auto& g = *dx[0];
                         for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
                       });
}

Tensor Tape::leaf(const Tensor& value, std::vector<double>* sink) {
  if (consumed_) throw ContractError("tape: leaf() after backward");
  Node node;
  node.sink = sink;
  node.numel = value.size();
  nodes_.push_back(std::move(node));
  Tensor t = value;
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  return t;
}

Tensor Tape::record(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                    BackwardFn backward) {
  if (consumed_) throw ContractError("tape: record() after backward");
#ifndef NDEBUG
  for (double v : data) {
    if (!std::isfinite(v)) throw ContractError("tape: non-finite value produced by forward op");
  }
#endif
  Node node;
  node.inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    if (in.tracked() && in.tape_ != this) {
      throw ContractError("tape: operand recorded on a different tape");
    }
    node.inputs.push_back(in.tracked() ? in.node_ : -1);
  }
  node.backward = std::move(backward);
  node.numel = data.size();
  nodes_.push_back(std::move(node));
  Tensor t(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size()) - 1;
  return t;
}

void Tape::backward(const Tensor& loss, double seed) {
  if (consumed_) throw ContractError("tape: backward() called twice");
  if (!loss.tracked() || loss.tape_ != this) {
    throw ContractError("tape: loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw ContractError("tape: backward() needs a scalar loss, got " + to_string(loss.shape()));
  }
  consumed_ = true;
  nodes_[loss.node_].grad.assign(1, seed);

  std::vector<std::vector<double>*> slots;
  for (int id = loss.node_; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const int in = node.inputs[i];
      if (in < 0) continue;
      Node& src = nodes_[in];
      if (src.grad.empty()) src.grad.assign(src.numel, 0.0);
      slots[i] = &src.grad;
    }
    node.backward(node.grad, GradSlots(slots.data(), slots.size()));
  }
  for (Node& node : nodes_) {
    if (!node.sink || node.grad.empty()) continue;
    auto& sink = *node.sink;
    if (sink.size() != node.grad.size()) sink.assign(node.grad.size(), 0.0);
    for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += node.grad[i];
  }
}

const Tape::Node& Tape::node_of(const Tensor& t) const {
  if (!t.tracked() || t.tape_ != this) throw ContractError("tape: tensor not recorded here");
  return nodes_[t.node_];
}

std::span<const double> Tape::grad(const Tensor& t) const {
  const Node& node = node_of(t);
  return {node.grad.data(), node.grad.size()};
}

namespace detail {

Tensor emit(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
            BackwardFn backward) {
  Tape* tape = nullptr;
  for (const Tensor& in : inputs) {
    if (in.tracked()) {
      tape = in.tape();
      break;
    }
  }
  if (!tape) return Tensor(std::move(shape), std::move(data));
  return tape->record(std::move(shape), std::move(data),
                      std::span<const Tensor>(inputs.begin(), inputs.size()), std::move(backward));
}

}  // namespace detail

}  // namespace tgfuse
