#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tgfuse/errors.hpp"

namespace tgfuse {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

/// Dense row-major array of doubles. Values are immutable once built and share
/// storage on copy; a tensor produced on a Tape additionally carries the id of
/// the node that recorded it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }
  bool empty() const noexcept { return size() == 0; }

  /// Product of all leading dims; the matrix view treats the last axis as columns.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;
  std::vector<double> to_vector() const;

  bool tracked() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  int node() const noexcept { return node_; }

  /// Same values, no tape association.
  Tensor detach() const;
  /// Same values viewed under a new shape; recorded as a pass-through node.
  Tensor reshape(Shape shape) const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Gradient buffers handed to a backward rule, one per recorded input, in input
/// order. A slot is null when that input is a constant.
using GradSlots = std::span<std::vector<double>* const>;
using BackwardFn = std::function<void(std::span<const double> dy, GradSlots dx)>;

/// Records operations in execution order so that reverse-mode gradients can be
/// computed by a single reverse sweep. One tape per forward/backward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf. After backward, the leaf's
  /// gradient is added into `sink` when one is given.
  Tensor leaf(const Tensor& value, std::vector<double>* sink = nullptr);

  /// Appends an operation node. `inputs` may mix tracked and constant tensors;
  /// every tracked input must belong to this tape.
  Tensor record(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                BackwardFn backward);

  /// Reverse sweep from a scalar. Consumes the tape.
  void backward(const Tensor& loss, double seed = 1.0);

  /// Gradient of the last backward sweep w.r.t. a tracked tensor. Empty span
  /// when no path connects it to the loss.
  std::span<const double> grad(const Tensor& t) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn backward;
    std::vector<double> grad;
    std::vector<double>* sink = nullptr;
    std::size_t numel = 0;
  };
  const Node& node_of(const Tensor& t) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

namespace detail {

/// Builds the result of an op. If any input is tracked the result is recorded
/// on that input's tape with `backward`; otherwise a constant is returned and
/// `backward` is dropped.
Tensor emit(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
            BackwardFn backward);

}  // namespace detail

}  // namespace tgfuse
