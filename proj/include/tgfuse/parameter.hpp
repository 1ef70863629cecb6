#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "tgfuse/tensor.hpp"

namespace tgfuse {

/// A named trainable tensor. `grad` accumulates dLoss/dValue across backward
/// sweeps until zeroed; frozen parameters still receive gradients but are
/// skipped by the optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  mutable std::vector<double> grad;
  bool frozen = false;

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() const { grad.assign(value.size(), 0.0); }
};

using ParameterList = std::vector<Parameter*>;

/// Resolves parameters to tensors for one forward pass. With a tape, each
/// parameter becomes a leaf exactly once and its gradient is routed into
/// Parameter::grad by the backward sweep; without one, parameters are constants.
class Context {
 public:
  Context() = default;
  explicit Context(Tape& tape) : tape_(&tape) {}

  Tensor operator()(const Parameter& p);
  /// Lifts an input tensor onto the tape so that gradients w.r.t. it can be read.
  Tensor input(const Tensor& t);
  Tape* tape() const noexcept { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::unordered_map<const Parameter*, Tensor> watched_;
};

/// Deterministic 64-bit generator with portable uniform/normal draws
/// (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::size_t>(hi - lo + 1)));
  }
  double normal(double mean = 0.0, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
};

/// Parameter initializers.
Tensor init_uniform(Shape shape, double bound, Rng& rng);
Tensor init_normal(Shape shape, double stddev, Rng& rng);
/// Glorot-uniform for a [fan_in, fan_out] weight.
Tensor init_glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace tgfuse
