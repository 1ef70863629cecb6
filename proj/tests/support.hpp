#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tgfuse/ops.hpp"
#include "tgfuse/parameter.hpp"

namespace tgtest {

using tgfuse::Tensor;

inline Tensor random_tensor(tgfuse::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  tgfuse::Rng rng(seed);
  std::vector<double> v(tgfuse::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

/// Reduces any tensor to a scalar with fixed random weights so that a scalar
/// gradient check exercises the full Jacobian.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  return tgfuse::sum(tgfuse::mul(y, random_tensor(y.shape(), seed)));
}

/// Backprop gradient of the scalar f(x) at x.
inline std::vector<double> analytic_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  tgfuse::Tape tape;
  const Tensor leaf = tape.leaf(x);
  tape.backward(f(leaf));
  const auto g = tape.grad(leaf);
  if (g.empty()) return std::vector<double>(x.size(), 0.0);
  return {g.begin(), g.end()};
}

/// Central finite-difference gradient of the scalar f(x) at x.
inline std::vector<double> numeric_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                        double h = 1e-6) {
  std::vector<double> values = x.to_vector();
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = f(Tensor(x.shape(), values)).item();
    values[i] = keep - h;
    const double down = f(Tensor(x.shape(), values)).item();
    values[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest |a - n| / max(|a|, |n|, floor) over all entries.
inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), floor}));
  }
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Gradient of f at x checked against finite differences.
inline double grad_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  return max_rel_diff(analytic_grad(f, x), numeric_grad(f, x));
}

}  // namespace tgtest
