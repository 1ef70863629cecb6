#include "tgfuse/parameter.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <numbers>

namespace tgfuse {

Tensor Context::operator()(const Parameter& p) {
  if (!tape_) return p.value;
  auto it = watched_.find(&p);
  if (it != watched_.end()) return it->second;
  if (p.grad.size() != p.value.size()) p.zero_grad();
  Tensor t = tape_->leaf(p.value, &p.grad);
  watched_.emplace(&p, t);
  return t;
}

Tensor Context::input(const Tensor& t) {
  if (!tape_ || t.tracked()) return t;
  return tape_->leaf(t);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

double Rng::normal(double mean, double stddev) {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor init_uniform(Shape shape, double bound, Rng& rng) {
  std::vector<double> data(numel(shape));
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(data));
}

Tensor init_normal(Shape shape, double stddev, Rng& rng) {
  std::vector<double> data(numel(shape));
  for (double& v : data) v = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(data));
}

Tensor init_glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return init_uniform({fan_in, fan_out}, bound, rng);
}

}  // namespace tgfuse
