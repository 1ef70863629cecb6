#include "tgfuse/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tgfuse {

LrSchedule::LrSchedule(const AdamWConfig& cfg) : peak_(cfg.lr), total_(cfg.total_steps) {
  if (cfg.warmup_steps > 0) {
    warmup_ = cfg.warmup_steps;
  } else {
    warmup_ = static_cast<std::size_t>(std::floor(cfg.warmup_ratio * static_cast<double>(total_)));
  }
  if (total_ > 0 && warmup_ > total_) warmup_ = total_;
}

double LrSchedule::at(std::size_t step) const {
  if (total_ == 0) return peak_;
  if (step >= total_) return 0.0;
  if (step <= warmup_ && warmup_ > 0) {
    return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
  }
  const double progress =
      static_cast<double>(step - warmup_) / static_cast<double>(total_ - warmup_);
  return std::max(0.0, 0.5 * peak_ * (1.0 + std::cos(std::numbers::pi * progress)));
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (p->frozen) continue;
    for (double g : p->grad) sq += g * g;
  }
  return std::sqrt(sq);
}

void zero_grads(std::span<Parameter* const> params) {
  for (const Parameter* p : params) p->zero_grad();
}

double adamw_step(std::span<Parameter* const> params, OptimizerState& state) {
  const AdamWConfig& cfg = state.config;
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
  }
  ++state.step;
  const double lr = state.schedule.at(state.step);
  const double norm = global_grad_norm(params);
  const double clip = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.frozen) continue;
    const std::size_t n = p.size();
    if (p.grad.size() != n) p.zero_grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    std::vector<double> w = p.value.to_vector();
    for (std::size_t j = 0; j < n; ++j) {
      const double g = p.grad[j] * clip;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * cfg.weight_decay * w[j];
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p.value = Tensor(p.value.shape(), std::move(w));
  }
  state.last_lr = lr;
  state.last_grad_norm = norm;
  return lr;
}

}  // namespace tgfuse
