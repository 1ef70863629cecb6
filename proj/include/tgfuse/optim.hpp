#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tgfuse/parameter.hpp"

namespace tgfuse {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  /// Global-norm clip over all trainable gradients; <= 0 disables clipping.
  double clip_norm = 1.0;
  double warmup_ratio = 0.3333;
  /// When nonzero, overrides warmup_ratio with an absolute step count.
  std::size_t warmup_steps = 0;
  /// Length of the schedule; 0 keeps the learning rate constant at `lr`.
  std::size_t total_steps = 0;
};

/// Linear warmup from 0 to the peak, then cosine decay to exactly 0 at
/// total_steps. Step s is 1-based for optimizer steps; at(0) == 0.
class LrSchedule {
 public:
  explicit LrSchedule(const AdamWConfig& cfg);
  double at(std::size_t step) const;
  std::size_t warmup() const noexcept { return warmup_; }

 private:
  double peak_;
  std::size_t warmup_;
  std::size_t total_;
};

struct OptimizerState {
  explicit OptimizerState(AdamWConfig cfg) : config(cfg), schedule(cfg) {}

  AdamWConfig config;
  LrSchedule schedule;
  std::size_t step = 0;
  /// Moments indexed like the parameter list passed to adamw_step.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double last_lr = 0.0;
  double last_grad_norm = 0.0;
};

/// One AdamW update from the gradients held in each Parameter. Frozen
/// parameters are skipped entirely. Returns the learning rate applied.
double adamw_step(std::span<Parameter* const> params, OptimizerState& state);

/// L2 norm over the gradients of all trainable parameters.
double global_grad_norm(std::span<Parameter* const> params);

void zero_grads(std::span<Parameter* const> params);

}  // namespace tgfuse
