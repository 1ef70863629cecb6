#pragma once

#include "tgfuse/decoder.hpp"

namespace tgfuse {

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kDiceSmooth = 1e-6;

/// Mean binary cross-entropy of probabilities `a` against a 0/1 target `g`,
/// with `a` clamped to [eps, 1 - eps].
Tensor bce_loss(const Tensor& a, const Tensor& g);

/// 1 - (2 sum(g a) + s) / (sum(g^2) + sum(a^2) + s).
Tensor dice_loss(const Tensor& a, const Tensor& g);

/// Mean smooth-L1 (beta = 1) distance between two boxes.
Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target);

struct LossBreakdown {
  Tensor bce;
  Tensor dice;
  Tensor bbox;   // 0 when the box term is disabled
  Tensor total;
};

/// bce + dice (+ lambda_bbox * smooth_l1(box) when lambda_bbox > 0).
LossBreakdown total_loss(const Prediction& pred, const Tensor& gt_mask, const Tensor& gt_bbox,
                         double lambda_bbox = 0.0);

}  // namespace tgfuse
