#include "tgfuse/losses.hpp"

#include <algorithm>
#include <cmath>

namespace tgfuse {

namespace {

void check_pair(const Tensor& a, const Tensor& g, const char* op) {
  if (a.shape() != g.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + to_string(a.shape()) + " vs target " +
                     to_string(g.shape()));
  }
  if (a.empty()) throw ShapeError(std::string(op) + ": empty grid");
}

}  // namespace

Tensor bce_loss(const Tensor& a, const Tensor& g) {
  check_pair(a, g, "bce_loss");
  const auto av = a.data();
  const auto gv = g.data();
  const std::size_t n = av.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (gv[i] != 0.0 && gv[i] != 1.0) {
      throw InputError("bce_loss: target value " + std::to_string(gv[i]) + " at index " +
                       std::to_string(i) + " is not 0 or 1");
    }
    const double p = std::clamp(av[i], kBceClamp, 1.0 - kBceClamp);
    total -= gv[i] != 0.0 ? std::log(p) : std::log1p(-p);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return detail::emit({}, {total * inv_n}, {a, g}, [a, g, inv_n](std::span<const double> dy, GradSlots dx) {
    if (!dx[0]) return;
    const auto av = a.data();
    const auto gv = g.data();
    auto& ga = *dx[0];
    for (std::size_t i = 0; i < av.size(); ++i) {
      if (av[i] < kBceClamp || av[i] > 1.0 - kBceClamp) continue;
      const double d = gv[i] != 0.0 ? -1.0 / av[i] : 1.0 / (1.0 - av[i]);
      ga[i] += dy[0] * inv_n * d;
    }
  });
}

Tensor dice_loss(const Tensor& a, const Tensor& g) {
  check_pair(a, g, "dice_loss");
  const auto av = a.data();
  const auto gv = g.data();
  double inter = 0.0, gg = 0.0, aa = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    inter += gv[i] * av[i];
    gg += gv[i] * gv[i];
    aa += av[i] * av[i];
  }
  const double num = 2.0 * inter + kDiceSmooth;
  const double den = gg + aa + kDiceSmooth;
  return detail::emit({}, {1.0 - num / den}, {a, g}, [a, g, num, den](std::span<const double> dy, GradSlots dx) {
    const auto av = a.data();
    const auto gv = g.data();
    // d/dx of -(num/den) where num depends on a and g linearly, den quadratically.
    const double inv_den = 1.0 / den;
    const double ratio = num * inv_den * inv_den;
    if (dx[0]) {
      auto& ga = *dx[0];
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += dy[0] * (-2.0 * gv[i] * inv_den + 2.0 * av[i] * ratio);
    }
    if (dx[1]) {
      auto& gg = *dx[1];
      for (std::size_t i = 0; i < av.size(); ++i) gg[i] += dy[0] * (-2.0 * av[i] * inv_den + 2.0 * gv[i] * ratio);
    }
  });
}

Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "smooth_l1_loss");
  const auto pv = pred.data();
  const auto tv = target.data();
  const std::size_t n = pv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(pv[i] - tv[i]);
    total += d < 1.0 ? 0.5 * d * d : d - 0.5;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return detail::emit({}, {total * inv_n}, {pred, target},
                      [pred, target, inv_n](std::span<const double> dy, GradSlots dx) {
                        const auto pv = pred.data();
                        const auto tv = target.data();
                        for (std::size_t i = 0; i < pv.size(); ++i) {
                          const double d = pv[i] - tv[i];
                          const double g = dy[0] * inv_n * std::clamp(d, -1.0, 1.0);
                          if (dx[0]) (*dx[0])[i] += g;
                          if (dx[1]) (*dx[1])[i] -= g;
                        }
                      });
}

LossBreakdown total_loss(const Prediction& pred, const Tensor& gt_mask, const Tensor& gt_bbox,
                         double lambda_bbox) {
  if (lambda_bbox < 0.0) throw ConfigError("total_loss: lambda_bbox must be >= 0");
  LossBreakdown out;
  out.bce = bce_loss(pred.mask_probs, gt_mask);
  out.dice = dice_loss(pred.mask_probs, gt_mask);
  out.total = add(out.bce, out.dice);
  if (lambda_bbox > 0.0) {
    out.bbox = smooth_l1_loss(pred.bbox, gt_bbox);
    out.total = add(out.total, scale(out.bbox, lambda_bbox));
  } else {
    out.bbox = Tensor::scalar(0.0);
  }
  return out;
}

}  // namespace tgfuse
