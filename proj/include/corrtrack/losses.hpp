#pragma once

#include <utility>
#include <vector>

#include "corrtrack/boxes.hpp"
#include "corrtrack/random.hpp"
#include "corrtrack/tensor.hpp"

namespace corrtrack {

/// Box with differentiable corner coordinates (four single-element tensors).
struct BoxT {
  Tensor x0, y0, x1, y1;
};

BoxT boxt_const(const Box& b);
Box boxt_value(const BoxT& b);

/// Differentiable generalized IoU in (-1, 1]. Ill-ordered corners are
/// treated as zero extent. Two exactly zero-area boxes have no meaningful
/// value: the result is the constant 0 and `degenerate` (if given) is set.
Tensor giou_t(const BoxT& a, const BoxT& b, bool* degenerate = nullptr);

struct LossWeights {
  double lambda_giou = 2.0;
  double lambda_l1 = 5.0;
  double lambda_mse = 1.0;
  void validate() const;  // nonnegative, at least one positive
};

/// 1 - GIoU.
Tensor giou_loss(const BoxT& pred, const BoxT& gt);
/// Sum of the four absolute corner differences (normalized units).
Tensor l1_box(const BoxT& pred, const BoxT& gt);
/// lambda_giou * (1 - GIoU) + lambda_l1 * |b - b^|_1 + lambda_mse * (i - i^)^2.
Tensor total_loss(const BoxT& pred, const BoxT& gt, const Tensor& iou_pred,
                  double iou_target, const LossWeights& w);

struct JitteredBox {
  Box box;
  double iou;  // exact IoU against the ground truth
};

/// Gaussian jitter of center and log-size around gt, clamped to the unit
/// frame, each paired with its exact IoU. Deterministic for a fixed rng
/// state. sigma_center scales with box extent; sigma_scale acts on log size.
std::vector<JitteredBox> sample_jittered_boxes(const Box& gt, std::size_t n,
                                               Rng& rng,
                                               double sigma_center = 0.1,
                                               double sigma_scale = 0.2);

}  // namespace corrtrack
