#include "corrtrack/losses.hpp"

#include <stdexcept>

#include "corrtrack/ops.hpp"

namespace corrtrack {

namespace {
constexpr double kAreaEps = 1e-12;
}

BoxT boxt_const(const Box& b) {
  return BoxT{Tensor::scalar(b.x0), Tensor::scalar(b.y0),
              Tensor::scalar(b.x1), Tensor::scalar(b.y1)};
}

Box boxt_value(const BoxT& b) {
  return Box{b.x0.value(), b.y0.value(), b.x1.value(), b.y1.value()};
}

Tensor giou_t(const BoxT& a, const BoxT& b, bool* degenerate) {
  if (degenerate) *degenerate = false;
  {
    const Box av = boxt_value(a), bv = boxt_value(b);
    if (std::max(av.width(), 0.0) * std::max(av.height(), 0.0) <= 0.0 &&
        std::max(bv.width(), 0.0) * std::max(bv.height(), 0.0) <= 0.0) {
      if (degenerate) *degenerate = true;
      return Tensor::scalar(0.0);
    }
  }
  Tensor area_a = mul(relu(sub(a.x1, a.x0)), relu(sub(a.y1, a.y0)));
  Tensor area_b = mul(relu(sub(b.x1, b.x0)), relu(sub(b.y1, b.y0)));
  Tensor iw = relu(sub(min_ew(a.x1, b.x1), max_ew(a.x0, b.x0)));
  Tensor ih = relu(sub(min_ew(a.y1, b.y1), max_ew(a.y0, b.y0)));
  Tensor inter = mul(iw, ih);
  Tensor uni = sub(add(area_a, area_b), inter);
  Tensor iou = div(inter, add_const(uni, kAreaEps));
  Tensor hw = relu(sub(max_ew(a.x1, b.x1), min_ew(a.x0, b.x0)));
  Tensor hh = relu(sub(max_ew(a.y1, b.y1), min_ew(a.y0, b.y0)));
  Tensor hull = add_const(mul(hw, hh), kAreaEps);
  return sub(iou, div(sub(hull, uni), hull));
}

void LossWeights::validate() const {
  if (lambda_giou < 0.0 || lambda_l1 < 0.0 || lambda_mse < 0.0)
    throw std::invalid_argument("loss weights must be nonnegative");
  if (lambda_giou == 0.0 && lambda_l1 == 0.0 && lambda_mse == 0.0)
    throw std::invalid_argument("at least one loss weight must be positive");
}

Tensor giou_loss(const BoxT& pred, const BoxT& gt) {
  return add_const(scale(giou_t(pred, gt), -1.0), 1.0);
}

Tensor l1_box(const BoxT& pred, const BoxT& gt) {
  Tensor s = abs_ew(sub(pred.x0, gt.x0));
  s = add(s, abs_ew(sub(pred.y0, gt.y0)));
  s = add(s, abs_ew(sub(pred.x1, gt.x1)));
  s = add(s, abs_ew(sub(pred.y1, gt.y1)));
  return s;
}

Tensor total_loss(const BoxT& pred, const BoxT& gt, const Tensor& iou_pred,
                  double iou_target, const LossWeights& w) {
  w.validate();
  if (iou_target < 0.0 || iou_target > 1.0)
    throw std::invalid_argument("iou_target must be in [0, 1]");
  Tensor residual = add_const(iou_pred, -iou_target);
  Tensor mse = mul(residual, residual);
  Tensor loss = scale(giou_loss(pred, gt), w.lambda_giou);
  loss = add(loss, scale(l1_box(pred, gt), w.lambda_l1));
  loss = add(loss, scale(mse, w.lambda_mse));
  return loss;
}

std::vector<JitteredBox> sample_jittered_boxes(const Box& gt, std::size_t n,
                                               Rng& rng, double sigma_center,
                                               double sigma_scale) {
  std::vector<JitteredBox> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = gt.cx() + rng.normal() * sigma_center * gt.width();
    const double cy = gt.cy() + rng.normal() * sigma_center * gt.height();
    // log-normal size jitter keeps extents positive
    const double w = gt.width() * std::exp(rng.normal() * sigma_scale);
    const double h = gt.height() * std::exp(rng.normal() * sigma_scale);
    Box b = clip_unit(Box::from_center(cx, cy, w, h));
    out.push_back(JitteredBox{b, box_iou(b, gt)});
  }
  return out;
}

}  // namespace corrtrack
