#pragma once

#include <algorithm>
#include <cmath>

namespace corrtrack {

/// Axis-aligned box, corner form. Units are the caller's business; the
/// tracker works in normalized [0,1] frame coordinates throughout.
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }

  static Box from_center(double cx, double cy, double w, double h) {
    return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool valid() const {
    return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
           std::isfinite(y1) && x1 >= x0 && y1 >= y0;
  }
};

inline double box_iou(const Box& a, const Box& b) {
  const double iw =
      std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih =
      std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

/// IoU minus the enclosing-hull slack, in (-1, 1]. The two-zero-area case
/// has no meaningful value; it is defined as 0 and reported via `degenerate`.
inline double box_giou(const Box& a, const Box& b,
                       bool* degenerate = nullptr) {
  if (degenerate) *degenerate = false;
  if (a.area() <= 0.0 && b.area() <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const double iw =
      std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih =
      std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x1, b.x1) - std::min(a.x0, b.x0)) *
                      (std::max(a.y1, b.y1) - std::min(a.y0, b.y0));
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  if (hull <= 0.0) return iou;
  return iou - (hull - uni) / hull;
}

/// Clamps to the unit frame, preserving corner order.
inline Box clip_unit(const Box& b) {
  Box c;
  c.x0 = std::clamp(b.x0, 0.0, 1.0);
  c.y0 = std::clamp(b.y0, 0.0, 1.0);
  c.x1 = std::clamp(b.x1, c.x0, 1.0);
  c.y1 = std::clamp(b.y1, c.y0, 1.0);
  return c;
}

}  // namespace corrtrack
