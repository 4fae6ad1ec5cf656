#pragma once

#include <cstddef>
#include <vector>

#include "corrtrack/boxes.hpp"
#include "corrtrack/image.hpp"

namespace corrtrack {

/// Affine map between frame pixel coordinates and the square crop. Patch
/// positions are expressed both in patch pixels ([0, res)) and normalized
/// units ([0, 1)); boxes use the normalized form.
struct PatchTransform {
  double x0 = 0.0, y0 = 0.0;  // frame position of the patch origin, px
  double side = 0.0;          // frame extent covered by the patch, px
  std::size_t res = 0;        // patch resolution

  double to_patch_x(double fx) const { return (fx - x0) / side * res; }
  double to_patch_y(double fy) const { return (fy - y0) / side * res; }
  double to_frame_x(double u) const { return x0 + u / res * side; }
  double to_frame_y(double v) const { return y0 + v / res * side; }

  /// Frame-pixel box -> normalized patch coordinates (unclamped).
  Box box_to_patch(const Box& b) const {
    return Box{(b.x0 - x0) / side, (b.y0 - y0) / side, (b.x1 - x0) / side,
               (b.y1 - y0) / side};
  }
  /// Normalized patch box -> frame pixels. Inverse of box_to_patch.
  Box box_to_frame(const Box& b) const {
    return Box{x0 + b.x0 * side, y0 + b.y0 * side, x0 + b.x1 * side,
               y0 + b.y1 * side};
  }
};

struct CropResult {
  Image patch;
  std::vector<double> validity;  // res*res; 0 where the crop left the frame
  PatchTransform transform;
};

/// Square crop centered on the box, covering area_factor times its area,
/// bilinearly resampled to res x res with zero padding outside the frame.
/// A degenerate (zero-area or ill-ordered) box is an error.
CropResult crop_patch(const Image& frame, const Box& box, double area_factor,
                      std::size_t res);

}  // namespace corrtrack
