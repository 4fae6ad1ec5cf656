#include "corrtrack/patch.hpp"

#include <cmath>
#include <stdexcept>

namespace corrtrack {
namespace {

double sample_bilinear(const Image& img, std::size_t c, double fx,
                       double fy) {
  // Pixel centers sit at integer + 0.5; outside the frame reads as zero.
  const double gx = fx - 0.5, gy = fy - 0.5;
  const long ix = static_cast<long>(std::floor(gx));
  const long iy = static_cast<long>(std::floor(gy));
  const double tx = gx - static_cast<double>(ix);
  const double ty = gy - static_cast<double>(iy);
  double acc = 0.0;
  for (int dy = 0; dy < 2; ++dy) {
    const long y = iy + dy;
    if (y < 0 || y >= static_cast<long>(img.height)) continue;
    const double wy = dy ? ty : 1.0 - ty;
    for (int dx = 0; dx < 2; ++dx) {
      const long x = ix + dx;
      if (x < 0 || x >= static_cast<long>(img.width)) continue;
      const double wx = dx ? tx : 1.0 - tx;
      acc += wy * wx *
             img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
  }
  return acc;
}

}  // namespace

CropResult crop_patch(const Image& frame, const Box& box, double area_factor,
                      std::size_t res) {
  if (res == 0) throw std::invalid_argument("crop_patch: res must be > 0");
  if (area_factor <= 0.0)
    throw std::invalid_argument("crop_patch: area_factor must be > 0");
  if (!box.valid() || box.area() <= 0.0)
    throw std::invalid_argument("crop_patch: zero-area box");

  CropResult out;
  out.transform.side = std::sqrt(area_factor * box.area());
  out.transform.x0 = box.cx() - 0.5 * out.transform.side;
  out.transform.y0 = box.cy() - 0.5 * out.transform.side;
  out.transform.res = res;
  out.patch = Image(res, res);
  out.validity.assign(res * res, 0.0);

  const double w = static_cast<double>(frame.width);
  const double h = static_cast<double>(frame.height);
  for (std::size_t i = 0; i < res; ++i) {
    for (std::size_t j = 0; j < res; ++j) {
      const double fx =
          out.transform.to_frame_x(static_cast<double>(j) + 0.5);
      const double fy =
          out.transform.to_frame_y(static_cast<double>(i) + 0.5);
      if (fx >= 0.0 && fx <= w && fy >= 0.0 && fy <= h)
        out.validity[i * res + j] = 1.0;
      for (std::size_t c = 0; c < 3; ++c)
        out.patch.at(c, i, j) = sample_bilinear(frame, c, fx, fy);
    }
  }
  return out;
}

}  // namespace corrtrack
