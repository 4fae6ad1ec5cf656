#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "corrtrack/tensor.hpp"

namespace corrtrack {

/// Planar RGB image, values in [0, 1]. Channel-major layout matches the
/// [3, h, w] tensor the stem consumes, so conversion is a straight copy.
struct Image {
  std::size_t height = 0, width = 0;
  std::vector<double> data;  // [3][height][width]

  Image() = default;
  Image(std::size_t h, std::size_t w)
      : height(h), width(w), data(3 * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

Tensor image_to_tensor(const Image& img);

/// Binary 8-bit portable pixmap (P6). Values are clamped to [0, 1] and
/// quantized to 0..255.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// Binary 8-bit portable graymap (P5) of an h x w value grid, clamped to
/// [0, 1].
void write_pgm(const std::string& path, std::size_t h, std::size_t w,
               const std::vector<double>& gray);
std::vector<double> read_pgm(const std::string& path, std::size_t* h,
                             std::size_t* w);

}  // namespace corrtrack
