#pragma once

// Naive reference implementations used to check the op layer. These are
// deliberately written as plain loops over std::vector<double>, with no
// dependency on the Tensor machinery, so a bug in the library cannot hide
// in its own oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

inline bool near(double a, double b, double tol = 1e-12) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline std::vector<double> matmul(const std::vector<double>& a, std::size_t m,
                                  std::size_t k, const std::vector<double>& b,
                                  std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < k; ++l)
        out[i * n + j] += a[i * k + l] * b[l * n + j];
  return out;
}

inline std::vector<double> softmax_row(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> e(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - mx);
    sum += e[i];
  }
  for (double& v : e) v /= sum;
  return e;
}

inline std::vector<double> layer_norm_row(const std::vector<double>& x,
                                          const std::vector<double>& gamma,
                                          const std::vector<double>& beta,
                                          double eps) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = gamma[i] * (x[i] - mean) / std::sqrt(var + eps) + beta[i];
  return out;
}

/// Direct convolution, channels-first [c,h,w] input, weight indexed as
/// w[((ci*kh + ky)*kw + kx)*c_out + co], token-layout output [ho*wo, c_out].
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t c,
                                  std::size_t h, std::size_t w,
                                  const std::vector<double>& wt,
                                  const std::vector<double>& bias,
                                  std::size_t c_out, std::size_t kh,
                                  std::size_t kw, std::size_t stride,
                                  std::size_t pad) {
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(ho * wo * c_out, 0.0);
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t co = 0; co < c_out; ++co) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long iy =
                  static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix =
                  static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(h) || ix < 0 ||
                  ix >= static_cast<long>(w))
                continue;
              acc += x[(ci * h + iy) * w + ix] *
                     wt[((ci * kh + ky) * kw + kx) * c_out + co];
            }
        out[(oy * wo + ox) * c_out + co] = acc;
      }
  return out;
}

/// Bilinear lookup on a token map [h*w, c] at continuous cell coords (u, v)
/// (cell centers at integers), clamped at the border.
inline double bilinear(const std::vector<double>& x, std::size_t h,
                       std::size_t w, std::size_t c, double u, double v,
                       std::size_t ci) {
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const std::size_t u0 = static_cast<std::size_t>(u);
  const std::size_t v0 = static_cast<std::size_t>(v);
  const std::size_t u1 = std::min(u0 + 1, w - 1);
  const std::size_t v1 = std::min(v0 + 1, h - 1);
  const double fu = u - static_cast<double>(u0);
  const double fv = v - static_cast<double>(v0);
  return x[(v0 * w + u0) * c + ci] * (1 - fu) * (1 - fv) +
         x[(v0 * w + u1) * c + ci] * fu * (1 - fv) +
         x[(v1 * w + u0) * c + ci] * (1 - fu) * fv +
         x[(v1 * w + u1) * c + ci] * fu * fv;
}

/// Axis-aligned IoU and GIoU on [x0,y0,x1,y1] boxes.
inline double iou(const double a[4], const double b[4]) {
  const double ix = std::max(
      0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(
      0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double ua = (a[2] - a[0]) * (a[3] - a[1]) +
                    (b[2] - b[0]) * (b[3] - b[1]) - inter;
  if (ua <= 0.0) return 0.0;
  return inter / ua;
}

inline double giou(const double a[4], const double b[4]) {
  const double ix =
      std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy =
      std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double ua = (a[2] - a[0]) * (a[3] - a[1]) +
                    (b[2] - b[0]) * (b[3] - b[1]) - inter;
  const double cx = std::max(a[2], b[2]) - std::min(a[0], b[0]);
  const double cy = std::max(a[3], b[3]) - std::min(a[1], b[1]);
  const double hull = cx * cy;
  if (ua <= 0.0 || hull <= 0.0) return 0.0;
  return inter / ua - (hull - ua) / hull;
}

}  // namespace oracle
