#include "corrtrack/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "corrtrack/random.hpp"

namespace corrtrack {
namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Low-frequency background field: two sinusoidal components per channel.
struct BackgroundField {
  double fx[2], fy[2], phase[2], chan_shift[2], amp[2];

  double eval(double x, double y, std::size_t c) const {
    double v = 0.45;
    for (int j = 0; j < 2; ++j)
      v += amp[j] * std::sin(kTau * (fx[j] * x + fy[j] * y) + phase[j] +
                             chan_shift[j] * static_cast<double>(c));
    return v;
  }
};

// Mid-frequency texture in object-local coordinates, so the pattern rides
// along with the object and zooms with its scale.
struct ObjectTexture {
  double fu, fv, phase, chan_shift;

  double eval(double u, double v, std::size_t c, double t_phase) const {
    return 0.5 + 0.42 * std::sin(kTau * (fu * u + fv * v) + phase +
                                 chan_shift * static_cast<double>(c) +
                                 t_phase);
  }
};

// One moving object: sinusoidal center drift plus log-scale wobble.
struct Trajectory {
  double cx0, cy0, ax, ay, wx, wy, px, py;
  double base_w, base_h, ws, ps, scale_amp;

  void at(double t, double* cx, double* cy, double* w, double* h) const {
    const double s = std::exp(scale_amp * std::sin(ws * t + ps));
    *w = base_w * s;
    *h = base_h * s;
    *cx = cx0 + ax * std::sin(wx * t + px);
    *cy = cy0 + ay * std::sin(wy * t + py);
  }
};

Trajectory random_trajectory(Rng& rng, const SyntheticSpec& spec,
                             double size_scale) {
  const double frame = static_cast<double>(spec.size);
  Trajectory tr;
  tr.base_w = spec.target_fraction * frame * size_scale *
              rng.uniform(0.85, 1.2);
  tr.base_h = tr.base_w * rng.uniform(0.8, 1.25);
  tr.scale_amp = spec.scale_amplitude;
  tr.ws = rng.uniform(0.1, 0.25);
  tr.ps = rng.uniform(0.0, kTau);
  tr.ax = spec.drift_amplitude * frame * rng.uniform(0.7, 1.0);
  tr.ay = spec.drift_amplitude * frame * rng.uniform(0.7, 1.0);
  tr.wx = rng.uniform(0.12, 0.3);
  tr.wy = rng.uniform(0.12, 0.3);
  tr.px = rng.uniform(0.0, kTau);
  tr.py = rng.uniform(0.0, kTau);
  // Keep the whole excursion inside the frame for the largest size the
  // wobble can reach.
  const double max_half =
      0.5 * std::max(tr.base_w, tr.base_h) * std::exp(tr.scale_amp);
  const double lo = max_half + 2.0;
  const double hi = frame - max_half - 2.0;
  const double mid_lo = lo + tr.ax, mid_hi = hi - tr.ax;
  tr.cx0 = mid_lo < mid_hi ? rng.uniform(mid_lo, mid_hi) : 0.5 * frame;
  const double mid_lo_y = lo + tr.ay, mid_hi_y = hi - tr.ay;
  tr.cy0 = mid_lo_y < mid_hi_y ? rng.uniform(mid_lo_y, mid_hi_y) : 0.5 * frame;
  return tr;
}

bool inside_object(double x, double y, double cx, double cy, double w,
                   double h, bool ellipse) {
  const double dx = x - cx, dy = y - cy;
  if (!ellipse) return std::abs(dx) <= 0.5 * w && std::abs(dy) <= 0.5 * h;
  const double nx = dx / (0.5 * w), ny = dy / (0.5 * h);
  return nx * nx + ny * ny <= 1.0;
}

void paint_object(Image& img, const Trajectory& tr, const ObjectTexture& tex,
                  double t, double t_phase, bool ellipse) {
  double cx, cy, w, h;
  tr.at(t, &cx, &cy, &w, &h);
  const long x_lo = std::max(0L, static_cast<long>(std::floor(cx - 0.5 * w)));
  const long x_hi = std::min(static_cast<long>(img.width) - 1,
                             static_cast<long>(std::ceil(cx + 0.5 * w)));
  const long y_lo = std::max(0L, static_cast<long>(std::floor(cy - 0.5 * h)));
  const long y_hi = std::min(static_cast<long>(img.height) - 1,
                             static_cast<long>(std::ceil(cy + 0.5 * h)));
  for (long y = y_lo; y <= y_hi; ++y) {
    for (long x = x_lo; x <= x_hi; ++x) {
      const double fx = static_cast<double>(x) + 0.5;
      const double fy = static_cast<double>(y) + 0.5;
      if (!inside_object(fx, fy, cx, cy, w, h, ellipse)) continue;
      const double u = (fx - cx) / w, v = (fy - cy) / h;
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            tex.eval(u, v, c, t_phase);
    }
  }
}

}  // namespace

SyntheticSequence make_sequence(const SyntheticSpec& spec,
                                std::uint64_t seed) {
  if (spec.frames == 0 || spec.size < 16)
    throw std::invalid_argument("make_sequence: need frames >= 1, size >= 16");
  Rng rng(seed);

  BackgroundField bg;
  for (int j = 0; j < 2; ++j) {
    bg.fx[j] = rng.uniform(1.5, 4.0) / static_cast<double>(spec.size);
    bg.fy[j] = rng.uniform(1.5, 4.0) / static_cast<double>(spec.size);
    bg.phase[j] = rng.uniform(0.0, kTau);
    bg.chan_shift[j] = rng.uniform(0.3, 1.2);
    bg.amp[j] = rng.uniform(0.06, 0.1);
  }

  ObjectTexture tex;
  tex.fu = rng.uniform(2.5, 4.5);
  tex.fv = rng.uniform(2.5, 4.5);
  tex.phase = rng.uniform(0.0, kTau);
  tex.chan_shift = rng.uniform(0.6, 1.4);

  const Trajectory target = random_trajectory(rng, spec, 1.0);
  std::vector<Trajectory> decoys;
  for (std::size_t d = 0; d < spec.distractors; ++d)
    decoys.push_back(random_trajectory(rng, spec, rng.uniform(0.8, 1.15)));

  SyntheticSequence seq;
  seq.frames.reserve(spec.frames);
  seq.gt.reserve(spec.frames);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const double t = static_cast<double>(f);
    const double t_phase = spec.appearance_drift * t;
    Image img(spec.size, spec.size);
    for (std::size_t y = 0; y < spec.size; ++y)
      for (std::size_t x = 0; x < spec.size; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          img.at(c, y, x) = bg.eval(static_cast<double>(x) + 0.5,
                                    static_cast<double>(y) + 0.5, c);
    // Decoys first; the target occludes them where they overlap.
    for (const Trajectory& tr : decoys)
      paint_object(img, tr, tex, t, t_phase, spec.ellipse);
    paint_object(img, target, tex, t, t_phase, spec.ellipse);
    if (spec.noise > 0.0)
      for (double& v : img.data) v += spec.noise * (rng.uniform() - 0.5);
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);

    double cx, cy, w, h;
    target.at(t, &cx, &cy, &w, &h);
    seq.frames.push_back(std::move(img));
    seq.gt.push_back(Box::from_center(cx, cy, w, h));
  }
  return seq;
}

}  // namespace corrtrack
