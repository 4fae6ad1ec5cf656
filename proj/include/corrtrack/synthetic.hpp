#pragma once

#include <cstdint>
#include <vector>

#include "corrtrack/boxes.hpp"
#include "corrtrack/image.hpp"

namespace corrtrack {

/// Knobs for the rendered tracking sequences. The target is a textured
/// square (or ellipse) drifting sinusoidally in position and scale over a
/// textured background; distractors share the target's texture so that
/// appearance alone cannot disambiguate them.
struct SyntheticSpec {
  std::size_t frames = 40;
  std::size_t size = 128;          // square frame side, px
  double target_fraction = 0.16;   // target side relative to the frame side
  double drift_amplitude = 0.18;   // center excursion, fraction of frame side
  double scale_amplitude = 0.12;   // log-size wobble amplitude
  double appearance_drift = 0.05;  // texture phase advance per frame
  std::size_t distractors = 2;     // same-texture decoy objects
  bool ellipse = false;            // ellipse instead of a rectangle
  double noise = 0.02;             // per-pixel uniform noise amplitude
};

struct SyntheticSequence {
  std::vector<Image> frames;
  std::vector<Box> gt;  // tight target box per frame, pixel coordinates
};

/// Deterministic for a fixed (spec, seed) pair. The ground-truth box stays
/// strictly inside the frame; distractors may clip at the borders.
SyntheticSequence make_sequence(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace corrtrack
