#pragma once

#include <cstdint>
#include <string>

#include "corrtrack/attention.hpp"
#include "corrtrack/losses.hpp"

namespace corrtrack {

/// Everything the tracker, trainer, and harness read. Maps 1:1 onto the
/// text config format (dotted keys, `key = value`, '#' comments).
struct TrackerConfig {
  // -- geometry --
  std::size_t search_resolution = 64;  // square patch side, px
  std::size_t stride = 8;              // stem downsampling factor
  double crop_area_factor = 25.0;      // crop area = factor x box area

  // -- model --
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 1;
  std::size_t ffn_hidden = 256;
  AttentionConfig attention;  // model_dim 64, heads 4, inner 16 at desk scale
  std::size_t iou_pool_size = 3;

  // -- reference memory --
  double update_threshold = 0.7;  // admission gate tau
  std::size_t ensemble_size = 3;
  std::size_t cache_capacity = 30;
  bool random_ensemble = false;  // seeded-random sampling instead of spacing

  // -- structure switches (ablation surface) --
  RefineMode self_refine = RefineMode::aia;
  RefineMode cross_refine = RefineMode::aia;
  bool use_embeddings = true;
  bool mask_background = false;  // zero reference values outside the target
  bool use_short_branch = true;
  bool split_branches = true;  // false: one branch over concatenated refs
  bool cross_pos_to_keys = true;

  // -- training --
  LossWeights loss;
  double jitter_center = 0.1;
  double jitter_scale = 0.2;
  std::size_t iou_samples = 6;
  double learning_rate = 1e-3;
  double stem_lr_scale = 0.1;
  double weight_decay = 1e-4;

  std::size_t grid_size() const { return search_resolution / stride; }
  std::size_t tokens() const { return grid_size() * grid_size(); }

  void validate() const;

  /// Shrunken profile with the full-scale ratios preserved.
  static TrackerConfig desk();
  /// The full-scale configuration (resolution 320, stride 16, C=256).
  static TrackerConfig paper_scale();
  /// Smallest structurally complete model, for whole-model gradient checks.
  static TrackerConfig tiny();
};

/// Parses the text format. Unknown keys, malformed lines, and out-of-range
/// values are errors, not warnings.
TrackerConfig parse_config(const std::string& text);
TrackerConfig load_config(const std::string& path);

/// Renders a config as the canonical commented text file (round-trips
/// through parse_config).
std::string write_config(const TrackerConfig& cfg);

}  // namespace corrtrack
