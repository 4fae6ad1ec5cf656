#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "corrtrack/random.hpp"
#include "corrtrack/tensor.hpp"

namespace corrtrack {

// Correlation-refining attention. The outer path is standard scaled
// dot-product attention; the inner path treats each correlation vector of
// the outer score map as a token and runs a small attention over those
// vectors, producing a residual that sharpens the map before its softmax.

enum class AiaVariant { v1, v2, v3 };
enum class RefineAxis { keys, queries };
enum class RefineMode { none, aia, conv };

struct AttentionConfig {
  std::size_t model_dim = 64;   // C
  std::size_t num_heads = 4;
  std::size_t inner_dim = 16;   // D, reduced width of the inner attention
  bool aia_enabled = true;
  AiaVariant aia_variant = AiaVariant::v1;
  bool aia_positional = true;
  RefineAxis refine_axis = RefineAxis::keys;
  double positional_base = 10000.0;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const;
};

/// Scaled dot-product score map, queries by keys.
struct CorrelationMap {
  Tensor values;  // [HW_q, HW_k]
};

/// Spatial arrangement of the refined axis. A concatenation of `repeats`
/// same-sized reference maps (an ensemble) repeats the h x w grid that many
/// times along the token axis.
struct KeyGrid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t repeats = 1;
  std::size_t tokens() const { return h * w * repeats; }
};

/// Deterministic 2-D sinusoidal encoding, [h*w, channels]. The first half
/// of the channels encodes the row index, the second half the column index;
/// each half interleaves sin/cos pairs over a geometric frequency ladder.
/// channels must be divisible by 4. Position (0,0) is all-zero sines and
/// all-one cosines.
Tensor sinusoidal_2d(std::size_t h, std::size_t w, std::size_t channels,
                     double base = 10000.0);

struct AttnProjections {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct InnerAttentionParams {
  AiaVariant variant = AiaVariant::v1;
  Tensor reduce_w, reduce_b;    // [vec, D], [D]
  Tensor ln_in_g, ln_in_b;      // [D]
  Tensor query_w, query_b;      // [D, D]
  Tensor key_w, key_b;          // [D, D]
  Tensor ln_value_g, ln_value_b;  // [vec] (v1, v3)
  Tensor value_w, value_b;      // [vec, vec] (v3 only)
  Tensor out_w;                 // [vec, vec], zero-initialized
};

/// Linear local-aggregation substitute for the inner attention:
/// 1x1 reduce -> 3x3 conv -> 1x1 expand over each correlation vector's
/// spatial grid. The expand stage starts at zero, so an untrained block
/// contributes no residual.
struct ConvBottleneckParams {
  Tensor reduce_w, reduce_b;  // [vec, D], [D]
  Tensor conv_w, conv_b;      // [D*9, D], [D]
  Tensor expand_w, expand_b;  // [D, vec], [vec], zero-initialized
};

AttnProjections make_attn_projections(std::size_t model_dim, Rng& rng);
InnerAttentionParams make_inner_params(std::size_t vec_dim,
                                       std::size_t inner_dim,
                                       AiaVariant variant, Rng& rng);
ConvBottleneckParams make_conv_bottleneck(std::size_t vec_dim,
                                          std::size_t inner_dim, Rng& rng);

/// M = (q wq)(k wk)^T / sqrt(width of the projection).
CorrelationMap correlation(const Tensor& map_q, const Tensor& map_k,
                           const Tensor& wq, const Tensor& wk);

/// Softmax(M) V_bar W_o, single head over the full model width.
Tensor conventional_attention(const Tensor& q, const Tensor& k,
                              const Tensor& v, const AttnProjections& proj);

/// Residual score map, same shape as m.values. With refine_axis=keys the
/// columns of M are the tokens (grid describes the key arrangement); with
/// queries its rows are (grid describes the query arrangement).
Tensor inner_attention(const CorrelationMap& m, const AttentionConfig& cfg,
                       const InnerAttentionParams& params,
                       const KeyGrid& grid);

Tensor conv_bottleneck_refine(const CorrelationMap& m,
                              const ConvBottleneckParams& params,
                              const KeyGrid& grid);

/// Softmax(M + InnerAttn(M)) V_bar W_o. Falls back to the conventional
/// path when cfg.aia_enabled is false.
Tensor attention_in_attention(const Tensor& q, const Tensor& k,
                              const Tensor& v, const AttentionConfig& cfg,
                              const AttnProjections& proj,
                              const InnerAttentionParams& inner,
                              const KeyGrid& grid);

/// Heads see C/num_heads-wide slices of shared projections; the refinement
/// parameters (inner or conv) are a single set applied to every head's
/// score map. Pass mode=none for plain multi-head attention (inner/convb
/// may then be null).
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionConfig& cfg,
                            const AttnProjections& proj,
                            const InnerAttentionParams* inner,
                            const ConvBottleneckParams* convb,
                            const KeyGrid& grid, RefineMode mode);

/// Names the attention block executing next, so traced score maps can be
/// told apart. Thread-local; the empty string means "untagged".
void set_attention_tag(const std::string& tag);

/// Pre-/post-refinement score logits of one head of one block.
struct TraceRecord {
  std::string tag;
  std::size_t head = 0;
  Tensor pre;   // [HW_q, HW_k] logits before the residual
  Tensor post;  // logits actually fed to the outer softmax
};

/// While alive (one per thread), every multi_head_attention call appends a
/// TraceRecord per head.
class CorrelationTraceScope {
 public:
  CorrelationTraceScope();
  ~CorrelationTraceScope();
  CorrelationTraceScope(const CorrelationTraceScope&) = delete;
  CorrelationTraceScope& operator=(const CorrelationTraceScope&) = delete;

  const std::vector<TraceRecord>& records() const { return records_; }

 private:
  friend void detail_trace_add(TraceRecord rec);
  std::vector<TraceRecord> records_;
};

}  // namespace corrtrack
