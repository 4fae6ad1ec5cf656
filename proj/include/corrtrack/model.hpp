#pragma once

#include <cstdint>
#include <vector>

#include "corrtrack/attention.hpp"
#include "corrtrack/boxes.hpp"
#include "corrtrack/config.hpp"
#include "corrtrack/losses.hpp"
#include "corrtrack/params.hpp"
#include "corrtrack/random.hpp"
#include "corrtrack/tensor.hpp"

namespace corrtrack {

struct LayerNormParams {
  Tensor gamma, beta;
};

struct FfnParams {
  Tensor w1, b1, w2, b2;  // C -> hidden -> C, relu between
};

struct ConvLayerParams {
  Tensor w, b;  // [c_in*kh*kw, c_out], [c_out]
  std::size_t c_in = 0, c_out = 0;
};

struct StemParams {
  std::vector<ConvLayerParams> convs;  // each downsamples by 2
  LayerNormParams norm;                // over channels, per token
};

struct EncoderLayerParams {
  AttnProjections attn;
  InnerAttentionParams inner;    // used when self refinement is aia
  ConvBottleneckParams bottleneck;  // used when it is conv
  LayerNormParams norm1, norm2;
  FfnParams ffn;
};

struct DecoderBlockParams {
  AttnProjections long_attn;
  InnerAttentionParams long_inner;
  ConvBottleneckParams long_bottleneck;
  AttnProjections short_attn;
  InnerAttentionParams short_inner;
  ConvBottleneckParams short_bottleneck;
  LayerNormParams norm1, norm2;
  FfnParams ffn;
};

struct CornerBranchParams {
  Tensor conv1_w, conv1_b;  // 3x3, C -> C/2
  Tensor conv2_w, conv2_b;  // 3x3, C/2 -> 1
};

struct CornerHeadParams {
  CornerBranchParams tl, br;
};

struct IouHeadParams {
  Tensor w1, b1;  // pooled features -> C
  Tensor w2, b2;  // C -> 1; zero-initialized so a fresh head scores 0
};

struct EmbeddingPair {
  Tensor target;      // [1, C]
  Tensor background;  // [1, C]
};

/// One cached reference: encoded features plus the role map that marks
/// which cells belonged to the target.
struct Reference {
  Tensor features;   // [HW, C]
  Tensor embedding;  // [HW, C]
  Box box;           // patch-normalized box the embedding was built from
};

struct CornerOutput {
  BoxT box;       // differentiable, corner coordinates normalized to [0,1]
  Tensor prob_tl;  // [1, HW] softmax map
  Tensor prob_br;
};

/// Expected (x, y) of a probability map over an h x w grid, in cell units.
/// prob is [1, h*w], row-major. Returns {x_hat, y_hat} as shape-{1} tensors.
std::pair<Tensor, Tensor> heatmap_expectation(const Tensor& prob,
                                              std::size_t h, std::size_t w);

class TrackerModel {
 public:
  TrackerModel(const TrackerConfig& cfg, std::uint64_t seed);

  const TrackerConfig& config() const { return cfg_; }
  ParamRegistry& params() { return registry_; }
  const ParamRegistry& params() const { return registry_; }

  /// [3, res, res] image tensor -> [HW, C] tokens (strided conv chain with
  /// a final per-token LayerNorm).
  Tensor stem(const Tensor& rgb) const;

  /// Self-attention encoder over tokens; identity when encoder_layers == 0.
  /// The same weights serve search and reference frames.
  Tensor encode(const Tensor& tokens) const;

  /// Target/background role map for a patch-normalized box on the feature
  /// grid. Cell centers decide membership (half-open box edges, top/left
  /// inclusive). A degenerate box yields all-background and a warning.
  Tensor assign_embeddings(const Box& box) const;

  /// Cross-attention read of the references:
  ///   long branch over long_term, short branch over the concatenated
  ///   ensemble, outputs summed -> Add/Norm -> FFN -> Add/Norm.
  /// An empty ensemble falls back to the long-term reference alone.
  Tensor decode(const Tensor& search, const Reference& long_term,
                const std::vector<Reference>& ensemble) const;

  /// Two softmax heatmaps over all cells; corners are their expected
  /// coordinates (in cell units, then normalized by grid-1).
  CornerOutput corner_head(const Tensor& decoded) const;

  /// Pools decoded features under the box (3x3 bilinear grid) and scores
  /// the overlap. Raw regression output: no clamping.
  Tensor iou_head(const Tensor& decoded, const Box& box) const;

  /// What the decoder actually attends over for one reference: features,
  /// plus the role map when embeddings are on, with background rows zeroed
  /// when masking is on.
  Tensor reference_values(const Reference& ref) const;

  const Tensor& search_positional() const { return pos_; }

 private:
  Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& lp) const;

  TrackerConfig cfg_;
  StemParams stem_;
  std::vector<EncoderLayerParams> enc_;
  std::vector<DecoderBlockParams> dec_;
  EmbeddingPair embed_;
  CornerHeadParams corner_;
  IouHeadParams iou_;
  Tensor pos_;  // sinusoidal grid encoding shared by all blocks
  ParamRegistry registry_;
};

}  // namespace corrtrack
