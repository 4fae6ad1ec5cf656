#include "corrtrack/attention.hpp"

#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "corrtrack/ops.hpp"

namespace corrtrack {

namespace {
thread_local std::string g_attention_tag;
thread_local CorrelationTraceScope* g_trace_scope = nullptr;

const std::string& current_attention_tag() { return g_attention_tag; }
}  // namespace

void set_attention_tag(const std::string& tag) { g_attention_tag = tag; }

CorrelationTraceScope::CorrelationTraceScope() {
  if (g_trace_scope)
    throw std::logic_error("CorrelationTraceScope: already active on this thread");
  g_trace_scope = this;
}

CorrelationTraceScope::~CorrelationTraceScope() { g_trace_scope = nullptr; }

void detail_trace_add(TraceRecord rec) {
  if (g_trace_scope) g_trace_scope->records_.push_back(std::move(rec));
}

void AttentionConfig::validate() const {
  if (model_dim == 0 || num_heads == 0 || inner_dim == 0)
    throw ShapeError("attention config: dims must be positive");
  if (model_dim % num_heads != 0)
    throw ShapeError("attention config: num_heads must divide model_dim");
}

Tensor sinusoidal_2d(std::size_t h, std::size_t w, std::size_t channels,
                     double base) {
  if (channels == 0 || channels % 4 != 0) {
    throw ShapeError(
        "sinusoidal_2d: channels must be divisible by 4 (sin/cos pairs on "
        "two axes), got " +
        std::to_string(channels));
  }
  const std::size_t half = channels / 2;   // per axis
  const std::size_t pairs = half / 2;      // sin/cos pairs per axis
  Tensor out = Tensor::zeros({h * w, channels});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* row = out.data() + (y * w + x) * channels;
      for (std::size_t p = 0; p < pairs; ++p) {
        const double freq =
            std::pow(base, -2.0 * static_cast<double>(p) /
                               static_cast<double>(half));
        row[2 * p] = std::sin(static_cast<double>(y) * freq);
        row[2 * p + 1] = std::cos(static_cast<double>(y) * freq);
        row[half + 2 * p] = std::sin(static_cast<double>(x) * freq);
        row[half + 2 * p + 1] = std::cos(static_cast<double>(x) * freq);
      }
    }
  }
  return out;
}

namespace {

// Symmetric uniform fan-in init, the usual default for dense layers.
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor positional_for_grid(const KeyGrid& grid, std::size_t channels,
                           double base) {
  Tensor tile = sinusoidal_2d(grid.h, grid.w, channels, base);
  if (grid.repeats == 1) return tile;
  std::vector<Tensor> tiles(grid.repeats, tile);
  return concat_rows(tiles);
}

}  // namespace

AttnProjections make_attn_projections(std::size_t model_dim, Rng& rng) {
  AttnProjections p;
  p.wq = uniform_init({model_dim, model_dim}, model_dim, rng);
  p.bq = Tensor::zeros({model_dim}, true);
  p.wk = uniform_init({model_dim, model_dim}, model_dim, rng);
  p.bk = Tensor::zeros({model_dim}, true);
  p.wv = uniform_init({model_dim, model_dim}, model_dim, rng);
  p.bv = Tensor::zeros({model_dim}, true);
  p.wo = uniform_init({model_dim, model_dim}, model_dim, rng);
  p.bo = Tensor::zeros({model_dim}, true);
  return p;
}

InnerAttentionParams make_inner_params(std::size_t vec_dim,
                                       std::size_t inner_dim,
                                       AiaVariant variant, Rng& rng) {
  InnerAttentionParams p;
  p.variant = variant;
  p.reduce_w = uniform_init({vec_dim, inner_dim}, vec_dim, rng);
  p.reduce_b = Tensor::zeros({inner_dim}, true);
  p.ln_in_g = Tensor::full({inner_dim}, 1.0, true);
  p.ln_in_b = Tensor::zeros({inner_dim}, true);
  p.query_w = uniform_init({inner_dim, inner_dim}, inner_dim, rng);
  p.query_b = Tensor::zeros({inner_dim}, true);
  p.key_w = uniform_init({inner_dim, inner_dim}, inner_dim, rng);
  p.key_b = Tensor::zeros({inner_dim}, true);
  if (variant != AiaVariant::v2) {
    p.ln_value_g = Tensor::full({vec_dim}, 1.0, true);
    p.ln_value_b = Tensor::zeros({vec_dim}, true);
  }
  if (variant == AiaVariant::v3) {
    p.value_w = uniform_init({vec_dim, vec_dim}, vec_dim, rng);
    p.value_b = Tensor::zeros({vec_dim}, true);
  }
  // Zero start: the refinement begins as a no-op contribution and is
  // learned, not injected as noise.
  p.out_w = Tensor::zeros({vec_dim, vec_dim}, true);
  return p;
}

ConvBottleneckParams make_conv_bottleneck(std::size_t vec_dim,
                                          std::size_t inner_dim, Rng& rng) {
  ConvBottleneckParams p;
  p.reduce_w = uniform_init({vec_dim, inner_dim}, vec_dim, rng);
  p.reduce_b = Tensor::zeros({inner_dim}, true);
  p.conv_w = uniform_init({inner_dim * 9, inner_dim}, inner_dim * 9, rng);
  p.conv_b = Tensor::zeros({inner_dim}, true);
  p.expand_w = Tensor::zeros({inner_dim, vec_dim}, true);
  p.expand_b = Tensor::zeros({vec_dim}, true);
  return p;
}

CorrelationMap correlation(const Tensor& map_q, const Tensor& map_k,
                           const Tensor& wq, const Tensor& wk) {
  if (map_q.dim(1) != map_k.dim(1))
    throw ShapeError("correlation: query/key channel widths differ");
  Tensor qp = matmul(map_q, wq);
  Tensor kp = matmul(map_k, wk);
  if (qp.dim(1) != kp.dim(1))
    throw ShapeError("correlation: projected widths differ");
  const double s = 1.0 / std::sqrt(static_cast<double>(qp.dim(1)));
  return CorrelationMap{scale(matmul(qp, transpose(kp)), s)};
}

Tensor conventional_attention(const Tensor& q, const Tensor& k,
                              const Tensor& v, const AttnProjections& proj) {
  Tensor qp = linear(q, proj.wq, proj.bq);
  Tensor kp = linear(k, proj.wk, proj.bk);
  Tensor vp = linear(v, proj.wv, proj.bv);
  const double s = 1.0 / std::sqrt(static_cast<double>(qp.dim(1)));
  Tensor m = scale(matmul(qp, transpose(kp)), s);
  Tensor attended = matmul(softmax_rows(m), vp);
  return linear(attended, proj.wo, proj.bo);
}

namespace {

// Core of the refinement, written for the token layout x[tokens, vec]:
// one row per position on the refined axis, channels are the correlation
// vector entries.
Tensor refine_tokens(const Tensor& x, const AttentionConfig& cfg,
                     const InnerAttentionParams& p, const KeyGrid& grid) {
  const std::size_t tokens = x.dim(0);
  if (grid.tokens() != tokens) {
    std::ostringstream os;
    os << "inner_attention: grid " << grid.h << "x" << grid.w << " x"
       << grid.repeats << " does not cover " << tokens << " tokens";
    throw ShapeError(os.str());
  }
  if (cfg.inner_dim >= tokens) {
    static bool warned = false;
    if (!warned) {
      std::cerr << "note: inner width " << cfg.inner_dim
                << " is not a reduction for " << tokens
                << " tokens; correct but not the intended economy\n";
      warned = true;
    }
  }
  Tensor reduced = linear(x, p.reduce_w, p.reduce_b);
  Tensor normed = layer_norm(reduced, p.ln_in_g, p.ln_in_b);
  if (cfg.aia_positional) {
    Tensor pos =
        positional_for_grid(grid, cfg.inner_dim, cfg.positional_base);
    normed = add(normed, pos);
  }
  Tensor qi = linear(normed, p.query_w, p.query_b);
  Tensor ki = linear(normed, p.key_w, p.key_b);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.inner_dim));
  Tensor weights = softmax_rows(scale(matmul(qi, transpose(ki)), s));

  Tensor values;
  switch (p.variant) {
    case AiaVariant::v1:
      values = layer_norm(x, p.ln_value_g, p.ln_value_b);
      break;
    case AiaVariant::v2:
      values = x;
      break;
    case AiaVariant::v3:
      values = linear(layer_norm(x, p.ln_value_g, p.ln_value_b), p.value_w,
                      p.value_b);
      break;
  }
  Tensor agg = matmul(weights, values);
  // (1 + W_o') on the channel axis; the identity term is the variant's
  // residual connection.
  Tensor out = matmul(agg, p.out_w);
  if (p.variant == AiaVariant::v1) out = add(out, agg);
  return out;
}

}  // namespace

Tensor inner_attention(const CorrelationMap& m, const AttentionConfig& cfg,
                       const InnerAttentionParams& params,
                       const KeyGrid& grid) {
  if (cfg.refine_axis == RefineAxis::keys) {
    Tensor x = transpose(m.values);  // tokens = key positions
    return transpose(refine_tokens(x, cfg, params, grid));
  }
  return refine_tokens(m.values, cfg, params, grid);
}

Tensor conv_bottleneck_refine(const CorrelationMap& m,
                              const ConvBottleneckParams& params,
                              const KeyGrid& grid) {
  Tensor x = transpose(m.values);  // [tokens, vec], keys perspective
  const std::size_t tokens = x.dim(0);
  if (grid.tokens() != tokens)
    throw ShapeError("conv_bottleneck_refine: grid does not cover tokens");
  const std::size_t d = params.reduce_b.dim(0);
  const std::size_t tile = grid.h * grid.w;
  std::vector<Tensor> outs;
  outs.reserve(grid.repeats);
  for (std::size_t r = 0; r < grid.repeats; ++r) {
    Tensor xt = grid.repeats == 1 ? x : slice_rows(x, r * tile, (r + 1) * tile);
    Tensor reduced = linear(xt, params.reduce_w, params.reduce_b);  // 1x1
    // token rows -> channel planes for the spatial pass
    Tensor planes = reshape(transpose(reduced), {d, grid.h, grid.w});
    Tensor conv = conv2d(planes, params.conv_w, params.conv_b, d, grid.h,
                         grid.w, 3, 3, 1, 1);
    outs.push_back(linear(conv, params.expand_w, params.expand_b));  // 1x1
  }
  Tensor stacked = outs.size() == 1 ? outs[0] : concat_rows(outs);
  return transpose(stacked);
}

Tensor attention_in_attention(const Tensor& q, const Tensor& k,
                              const Tensor& v, const AttentionConfig& cfg,
                              const AttnProjections& proj,
                              const InnerAttentionParams& inner,
                              const KeyGrid& grid) {
  if (!cfg.aia_enabled) return conventional_attention(q, k, v, proj);
  Tensor qp = linear(q, proj.wq, proj.bq);
  Tensor kp = linear(k, proj.wk, proj.bk);
  Tensor vp = linear(v, proj.wv, proj.bv);
  const double s = 1.0 / std::sqrt(static_cast<double>(qp.dim(1)));
  Tensor m = scale(matmul(qp, transpose(kp)), s);
  Tensor residual = inner_attention(CorrelationMap{m}, cfg, inner, grid);
  Tensor attended = matmul(softmax_rows(add(m, residual)), vp);
  return linear(attended, proj.wo, proj.bo);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionConfig& cfg,
                            const AttnProjections& proj,
                            const InnerAttentionParams* inner,
                            const ConvBottleneckParams* convb,
                            const KeyGrid& grid, RefineMode mode) {
  cfg.validate();
  if (mode == RefineMode::aia && inner == nullptr)
    throw ShapeError("multi_head_attention: refinement params missing");
  if (mode == RefineMode::conv && convb == nullptr)
    throw ShapeError("multi_head_attention: bottleneck params missing");
  Tensor qp = linear(q, proj.wq, proj.bq);
  Tensor kp = linear(k, proj.wk, proj.bk);
  Tensor vp = linear(v, proj.wv, proj.bv);
  const std::size_t hd = cfg.head_dim();
  const double s = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> heads;
  heads.reserve(cfg.num_heads);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    Tensor qh = cfg.num_heads == 1 ? qp : slice_cols(qp, h * hd, (h + 1) * hd);
    Tensor kh = cfg.num_heads == 1 ? kp : slice_cols(kp, h * hd, (h + 1) * hd);
    Tensor vh = cfg.num_heads == 1 ? vp : slice_cols(vp, h * hd, (h + 1) * hd);
    Tensor pre = scale(matmul(qh, transpose(kh)), s);
    Tensor m = pre;
    if (mode == RefineMode::aia) {
      m = add(m, inner_attention(CorrelationMap{m}, cfg, *inner, grid));
    } else if (mode == RefineMode::conv) {
      m = add(m, conv_bottleneck_refine(CorrelationMap{m}, *convb, grid));
    }
    if (g_trace_scope)
      detail_trace_add(TraceRecord{current_attention_tag(), h, pre, m});
    heads.push_back(matmul(softmax_rows(m), vh));
  }
  Tensor joined = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return linear(joined, proj.wo, proj.bo);
}

}  // namespace corrtrack
