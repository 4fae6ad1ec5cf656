#include "corrtrack/model.hpp"

#include <cmath>
#include <iostream>
#include <string>

#include "corrtrack/ops.hpp"

namespace corrtrack {

namespace {

Tensor uinit(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_size(std::size_t v) {
  std::size_t n = 0;
  while ((std::size_t{1} << n) < v) ++n;
  return n;
}

LayerNormParams make_norm(std::size_t c) {
  return LayerNormParams{Tensor::full({c}, 1.0, true), Tensor::zeros({c}, true)};
}

FfnParams make_ffn(std::size_t c, std::size_t hidden, Rng& rng) {
  FfnParams f;
  f.w1 = uinit({c, hidden}, c, rng);
  f.b1 = Tensor::zeros({hidden}, true);
  f.w2 = uinit({hidden, c}, hidden, rng);
  f.b2 = Tensor::zeros({c}, true);
  return f;
}

}  // namespace

TrackerModel::TrackerModel(const TrackerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t c = cfg_.attention.model_dim;
  const std::size_t g = cfg_.grid_size();
  const std::size_t hw = cfg_.tokens();
  if (c % 4 != 0)
    throw ShapeError("model: model_dim must be divisible by 4 for the grid encoding");
  if (!is_pow2(cfg_.stride) || cfg_.stride < 2)
    throw ShapeError("model: stride must be a power of two >= 2");
  if (g < 2) throw ShapeError("model: feature grid must be at least 2x2");

  Rng rng(seed);
  pos_ = sinusoidal_2d(g, g, c, cfg_.attention.positional_base);

  // Stem: one stride-2 3x3 conv per halving, channels doubling up to C.
  const std::size_t depth = log2_size(cfg_.stride);
  std::size_t c_in = 3;
  for (std::size_t i = 0; i < depth; ++i) {
    std::size_t c_out = c >> (depth - 1 - i);
    if (c_out < 4) c_out = 4;
    if (i + 1 == depth) c_out = c;
    ConvLayerParams layer;
    layer.c_in = c_in;
    layer.c_out = c_out;
    layer.w = uinit({c_in * 9, c_out}, c_in * 9, rng);
    // nonzero bias spread keeps border tokens (mostly zero padding in their
    // receptive field) away from a degenerate pre-norm variance
    layer.b = uinit({c_out}, c_in * 9, rng);
    stem_.convs.push_back(layer);
    c_in = c_out;
  }
  stem_.norm = make_norm(c);

  const bool want_short =
      cfg_.use_short_branch && cfg_.split_branches;  // separate short params

  for (std::size_t i = 0; i < cfg_.encoder_layers; ++i) {
    EncoderLayerParams lp;
    lp.attn = make_attn_projections(c, rng);
    if (cfg_.self_refine == RefineMode::aia)
      lp.inner = make_inner_params(hw, cfg_.attention.inner_dim,
                                   cfg_.attention.aia_variant, rng);
    else if (cfg_.self_refine == RefineMode::conv)
      lp.bottleneck = make_conv_bottleneck(hw, cfg_.attention.inner_dim, rng);
    lp.norm1 = make_norm(c);
    lp.norm2 = make_norm(c);
    lp.ffn = make_ffn(c, cfg_.ffn_hidden, rng);
    enc_.push_back(lp);
  }

  for (std::size_t i = 0; i < cfg_.decoder_layers; ++i) {
    DecoderBlockParams bp;
    bp.long_attn = make_attn_projections(c, rng);
    if (cfg_.cross_refine == RefineMode::aia)
      bp.long_inner = make_inner_params(hw, cfg_.attention.inner_dim,
                                        cfg_.attention.aia_variant, rng);
    else if (cfg_.cross_refine == RefineMode::conv)
      bp.long_bottleneck = make_conv_bottleneck(hw, cfg_.attention.inner_dim, rng);
    if (want_short) {
      bp.short_attn = make_attn_projections(c, rng);
      if (cfg_.cross_refine == RefineMode::aia)
        bp.short_inner = make_inner_params(hw, cfg_.attention.inner_dim,
                                           cfg_.attention.aia_variant, rng);
      else if (cfg_.cross_refine == RefineMode::conv)
        bp.short_bottleneck =
            make_conv_bottleneck(hw, cfg_.attention.inner_dim, rng);
    }
    bp.norm1 = make_norm(c);
    bp.norm2 = make_norm(c);
    bp.ffn = make_ffn(c, cfg_.ffn_hidden, rng);
    dec_.push_back(bp);
  }

  embed_.target = Tensor::zeros({1, c}, true);
  embed_.background = Tensor::zeros({1, c}, true);
  for (std::size_t i = 0; i < c; ++i) {
    embed_.target.data()[i] = rng.normal();
    embed_.background.data()[i] = rng.normal();
  }

  const std::size_t mid = c / 2;
  corner_.tl.conv1_w = uinit({c * 9, mid}, c * 9, rng);
  corner_.tl.conv1_b = Tensor::zeros({mid}, true);
  corner_.tl.conv2_w = uinit({mid * 9, 1}, mid * 9, rng);
  corner_.tl.conv2_b = Tensor::zeros({1}, true);
  corner_.br.conv1_w = uinit({c * 9, mid}, c * 9, rng);
  corner_.br.conv1_b = Tensor::zeros({mid}, true);
  corner_.br.conv2_w = uinit({mid * 9, 1}, mid * 9, rng);
  corner_.br.conv2_b = Tensor::zeros({1}, true);

  const std::size_t pooled = cfg_.iou_pool_size * cfg_.iou_pool_size * c;
  iou_.w1 = uinit({pooled, c}, pooled, rng);
  iou_.b1 = Tensor::zeros({c}, true);
  // Zero start so a fresh head scores every box 0 instead of noise.
  iou_.w2 = Tensor::zeros({c, 1}, true);
  iou_.b2 = Tensor::zeros({1}, true);

  // ---- registry (fixed order: serialization matches it exactly) ----
  auto reg = [&](const std::string& name, const Tensor& t) {
    registry_.add(name, t);
  };
  auto reg_attn = [&](const std::string& p, const AttnProjections& a) {
    reg(p + ".wq", a.wq); reg(p + ".bq", a.bq);
    reg(p + ".wk", a.wk); reg(p + ".bk", a.bk);
    reg(p + ".wv", a.wv); reg(p + ".bv", a.bv);
    reg(p + ".wo", a.wo); reg(p + ".bo", a.bo);
  };
  auto reg_inner = [&](const std::string& p, const InnerAttentionParams& ip) {
    reg(p + ".reduce_w", ip.reduce_w); reg(p + ".reduce_b", ip.reduce_b);
    reg(p + ".ln_in_g", ip.ln_in_g); reg(p + ".ln_in_b", ip.ln_in_b);
    reg(p + ".query_w", ip.query_w); reg(p + ".query_b", ip.query_b);
    reg(p + ".key_w", ip.key_w); reg(p + ".key_b", ip.key_b);
    if (ip.ln_value_g.defined()) {
      reg(p + ".ln_value_g", ip.ln_value_g);
      reg(p + ".ln_value_b", ip.ln_value_b);
    }
    if (ip.value_w.defined()) {
      reg(p + ".value_w", ip.value_w);
      reg(p + ".value_b", ip.value_b);
    }
    reg(p + ".out_w", ip.out_w);
  };
  auto reg_convb = [&](const std::string& p, const ConvBottleneckParams& cb) {
    reg(p + ".reduce_w", cb.reduce_w); reg(p + ".reduce_b", cb.reduce_b);
    reg(p + ".conv_w", cb.conv_w); reg(p + ".conv_b", cb.conv_b);
    reg(p + ".expand_w", cb.expand_w); reg(p + ".expand_b", cb.expand_b);
  };
  auto reg_refine = [&](const std::string& p, RefineMode mode,
                        const InnerAttentionParams& ip,
                        const ConvBottleneckParams& cb) {
    if (mode == RefineMode::aia) reg_inner(p + ".inner", ip);
    else if (mode == RefineMode::conv) reg_convb(p + ".bottleneck", cb);
  };
  auto reg_norm = [&](const std::string& p, const LayerNormParams& n) {
    reg(p + ".g", n.gamma); reg(p + ".b", n.beta);
  };
  auto reg_ffn = [&](const std::string& p, const FfnParams& f) {
    reg(p + ".w1", f.w1); reg(p + ".b1", f.b1);
    reg(p + ".w2", f.w2); reg(p + ".b2", f.b2);
  };

  for (std::size_t i = 0; i < stem_.convs.size(); ++i) {
    reg("stem.conv" + std::to_string(i) + ".w", stem_.convs[i].w);
    reg("stem.conv" + std::to_string(i) + ".b", stem_.convs[i].b);
  }
  reg_norm("stem.norm", stem_.norm);
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    reg_attn(p + ".attn", enc_[i].attn);
    reg_refine(p, cfg_.self_refine, enc_[i].inner, enc_[i].bottleneck);
    reg_norm(p + ".norm1", enc_[i].norm1);
    reg_norm(p + ".norm2", enc_[i].norm2);
    reg_ffn(p + ".ffn", enc_[i].ffn);
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    reg_attn(p + ".long.attn", dec_[i].long_attn);
    reg_refine(p + ".long", cfg_.cross_refine, dec_[i].long_inner,
               dec_[i].long_bottleneck);
    if (want_short) {
      reg_attn(p + ".short.attn", dec_[i].short_attn);
      reg_refine(p + ".short", cfg_.cross_refine, dec_[i].short_inner,
                 dec_[i].short_bottleneck);
    }
    reg_norm(p + ".norm1", dec_[i].norm1);
    reg_norm(p + ".norm2", dec_[i].norm2);
    reg_ffn(p + ".ffn", dec_[i].ffn);
  }
  reg("embed.target", embed_.target);
  reg("embed.background", embed_.background);
  reg("corner.tl.conv1_w", corner_.tl.conv1_w);
  reg("corner.tl.conv1_b", corner_.tl.conv1_b);
  reg("corner.tl.conv2_w", corner_.tl.conv2_w);
  reg("corner.tl.conv2_b", corner_.tl.conv2_b);
  reg("corner.br.conv1_w", corner_.br.conv1_w);
  reg("corner.br.conv1_b", corner_.br.conv1_b);
  reg("corner.br.conv2_w", corner_.br.conv2_w);
  reg("corner.br.conv2_b", corner_.br.conv2_b);
  reg("iou.w1", iou_.w1);
  reg("iou.b1", iou_.b1);
  reg("iou.w2", iou_.w2);
  reg("iou.b2", iou_.b2);
}

Tensor TrackerModel::stem(const Tensor& rgb) const {
  if (rgb.rank() != 3 || rgb.dim(0) != 3)
    throw ShapeError("stem: expected [3, h, w] input, got " +
                     shape_str(rgb.shape()));
  std::size_t h = rgb.dim(1), w = rgb.dim(2);
  if (h % cfg_.stride != 0 || w % cfg_.stride != 0)
    throw ShapeError("stem: input extent not divisible by stride " +
                     std::to_string(cfg_.stride));
  Tensor x = rgb;
  std::size_t ch = 3;
  for (std::size_t i = 0; i < stem_.convs.size(); ++i) {
    const ConvLayerParams& layer = stem_.convs[i];
    Tensor tokens = conv2d(x, layer.w, layer.b, ch, h, w, 3, 3, 2, 1);
    // the last conv feeds the normalization directly: rectifying it would
    // leave tokens with mostly-dead channels and a degenerate variance
    if (i + 1 < stem_.convs.size()) tokens = relu(tokens);
    h /= 2;
    w /= 2;
    ch = layer.c_out;
    x = reshape(transpose(tokens), {ch, h, w});
  }
  Tensor tokens = transpose(reshape(x, {ch, h * w}));
  return layer_norm(tokens, stem_.norm.gamma, stem_.norm.beta);
}

Tensor TrackerModel::encoder_layer(const Tensor& x,
                                   const EncoderLayerParams& lp) const {
  const std::size_t g = cfg_.grid_size();
  Tensor xp = add(x, pos_);  // positional on queries and keys, not values
  Tensor attn = multi_head_attention(xp, xp, x, cfg_.attention, lp.attn,
                                     &lp.inner, &lp.bottleneck,
                                     KeyGrid{g, g, 1}, cfg_.self_refine);
  Tensor x1 = layer_norm(add(x, attn), lp.norm1.gamma, lp.norm1.beta);
  Tensor hidden = relu(linear(x1, lp.ffn.w1, lp.ffn.b1));
  Tensor x2 = add(x1, linear(hidden, lp.ffn.w2, lp.ffn.b2));
  return layer_norm(x2, lp.norm2.gamma, lp.norm2.beta);
}

Tensor TrackerModel::encode(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(0) != cfg_.tokens() ||
      tokens.dim(1) != cfg_.attention.model_dim)
    throw ShapeError("encode: expected [" + std::to_string(cfg_.tokens()) +
                     ", " + std::to_string(cfg_.attention.model_dim) +
                     "] tokens, got " + shape_str(tokens.shape()));
  Tensor x = tokens;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    set_attention_tag("enc" + std::to_string(i) + ".self");
    x = encoder_layer(x, enc_[i]);
  }
  set_attention_tag("");
  return x;
}

Tensor TrackerModel::assign_embeddings(const Box& box) const {
  const std::size_t g = cfg_.grid_size();
  const std::size_t hw = cfg_.tokens();
  const bool degenerate = !(box.width() > 0.0 && box.height() > 0.0);
  if (degenerate)
    std::cerr << "assign_embeddings: degenerate box, marking every cell "
                 "background\n";
  std::vector<double> inside(hw, 0.0), outside(hw, 1.0);
  if (!degenerate) {
    for (std::size_t t = 0; t < hw; ++t) {
      const double cx = (static_cast<double>(t % g) + 0.5) / static_cast<double>(g);
      const double cy = (static_cast<double>(t / g) + 0.5) / static_cast<double>(g);
      // Half-open on the right/bottom so adjacent boxes never share a cell.
      if (cx >= box.x0 && cx < box.x1 && cy >= box.y0 && cy < box.y1) {
        inside[t] = 1.0;
        outside[t] = 0.0;
      }
    }
  }
  Tensor m_in = Tensor::from_data({hw, 1}, std::move(inside));
  Tensor m_out = Tensor::from_data({hw, 1}, std::move(outside));
  return add(matmul(m_in, embed_.target), matmul(m_out, embed_.background));
}

Tensor TrackerModel::reference_values(const Reference& ref) const {
  Tensor v = ref.features;
  if (cfg_.use_embeddings) v = add(v, ref.embedding);
  if (cfg_.mask_background) {
    const std::size_t g = cfg_.grid_size();
    const std::size_t hw = cfg_.tokens();
    std::vector<double> keep(hw * cfg_.attention.model_dim, 0.0);
    for (std::size_t t = 0; t < hw; ++t) {
      const double cx = (static_cast<double>(t % g) + 0.5) / static_cast<double>(g);
      const double cy = (static_cast<double>(t / g) + 0.5) / static_cast<double>(g);
      if (ref.box.width() > 0.0 && ref.box.height() > 0.0 && cx >= ref.box.x0 &&
          cx < ref.box.x1 && cy >= ref.box.y0 && cy < ref.box.y1)
        for (std::size_t j = 0; j < cfg_.attention.model_dim; ++j)
          keep[t * cfg_.attention.model_dim + j] = 1.0;
    }
    v = mul(v, Tensor::from_data({hw, cfg_.attention.model_dim}, std::move(keep)));
  }
  return v;
}

Tensor TrackerModel::decode(const Tensor& search, const Reference& long_term,
                            const std::vector<Reference>& ensemble) const {
  if (search.rank() != 2 || search.dim(0) != cfg_.tokens() ||
      search.dim(1) != cfg_.attention.model_dim)
    throw ShapeError("decode: bad search shape " + shape_str(search.shape()));
  const std::size_t g = cfg_.grid_size();
  const bool have_short = cfg_.use_short_branch && !ensemble.empty();

  auto tiled_pos = [&](std::size_t repeats) {
    if (repeats == 1) return pos_;
    std::vector<Tensor> tiles(repeats, pos_);
    return concat_rows(tiles);
  };
  auto with_pos = [&](const Tensor& feats, std::size_t repeats) {
    return cfg_.cross_pos_to_keys ? add(feats, tiled_pos(repeats)) : feats;
  };

  Tensor x = search;
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const DecoderBlockParams& bp = dec_[i];
    const std::string p = "dec" + std::to_string(i);
    Tensor qp = add(x, pos_);
    Tensor merged;
    if (cfg_.split_branches || !have_short) {
      set_attention_tag(p + ".long");
      Tensor out_long = multi_head_attention(
          qp, with_pos(long_term.features, 1), reference_values(long_term),
          cfg_.attention, bp.long_attn, &bp.long_inner, &bp.long_bottleneck,
          KeyGrid{g, g, 1}, cfg_.cross_refine);
      merged = out_long;
      if (have_short) {
        std::vector<Tensor> feats, vals;
        for (const Reference& r : ensemble) {
          feats.push_back(r.features);
          vals.push_back(reference_values(r));
        }
        Tensor k_short = with_pos(feats.size() == 1 ? feats[0] : concat_rows(feats),
                                  ensemble.size());
        Tensor v_short = vals.size() == 1 ? vals[0] : concat_rows(vals);
        set_attention_tag(p + ".short");
        Tensor out_short = multi_head_attention(
            qp, k_short, v_short, cfg_.attention, bp.short_attn,
            &bp.short_inner, &bp.short_bottleneck,
            KeyGrid{g, g, ensemble.size()}, cfg_.cross_refine);
        merged = add(merged, out_short);
      }
    } else {
      // Single read over [long-term | ensemble] with the long-branch weights.
      std::vector<Tensor> feats{long_term.features};
      std::vector<Tensor> vals{reference_values(long_term)};
      for (const Reference& r : ensemble) {
        feats.push_back(r.features);
        vals.push_back(reference_values(r));
      }
      set_attention_tag(p + ".merged");
      merged = multi_head_attention(
          qp, with_pos(concat_rows(feats), 1 + ensemble.size()),
          concat_rows(vals), cfg_.attention, bp.long_attn, &bp.long_inner,
          &bp.long_bottleneck, KeyGrid{g, g, 1 + ensemble.size()},
          cfg_.cross_refine);
    }
    set_attention_tag("");
    Tensor x1 = layer_norm(add(x, merged), bp.norm1.gamma, bp.norm1.beta);
    Tensor hidden = relu(linear(x1, bp.ffn.w1, bp.ffn.b1));
    Tensor x2 = add(x1, linear(hidden, bp.ffn.w2, bp.ffn.b2));
    x = layer_norm(x2, bp.norm2.gamma, bp.norm2.beta);
  }
  return x;
}

std::pair<Tensor, Tensor> heatmap_expectation(const Tensor& prob,
                                              std::size_t h, std::size_t w) {
  if (prob.rank() != 2 || prob.dim(0) != 1 || prob.dim(1) != h * w)
    throw ShapeError("heatmap_expectation: want [1, " + std::to_string(h * w) +
                     "], got " + shape_str(prob.shape()));
  std::vector<double> cx(h * w), cy(h * w);
  for (std::size_t t = 0; t < h * w; ++t) {
    cx[t] = static_cast<double>(t % w);
    cy[t] = static_cast<double>(t / w);
  }
  Tensor xs = Tensor::from_data({h * w, 1}, std::move(cx));
  Tensor ys = Tensor::from_data({h * w, 1}, std::move(cy));
  return {reshape(matmul(prob, xs), {1}), reshape(matmul(prob, ys), {1})};
}

CornerOutput TrackerModel::corner_head(const Tensor& decoded) const {
  const std::size_t g = cfg_.grid_size();
  const std::size_t c = cfg_.attention.model_dim;
  const std::size_t mid = c / 2;
  Tensor spatial = reshape(transpose(decoded), {c, g, g});
  auto heat = [&](const CornerBranchParams& bp) {
    Tensor h1 = relu(conv2d(spatial, bp.conv1_w, bp.conv1_b, c, g, g, 3, 3, 1, 1));
    Tensor h1sp = reshape(transpose(h1), {mid, g, g});
    Tensor logits = conv2d(h1sp, bp.conv2_w, bp.conv2_b, mid, g, g, 3, 3, 1, 1);
    return softmax_rows(transpose(logits));  // [1, hw]
  };
  Tensor p_tl = heat(corner_.tl);
  Tensor p_br = heat(corner_.br);

  const double inv = 1.0 / static_cast<double>(g - 1);
  auto [tl_x, tl_y] = heatmap_expectation(p_tl, g, g);
  auto [br_x, br_y] = heatmap_expectation(p_br, g, g);
  CornerOutput out;
  out.box = BoxT{scale(tl_x, inv), scale(tl_y, inv), scale(br_x, inv),
                 scale(br_y, inv)};
  out.prob_tl = p_tl;
  out.prob_br = p_br;
  return out;
}

Tensor TrackerModel::iou_head(const Tensor& decoded, const Box& box) const {
  const std::size_t g = cfg_.grid_size();
  const double b[4] = {box.x0, box.y0, box.x1, box.y1};
  Tensor pooled = roi_pool_bilinear(decoded, g, g, b, cfg_.iou_pool_size);
  Tensor flat = reshape(pooled, {1, pooled.size()});
  Tensor h1 = relu(linear(flat, iou_.w1, iou_.b1));
  return reshape(linear(h1, iou_.w2, iou_.b2), {1});  // raw, unclamped
}

}  // namespace corrtrack
