#include <stdexcept>

#include "corrtrack/config.hpp"
#include "doctest.h"

using namespace corrtrack;

TEST_CASE("profiles validate and keep the expected ratios") {
  TrackerConfig d = TrackerConfig::desk();
  d.validate();
  CHECK(d.grid_size() == 8);
  CHECK(d.tokens() == 64);
  CHECK(d.attention.model_dim == 64);
  CHECK(d.attention.num_heads == 4);
  CHECK(d.ensemble_size == 3);
  CHECK(d.update_threshold == doctest::Approx(0.7));

  TrackerConfig p = TrackerConfig::paper_scale();
  p.validate();
  CHECK(p.grid_size() == 20);
  CHECK(p.attention.model_dim == 256);
  CHECK(p.ffn_hidden == 1024);
  // scaled profile keeps the width/inner-width ratio
  CHECK(p.attention.model_dim / p.attention.inner_dim ==
        d.attention.model_dim / d.attention.inner_dim);

  TrackerConfig t = TrackerConfig::tiny();
  t.validate();
  CHECK(t.grid_size() == 4);
  CHECK(t.attention.model_dim == 8);
}

TEST_CASE("config text roundtrips through write/parse") {
  TrackerConfig cfg = TrackerConfig::desk();
  cfg.attention.aia_variant = AiaVariant::v3;
  cfg.attention.refine_axis = RefineAxis::keys;
  cfg.self_refine = RefineMode::conv;
  cfg.mask_background = true;
  cfg.update_threshold = 0.62;
  cfg.learning_rate = 3e-4;
  cfg.crop_area_factor = 18.5;

  TrackerConfig back = parse_config(write_config(cfg));
  CHECK(back.attention.aia_variant == AiaVariant::v3);
  CHECK(back.self_refine == RefineMode::conv);
  CHECK(back.mask_background == true);
  CHECK(back.update_threshold == cfg.update_threshold);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.crop_area_factor == cfg.crop_area_factor);
  CHECK(back.search_resolution == cfg.search_resolution);
  CHECK(back.loss.lambda_l1 == cfg.loss.lambda_l1);
}

TEST_CASE("parser accepts comments and blank lines") {
  TrackerConfig cfg = parse_config(
      "# header comment\n"
      "\n"
      "stride = 8   # inline comment\n"
      "  attention.num_heads = 2\n");
  CHECK(cfg.stride == 8);
  CHECK(cfg.attention.num_heads == 2);
}

TEST_CASE("parser rejects malformed input") {
  CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("stride 8\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("stride =\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("stride = eight\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("stride = 8.5\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("stride = 8 9\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("attention.aia_variant = v9\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("structure.use_embeddings = yes\n"), std::invalid_argument);
}

TEST_CASE("validate rejects inconsistent settings") {
  TrackerConfig cfg;
  cfg.search_resolution = 65;  // not divisible by stride 8
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  TrackerConfig c2;
  c2.attention.num_heads = 3;  // does not divide 64
  CHECK_THROWS(c2.validate());

  TrackerConfig c3;
  c3.attention.refine_axis = RefineAxis::queries;
  c3.cross_refine = RefineMode::aia;
  CHECK_THROWS_AS(c3.validate(), std::invalid_argument);
  c3.cross_refine = RefineMode::none;
  c3.validate();  // queries-axis self-attention alone is fine

  TrackerConfig c4;
  c4.loss.lambda_giou = -1.0;
  CHECK_THROWS(c4.validate());
}
