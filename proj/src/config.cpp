#include "corrtrack/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace corrtrack {

void TrackerConfig::validate() const {
  if (search_resolution == 0 || stride == 0)
    throw std::invalid_argument("config: resolution and stride must be positive");
  if (search_resolution % stride != 0)
    throw std::invalid_argument("config: search_resolution must be divisible by stride");
  if (crop_area_factor <= 0.0)
    throw std::invalid_argument("config: crop_area_factor must be positive");
  if (ffn_hidden == 0) throw std::invalid_argument("config: ffn_hidden must be positive");
  if (iou_pool_size == 0) throw std::invalid_argument("config: iou_pool_size must be positive");
  if (update_threshold < 0.0)
    throw std::invalid_argument("config: update_threshold must be non-negative");
  if (ensemble_size == 0) throw std::invalid_argument("config: ensemble_size must be positive");
  if (cache_capacity == 0) throw std::invalid_argument("config: cache_capacity must be positive");
  if (jitter_center < 0.0 || jitter_scale < 0.0)
    throw std::invalid_argument("config: jitter magnitudes must be non-negative");
  if (iou_samples == 0) throw std::invalid_argument("config: iou_samples must be positive");
  if (learning_rate < 0.0) throw std::invalid_argument("config: learning_rate must be non-negative");
  if (stem_lr_scale < 0.0) throw std::invalid_argument("config: stem_lr_scale must be non-negative");
  if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be non-negative");
  attention.validate();
  loss.validate();
  if (attention.refine_axis == RefineAxis::queries &&
      (self_refine == RefineMode::aia || cross_refine == RefineMode::aia)) {
    // Query-axis refinement sizes its parameters by the query grid, which in
    // cross-attention would couple them to the ensemble size. Self-attention
    // only.
    if (cross_refine == RefineMode::aia)
      throw std::invalid_argument(
          "config: refine_axis=queries is only supported for self-attention "
          "(set cross_refine to none or conv)");
  }
}

TrackerConfig TrackerConfig::desk() { return TrackerConfig{}; }

TrackerConfig TrackerConfig::paper_scale() {
  TrackerConfig cfg;
  cfg.search_resolution = 320;
  cfg.stride = 16;
  cfg.encoder_layers = 3;
  cfg.decoder_layers = 1;
  cfg.ffn_hidden = 1024;
  cfg.attention.model_dim = 256;
  cfg.attention.num_heads = 4;
  cfg.attention.inner_dim = 64;
  return cfg;
}

TrackerConfig TrackerConfig::tiny() {
  TrackerConfig cfg;
  cfg.search_resolution = 32;  // grid 4x4 at stride 8
  cfg.stride = 8;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.ffn_hidden = 16;
  cfg.attention.model_dim = 8;
  cfg.attention.num_heads = 2;
  cfg.attention.inner_dim = 4;
  cfg.ensemble_size = 2;
  return cfg;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_num(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
  if (used != v.size())
    throw std::invalid_argument("config: trailing junk after number for " + key + ": '" + v + "'");
  return x;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  double x = parse_num(key, v);
  if (x < 0.0 || x != static_cast<double>(static_cast<std::size_t>(x)))
    throw std::invalid_argument("config: " + key + " must be a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: " + key + " must be true or false, got '" + v + "'");
}

AiaVariant parse_variant(const std::string& key, const std::string& v) {
  if (v == "v1") return AiaVariant::v1;
  if (v == "v2") return AiaVariant::v2;
  if (v == "v3") return AiaVariant::v3;
  throw std::invalid_argument("config: " + key + " must be v1|v2|v3, got '" + v + "'");
}

RefineAxis parse_axis(const std::string& key, const std::string& v) {
  if (v == "keys") return RefineAxis::keys;
  if (v == "queries") return RefineAxis::queries;
  throw std::invalid_argument("config: " + key + " must be keys|queries, got '" + v + "'");
}

RefineMode parse_mode(const std::string& key, const std::string& v) {
  if (v == "none") return RefineMode::none;
  if (v == "aia") return RefineMode::aia;
  if (v == "conv") return RefineMode::conv;
  throw std::invalid_argument("config: " + key + " must be none|aia|conv, got '" + v + "'");
}

const char* variant_name(AiaVariant v) {
  switch (v) {
    case AiaVariant::v1: return "v1";
    case AiaVariant::v2: return "v2";
    case AiaVariant::v3: return "v3";
  }
  return "v1";
}

const char* axis_name(RefineAxis a) { return a == RefineAxis::keys ? "keys" : "queries"; }

const char* mode_name(RefineMode m) {
  switch (m) {
    case RefineMode::none: return "none";
    case RefineMode::aia: return "aia";
    case RefineMode::conv: return "conv";
  }
  return "none";
}

void set_key(TrackerConfig& c, const std::string& key, const std::string& v) {
  if (key == "search_resolution") c.search_resolution = parse_size(key, v);
  else if (key == "stride") c.stride = parse_size(key, v);
  else if (key == "crop_area_factor") c.crop_area_factor = parse_num(key, v);
  else if (key == "encoder_layers") c.encoder_layers = parse_size(key, v);
  else if (key == "decoder_layers") c.decoder_layers = parse_size(key, v);
  else if (key == "ffn_hidden") c.ffn_hidden = parse_size(key, v);
  else if (key == "iou_pool_size") c.iou_pool_size = parse_size(key, v);
  else if (key == "attention.model_dim") c.attention.model_dim = parse_size(key, v);
  else if (key == "attention.num_heads") c.attention.num_heads = parse_size(key, v);
  else if (key == "attention.inner_dim") c.attention.inner_dim = parse_size(key, v);
  else if (key == "attention.aia_enabled") c.attention.aia_enabled = parse_bool(key, v);
  else if (key == "attention.aia_variant") c.attention.aia_variant = parse_variant(key, v);
  else if (key == "attention.aia_positional") c.attention.aia_positional = parse_bool(key, v);
  else if (key == "attention.refine_axis") c.attention.refine_axis = parse_axis(key, v);
  else if (key == "attention.positional_base") c.attention.positional_base = parse_num(key, v);
  else if (key == "memory.update_threshold") c.update_threshold = parse_num(key, v);
  else if (key == "memory.ensemble_size") c.ensemble_size = parse_size(key, v);
  else if (key == "memory.cache_capacity") c.cache_capacity = parse_size(key, v);
  else if (key == "memory.random_ensemble") c.random_ensemble = parse_bool(key, v);
  else if (key == "structure.self_refine") c.self_refine = parse_mode(key, v);
  else if (key == "structure.cross_refine") c.cross_refine = parse_mode(key, v);
  else if (key == "structure.use_embeddings") c.use_embeddings = parse_bool(key, v);
  else if (key == "structure.mask_background") c.mask_background = parse_bool(key, v);
  else if (key == "structure.use_short_branch") c.use_short_branch = parse_bool(key, v);
  else if (key == "structure.split_branches") c.split_branches = parse_bool(key, v);
  else if (key == "structure.cross_pos_to_keys") c.cross_pos_to_keys = parse_bool(key, v);
  else if (key == "loss.lambda_giou") c.loss.lambda_giou = parse_num(key, v);
  else if (key == "loss.lambda_l1") c.loss.lambda_l1 = parse_num(key, v);
  else if (key == "loss.lambda_mse") c.loss.lambda_mse = parse_num(key, v);
  else if (key == "train.jitter_center") c.jitter_center = parse_num(key, v);
  else if (key == "train.jitter_scale") c.jitter_scale = parse_num(key, v);
  else if (key == "train.iou_samples") c.iou_samples = parse_size(key, v);
  else if (key == "train.learning_rate") c.learning_rate = parse_num(key, v);
  else if (key == "train.stem_lr_scale") c.stem_lr_scale = parse_num(key, v);
  else if (key == "train.weight_decay") c.weight_decay = parse_num(key, v);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Shortest decimal that parses back to exactly x.
std::string fmt_num(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace

TrackerConfig parse_config(const std::string& text) {
  TrackerConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key or value");
    set_key(cfg, key, val);
  }
  cfg.validate();
  return cfg;
}

TrackerConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string write_config(const TrackerConfig& cfg) {
  std::ostringstream os;
  os << "# corrtrack configuration\n";
  os << "\n# geometry\n";
  os << "search_resolution = " << cfg.search_resolution << "  # architecture default (scaled)\n";
  os << "stride = " << cfg.stride << "  # architecture default (scaled)\n";
  os << "crop_area_factor = " << fmt_num(cfg.crop_area_factor) << "  # architecture default\n";
  os << "\n# model\n";
  os << "encoder_layers = " << cfg.encoder_layers << "  # architecture default\n";
  os << "decoder_layers = " << cfg.decoder_layers << "  # architecture default\n";
  os << "ffn_hidden = " << cfg.ffn_hidden << "  # architecture default (scaled)\n";
  os << "iou_pool_size = " << cfg.iou_pool_size << "  # implementation choice\n";
  os << "attention.model_dim = " << cfg.attention.model_dim << "  # architecture default (scaled)\n";
  os << "attention.num_heads = " << cfg.attention.num_heads << "  # architecture default\n";
  os << "attention.inner_dim = " << cfg.attention.inner_dim << "  # architecture default (scaled)\n";
  os << "attention.aia_enabled = " << (cfg.attention.aia_enabled ? "true" : "false")
     << "  # architecture default\n";
  os << "attention.aia_variant = " << variant_name(cfg.attention.aia_variant)
     << "  # architecture default\n";
  os << "attention.aia_positional = " << (cfg.attention.aia_positional ? "true" : "false")
     << "  # architecture default\n";
  os << "attention.refine_axis = " << axis_name(cfg.attention.refine_axis)
     << "  # architecture default\n";
  os << "attention.positional_base = " << fmt_num(cfg.attention.positional_base)
     << "  # architecture default\n";
  os << "\n# reference memory\n";
  os << "memory.update_threshold = " << fmt_num(cfg.update_threshold)
     << "  # architecture default\n";
  os << "memory.ensemble_size = " << cfg.ensemble_size << "  # architecture default\n";
  os << "memory.cache_capacity = " << cfg.cache_capacity << "  # architecture default\n";
  os << "memory.random_ensemble = " << (cfg.random_ensemble ? "true" : "false")
     << "  # implementation choice\n";
  os << "\n# structure switches\n";
  os << "structure.self_refine = " << mode_name(cfg.self_refine) << "  # architecture default\n";
  os << "structure.cross_refine = " << mode_name(cfg.cross_refine) << "  # architecture default\n";
  os << "structure.use_embeddings = " << (cfg.use_embeddings ? "true" : "false")
     << "  # architecture default\n";
  os << "structure.mask_background = " << (cfg.mask_background ? "true" : "false")
     << "  # architecture default\n";
  os << "structure.use_short_branch = " << (cfg.use_short_branch ? "true" : "false")
     << "  # architecture default\n";
  os << "structure.split_branches = " << (cfg.split_branches ? "true" : "false")
     << "  # architecture default\n";
  os << "structure.cross_pos_to_keys = " << (cfg.cross_pos_to_keys ? "true" : "false")
     << "  # implementation choice\n";
  os << "\n# training\n";
  os << "loss.lambda_giou = " << fmt_num(cfg.loss.lambda_giou) << "  # architecture default\n";
  os << "loss.lambda_l1 = " << fmt_num(cfg.loss.lambda_l1) << "  # architecture default\n";
  os << "loss.lambda_mse = " << fmt_num(cfg.loss.lambda_mse) << "  # architecture default\n";
  os << "train.jitter_center = " << fmt_num(cfg.jitter_center) << "  # architecture default\n";
  os << "train.jitter_scale = " << fmt_num(cfg.jitter_scale) << "  # architecture default\n";
  os << "train.iou_samples = " << cfg.iou_samples << "  # implementation choice\n";
  os << "train.learning_rate = " << fmt_num(cfg.learning_rate) << "  # implementation choice\n";
  os << "train.stem_lr_scale = " << fmt_num(cfg.stem_lr_scale) << "  # architecture default\n";
  os << "train.weight_decay = " << fmt_num(cfg.weight_decay) << "  # implementation choice\n";
  return os.str();
}

}  // namespace corrtrack
