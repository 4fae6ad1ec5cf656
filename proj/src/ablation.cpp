#include "corrtrack/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "corrtrack/ops.hpp"
#include "corrtrack/random.hpp"

namespace corrtrack {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t eval_seed(std::uint64_t base, std::size_t i) {
  Rng root(base ^ 0xE5A1u);
  Rng fork = root.fork(i);
  return fork.integer(UINT64_MAX);
}

std::map<std::string, std::string> config_kv(const TrackerConfig& cfg) {
  std::map<std::string, std::string> kv;
  std::istringstream in(write_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const std::size_t b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const std::size_t e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace

std::vector<std::string> ablation_variant_names() {
  return {"a", "b", "c", "d", "e", "f", "g", "h", "i", "conv"};
}

TrackerConfig apply_variant(TrackerConfig base, const std::string& name) {
  // Reference-handling variants run without refinement; refinement variants
  // keep embeddings on. Both branches stay enabled unless the variant is
  // about the branch layout itself.
  TrackerConfig c = base;
  c.use_embeddings = true;
  c.mask_background = false;
  c.use_short_branch = true;
  c.split_branches = true;
  c.attention.aia_positional = true;
  if (name == "a") {
    c.use_embeddings = false;
    c.self_refine = RefineMode::none;
    c.cross_refine = RefineMode::none;
  } else if (name == "b") {
    c.use_embeddings = false;
    c.mask_background = true;
    c.self_refine = RefineMode::none;
    c.cross_refine = RefineMode::none;
  } else if (name == "c") {
    c.self_refine = RefineMode::none;
    c.cross_refine = RefineMode::none;
  } else if (name == "d") {
    c.use_short_branch = false;
    c.self_refine = RefineMode::none;
    c.cross_refine = RefineMode::none;
  } else if (name == "e") {
    c.split_branches = false;
    c.self_refine = RefineMode::none;
    c.cross_refine = RefineMode::none;
  } else if (name == "f") {
    c.self_refine = RefineMode::aia;
    c.cross_refine = RefineMode::none;
  } else if (name == "g") {
    c.self_refine = RefineMode::none;
    c.cross_refine = RefineMode::aia;
  } else if (name == "h") {
    c.self_refine = RefineMode::aia;
    c.cross_refine = RefineMode::aia;
    c.attention.aia_positional = false;
  } else if (name == "i") {
    c.self_refine = RefineMode::aia;
    c.cross_refine = RefineMode::aia;
  } else if (name == "conv") {
    c.self_refine = RefineMode::conv;
    c.cross_refine = RefineMode::conv;
  } else {
    throw std::invalid_argument("unknown ablation variant: " + name);
  }
  c.validate();
  return c;
}

std::vector<std::string> config_diff(const TrackerConfig& a,
                                     const TrackerConfig& b) {
  const auto ka = config_kv(a), kb = config_kv(b);
  std::vector<std::string> diff;
  for (const auto& [key, va] : ka) {
    const auto it = kb.find(key);
    if (it == kb.end() || it->second != va) diff.push_back(key);
  }
  for (const auto& [key, vb] : kb)
    if (!ka.count(key)) diff.push_back(key);
  std::sort(diff.begin(), diff.end());
  return diff;
}

TrainOptions make_train_options(const AblationOptions& opts) {
  TrainOptions t;
  t.steps = opts.steps;
  t.batch = opts.batch;
  t.num_sequences = opts.train_sequences;
  t.spec = opts.spec;
  t.spec.frames = opts.train_frames;
  t.seed = opts.seed;
  return t;
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CORRTRACK_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return std::clamp<std::size_t>(hw ? hw : 1, 1, 8);
}

std::vector<double> evaluate_model(const TrackerModel& model,
                                   const AblationOptions& opts,
                                   std::size_t ensemble_override) {
  if (opts.eval_sequences == 0)
    throw std::invalid_argument("evaluate_model: need >= 1 sequence");
  SyntheticSpec spec = opts.spec;
  spec.frames = opts.eval_frames;

  std::vector<double> per_seq(opts.eval_sequences, 0.0);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= opts.eval_sequences) return;
      const SyntheticSequence seq =
          make_sequence(spec, eval_seed(opts.seed, i));
      TrackOptions topts;
      topts.ensemble_override = ensemble_override;
      const TrackRun run = track_sequence(model, seq, topts);
      double iou = 0.0;
      for (std::size_t f = 1; f < run.records.size(); ++f)
        iou += run.records[f].gt_iou;
      per_seq[i] = iou / static_cast<double>(run.records.size() - 1);
    }
  };

  const std::size_t n =
      std::min(resolve_workers(opts.workers), opts.eval_sequences);
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return per_seq;
}

VariantResult run_variant(const std::string& name, const TrackerConfig& base,
                          const AblationOptions& opts) {
  const TrackerConfig cfg = apply_variant(base, name);
  TrackerModel model(cfg, opts.seed);

  VariantResult r;
  r.name = name;
  auto t0 = Clock::now();
  r.train = train_toy(model, make_train_options(opts));
  r.train_seconds = seconds_since(t0);
  if (r.train.diverged_at >= 0)
    throw std::runtime_error("variant " + name + " diverged at step " +
                             std::to_string(r.train.diverged_at) + ": " +
                             r.train.diagnostics);

  t0 = Clock::now();
  r.per_sequence = evaluate_model(model, opts);
  r.eval_seconds = seconds_since(t0);
  double s = 0.0;
  for (double v : r.per_sequence) s += v;
  r.mean_iou = s / static_cast<double>(r.per_sequence.size());
  return r;
}

std::vector<VariantResult> run_ablation(const std::vector<std::string>& names,
                                        const TrackerConfig& base,
                                        const AblationOptions& opts) {
  std::vector<VariantResult> out;
  out.reserve(names.size());
  for (const std::string& name : names)
    out.push_back(run_variant(name, base, opts));
  return out;
}

PairedDiff paired_diff(const std::vector<double>& a,
                       const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("paired_diff: need equal nonempty samples");
  const double n = static_cast<double>(a.size());
  PairedDiff d;
  for (std::size_t i = 0; i < a.size(); ++i) d.mean += a[i] - b[i];
  d.mean /= n;
  if (a.size() > 1) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double e = a[i] - b[i] - d.mean;
      ss += e * e;
    }
    d.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return d;
}

std::vector<SweepPoint> ensemble_sweep(const TrackerModel& model,
                                       const std::vector<std::size_t>& ks,
                                       const AblationOptions& opts) {
  std::vector<SweepPoint> out;
  out.reserve(ks.size());
  for (std::size_t k : ks) {
    if (k == 0) throw std::invalid_argument("ensemble_sweep: k must be >= 1");
    const std::vector<double> per_seq = evaluate_model(model, opts, k);
    double s = 0.0;
    for (double v : per_seq) s += v;
    out.push_back(SweepPoint{k, s / static_cast<double>(per_seq.size())});
  }
  return out;
}

namespace {

const VariantResult* find_variant(const std::vector<VariantResult>& results,
                                  const std::string& name) {
  for (const VariantResult& r : results)
    if (r.name == name) return &r;
  return nullptr;
}

}  // namespace

std::vector<DirectionCheck> direction_checks(
    const std::vector<VariantResult>& results) {
  struct Spec {
    const char* hi;
    const char* lo;
    const char* label;
    bool noise_ok;
  };
  static const Spec specs[] = {
      {"c", "b", "keeping background context beats masking it", false},
      {"c", "d", "the short-term branch helps", false},
      {"i", "c", "correlation refinement helps", false},
      {"i", "conv", "learned refinement vs local conv aggregation", true},
  };

  std::vector<DirectionCheck> out;
  for (const Spec& s : specs) {
    const VariantResult* hi = find_variant(results, s.hi);
    const VariantResult* lo = find_variant(results, s.lo);
    if (!hi || !lo) continue;
    DirectionCheck c;
    c.label = s.label;
    c.hi = s.hi;
    c.lo = s.lo;
    c.mean_hi = hi->mean_iou;
    c.mean_lo = lo->mean_iou;
    c.diff = paired_diff(hi->per_sequence, lo->per_sequence);
    const double n = static_cast<double>(hi->per_sequence.size());
    const double sd = c.diff.se * std::sqrt(n);
    c.effect_size = sd > 0.0 ? c.diff.mean / sd : 0.0;
    c.noise_ok = s.noise_ok;
    c.ok = c.diff.mean >= 0.0 ||
           (s.noise_ok && -c.diff.mean <= 2.0 * c.diff.se);
    out.push_back(std::move(c));
  }
  return out;
}

std::string direction_report(const std::vector<DirectionCheck>& checks) {
  std::ostringstream os;
  for (const DirectionCheck& c : checks) {
    char line[240];
    std::snprintf(line, sizeof line,
                  "%-4s >= %-4s  %.4f vs %.4f  diff %+.4f (se %.4f, d %+.2f)"
                  "  %s  -- %s\n",
                  c.hi.c_str(), c.lo.c_str(), c.mean_hi, c.mean_lo,
                  c.diff.mean, c.diff.se, c.effect_size,
                  c.ok ? (c.diff.mean >= 0.0 ? "holds" : "within noise")
                       : "REVERSED",
                  c.label.c_str());
    os << line;
  }
  return os.str();
}

std::string ablation_table(const std::vector<VariantResult>& results) {
  std::ostringstream os;
  os << "variant  mean_iou  train_s  eval_s  final_loss\n";
  for (const VariantResult& r : results) {
    char line[160];
    std::snprintf(line, sizeof line, "%-7s  %8.4f  %7.1f  %6.1f  %10.4f\n",
                  r.name.c_str(), r.mean_iou, r.train_seconds, r.eval_seconds,
                  r.train.final_loss);
    os << line;
  }
  return os.str();
}

namespace {

// Cells of a g x g grid whose centers fall inside the normalized box
// (same membership rule the embedding map uses).
std::vector<std::size_t> cells_inside(const Box& b, std::size_t g) {
  std::vector<std::size_t> cells;
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) / static_cast<double>(g);
      const double cy = (static_cast<double>(r) + 0.5) / static_cast<double>(g);
      if (cx >= b.x0 && cx < b.x1 && cy >= b.y0 && cy < b.y1)
        cells.push_back(r * g + c);
    }
  }
  return cells;
}

std::size_t center_cell(const Box& b, std::size_t g) {
  const auto clamp_cell = [g](double v) {
    const long c = static_cast<long>(std::floor(v * static_cast<double>(g)));
    return static_cast<std::size_t>(
        std::clamp<long>(c, 0, static_cast<long>(g) - 1));
  };
  return clamp_cell(b.cy()) * g + clamp_cell(b.cx());
}

double target_mass(const Tensor& probs, const std::vector<std::size_t>& rows,
                   const std::vector<std::size_t>& target_cols) {
  const std::size_t cols = probs.shape()[1];
  double acc = 0.0;
  for (std::size_t r : rows)
    for (std::size_t c : target_cols) acc += probs.data()[r * cols + c];
  return acc / static_cast<double>(rows.size());
}

std::vector<double> row_as_map(const Tensor& probs, std::size_t row,
                               std::size_t cells) {
  const std::size_t cols = probs.shape()[1];
  std::vector<double> map(cells);
  double hi = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    map[c] = probs.data()[row * cols + c];
    hi = std::max(hi, map[c]);
  }
  if (hi > 0.0)
    for (double& v : map) v /= hi;
  return map;
}

}  // namespace

CorrDumpReport dump_correlations(const TrackerModel& model,
                                 const SyntheticSequence& seq,
                                 std::size_t probe_every,
                                 const std::string& out_dir) {
  if (probe_every == 0)
    throw std::invalid_argument("dump_correlations: probe_every must be >= 1");
  const std::size_t g = model.config().grid_size();
  const std::size_t ref_cells = g * g;

  std::vector<TraceProbe> probes;
  TrackOptions topts;
  topts.trace_every = probe_every;
  topts.probes = &probes;
  track_sequence(model, seq, topts);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  CorrDumpReport report;
  std::size_t improved = 0;
  for (const TraceProbe& probe : probes) {
    // The long branch reads the frame-0 reference alone; in the merged
    // layout the same reference occupies the first g*g key columns.
    const TraceRecord* rec = nullptr;
    for (const TraceRecord& r : probe.records)
      if (r.head == 0 && (r.tag == "dec0.long" || r.tag == "dec0.merged")) {
        rec = &r;
        if (r.tag == "dec0.long") break;
      }
    if (!rec) continue;

    const std::vector<std::size_t> target_cols =
        cells_inside(probe.long_ref_box, g);
    if (target_cols.empty()) continue;
    std::vector<std::size_t> query_rows =
        cells_inside(probe.gt_search_box, g);
    if (query_rows.empty())
      query_rows.push_back(center_cell(probe.gt_search_box, g));

    const Tensor pre = softmax_rows(rec->pre);
    const Tensor post = softmax_rows(rec->post);
    CorrProbeResult r;
    r.frame = probe.frame;
    r.pre_mass = target_mass(pre, query_rows, target_cols);
    r.post_mass = target_mass(post, query_rows, target_cols);
    if (r.post_mass >= r.pre_mass) ++improved;

    if (!out_dir.empty()) {
      const std::size_t q = center_cell(probe.gt_search_box, g);
      char name[64];
      std::snprintf(name, sizeof name, "frame%04zu_pre.pgm", probe.frame);
      const std::string pre_path = out_dir + "/" + name;
      write_pgm(pre_path, g, g, row_as_map(pre, q, ref_cells));
      std::snprintf(name, sizeof name, "frame%04zu_post.pgm", probe.frame);
      const std::string post_path = out_dir + "/" + name;
      write_pgm(post_path, g, g, row_as_map(post, q, ref_cells));
      std::snprintf(name, sizeof name, "frame%04zu_patch.ppm", probe.frame);
      const std::string patch_path = out_dir + "/" + name;
      write_ppm(patch_path, probe.search_patch);
      report.files.push_back(pre_path);
      report.files.push_back(post_path);
      report.files.push_back(patch_path);
    }
    report.probes.push_back(r);
  }
  if (!report.probes.empty())
    report.fraction_improved = static_cast<double>(improved) /
                               static_cast<double>(report.probes.size());
  return report;
}

}  // namespace corrtrack
