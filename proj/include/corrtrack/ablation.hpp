#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrtrack/config.hpp"
#include "corrtrack/harness.hpp"
#include "corrtrack/model.hpp"

namespace corrtrack {

/// The study grid: (a) no embeddings and no correlation refinement,
/// (b) background masked out, (c) target-background embeddings,
/// (d) no short-term branch, (e) one merged branch over all references,
/// (f) refinement in self-attention only, (g) in cross-attention only,
/// (h) refinement without inner positional encoding, (i) refinement in
/// both, plus "conv" (the convolutional bottleneck substitute).
/// Variants (a)-(e) run without refinement so the reference-handling
/// comparisons isolate that factor; (f)-(i) and "conv" all keep
/// embeddings on.
std::vector<std::string> ablation_variant_names();

/// Maps a variant name onto config flags. Unknown names are an error.
TrackerConfig apply_variant(TrackerConfig base, const std::string& name);

/// Keys whose values differ between the two configs, by canonical text
/// form. Used to assert each variant changes exactly its documented flags.
std::vector<std::string> config_diff(const TrackerConfig& a,
                                     const TrackerConfig& b);

struct AblationOptions {
  std::size_t train_sequences = 20;
  std::size_t train_frames = 30;
  std::size_t steps = 300;
  std::size_t batch = 2;
  std::size_t eval_sequences = 20;
  std::size_t eval_frames = 40;
  std::uint64_t seed = 7;      // shared by every variant: paired comparison
  std::size_t workers = 0;     // 0: CORRTRACK_WORKERS env or hardware
  SyntheticSpec spec;          // frame geometry/clutter knobs
};

TrainOptions make_train_options(const AblationOptions& opts);

/// Worker count resolution: explicit > CORRTRACK_WORKERS env > hardware.
std::size_t resolve_workers(std::size_t requested);

/// Tracks the shared evaluation set (seeds derived from opts.seed) and
/// returns one mean IoU per sequence, computed over the tracked frames
/// (frame 0 is the given annotation, not a prediction). Sequences run in
/// a parallel worker pool; results are ordered by sequence, so the output
/// is independent of the worker count.
std::vector<double> evaluate_model(const TrackerModel& model,
                                   const AblationOptions& opts,
                                   std::size_t ensemble_override = 0);

struct VariantResult {
  std::string name;
  double mean_iou = 0.0;
  std::vector<double> per_sequence;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  TrainReport train;
};

/// Trains and evaluates one variant under the shared seeds.
VariantResult run_variant(const std::string& name, const TrackerConfig& base,
                          const AblationOptions& opts);

std::vector<VariantResult> run_ablation(const std::vector<std::string>& names,
                                        const TrackerConfig& base,
                                        const AblationOptions& opts);

/// Mean over per-sequence paired differences (a - b) and its standard
/// error; the inputs must be index-aligned (same evaluation seeds).
struct PairedDiff {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean difference
};
PairedDiff paired_diff(const std::vector<double>& a,
                       const std::vector<double>& b);

/// One expected ordering between two trained variants, evaluated on the
/// paired per-sequence scores. `ok` means the ordering held on the mean;
/// for the refinement-vs-conv comparison a small shortfall inside the
/// paired noise band (2 standard errors) also passes.
struct DirectionCheck {
  std::string label;
  std::string hi, lo;  // variant expected to win / to trail
  double mean_hi = 0.0, mean_lo = 0.0;
  PairedDiff diff;            // hi - lo
  double effect_size = 0.0;   // mean diff over the sd of paired diffs
  bool noise_ok = false;      // this check may pass within the noise band
  bool ok = false;
};

/// Builds the ordering checks supported by the available results:
/// c >= b (context kept, not masked), c >= d (short-term branch),
/// i >= c (correlation refinement), i >= conv (learned inner attention
/// against the fixed local aggregation; within-noise passes).
std::vector<DirectionCheck> direction_checks(
    const std::vector<VariantResult>& results);

std::string direction_report(const std::vector<DirectionCheck>& checks);

struct SweepPoint {
  std::size_t k = 0;
  double mean_iou = 0.0;
};

/// Re-tracks the evaluation set with different ensemble sizes. The model
/// is unchanged: the keys-axis refinement is size-agnostic, so one trained
/// model serves every k.
std::vector<SweepPoint> ensemble_sweep(const TrackerModel& model,
                                       const std::vector<std::size_t>& ks,
                                       const AblationOptions& opts);

std::string ablation_table(const std::vector<VariantResult>& results);

// --- correlation-map probing ---

struct CorrProbeResult {
  std::size_t frame = 0;
  double pre_mass = 0.0;   // softmaxed weight on true-target reference cells
  double post_mass = 0.0;  // same, after refinement
};

struct CorrDumpReport {
  std::vector<CorrProbeResult> probes;
  double fraction_improved = 0.0;  // probes with post_mass >= pre_mass
  std::vector<std::string> files;
};

/// Tracks the sequence, capturing the first decoder block's cross-attention
/// correlation logits every probe_every frames. For each probe it measures
/// how much softmax weight the true-target query cells place on the
/// true-target reference cells, before and after refinement, and (when
/// out_dir is nonempty) writes the center query's pre/post maps as
/// graymaps plus the search patch as a pixmap.
CorrDumpReport dump_correlations(const TrackerModel& model,
                                 const SyntheticSequence& seq,
                                 std::size_t probe_every,
                                 const std::string& out_dir);

}  // namespace corrtrack
