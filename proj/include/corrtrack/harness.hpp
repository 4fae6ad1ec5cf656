#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "corrtrack/attention.hpp"
#include "corrtrack/boxes.hpp"
#include "corrtrack/model.hpp"
#include "corrtrack/patch.hpp"
#include "corrtrack/random.hpp"
#include "corrtrack/synthetic.hpp"

namespace corrtrack {

/// How often model.encode ran, and for what. An admitted reference reuses the
/// search encode of its frame — the event lands in both tallies — so
/// encode_calls stays at 1 (init) + search_encodes no matter how many frames
/// are admitted, while reference_encodes reads 1 + admitted.
struct EncodeStats {
  std::size_t reference_encodes = 0;  // encodes whose output entered the cache
  std::size_t search_encodes = 0;
  std::size_t encode_calls = 0;  // every model.encode invocation
};

struct FrameRecord {
  std::size_t frame = 0;
  Box pred;                 // frame pixels
  double iou_score = 0.0;   // raw overlap-head output
  bool admitted = false;    // frame 0: the init itself
  double cell_size = 0.0;   // frame px per feature cell at this frame's crop
  double wall_ms = 0.0;
  double gt_iou = 0.0;
  double center_err_cells = 0.0;
};

/// One probed frame's correlation traces plus the geometry needed to read
/// them: which reference cells are target, and where the target really is
/// in the search patch.
struct TraceProbe {
  std::size_t frame = 0;
  std::vector<TraceRecord> records;
  Box long_ref_box;   // patch-normalized, the frame-0 reference annotation
  Box gt_search_box;  // patch-normalized true target in this search patch
  Image search_patch;
};

struct TrackOptions {
  std::uint64_t seed = 0;             // only used by random ensemble sampling
  std::size_t ensemble_override = 0;  // 0: use the config's ensemble_size
  std::size_t trace_every = 0;        // probe cross-attention every n frames
  std::vector<TraceProbe>* probes = nullptr;
};

struct TrackRun {
  std::vector<FrameRecord> records;  // one per frame, frame 0 included
  EncodeStats encodes;
  std::size_t admitted_count() const;
};

/// Online tracking over a rendered sequence: frame 0 initializes the
/// reference cache from ground truth; every later frame is cropped around
/// the previous prediction, encoded once, decoded against the sampled
/// references, and offered to the cache under the IoU gate.
TrackRun track_sequence(const TrackerModel& model, const SyntheticSequence& seq,
                        const TrackOptions& opts = {});

// --- training ---

struct TrainOptions {
  std::size_t steps = 300;
  std::size_t batch = 2;
  std::size_t num_sequences = 20;
  SyntheticSpec spec;  // spec.frames is the per-sequence length
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> losses;  // one per step
  double initial_loss = 0.0;   // mean of the first few steps
  double final_loss = 0.0;     // mean of the last few steps
  long diverged_at = -1;       // step index on a non-finite abort, else -1
  std::string diagnostics;
};

/// One optimization sample: exact long-term reference from frame i_long, a
/// short-term reference cropped around a jittered box of frame i_short, and
/// a jittered search crop of frame i_search; returns the combined corner +
/// overlap loss. Deterministic given the rng state, so a caller that
/// re-seeds the rng gets a pure function of the model parameters.
Tensor triplet_loss(const TrackerModel& model, const SyntheticSequence& seq,
                    std::size_t i_long, std::size_t i_short,
                    std::size_t i_search, Rng& rng);

/// Toy optimization on synthetic sequences: each step samples reference /
/// search triplets (search frame strictly newest), jitters the reference
/// and search crops, and descends the corner + overlap loss with AdamW.
/// Deterministic for a fixed seed. A non-finite loss aborts the run and is
/// reported, not swallowed.
TrainReport train_toy(TrackerModel& model, const TrainOptions& opts);

// --- metrics ---

struct Metrics {
  double mean_iou = 0.0;
  double success = 0.0;    // fraction of frames with IoU > theta
  double precision = 0.0;  // fraction with center error within cell_thresh
  std::size_t frames = 0;
};

/// Scores predictions against ground truth. The precision radius is
/// cell_thresh feature cells, using each record's own cell size so the
/// radius tracks the crop scale. Mismatched lengths are an error.
Metrics compute_metrics(const std::vector<FrameRecord>& records,
                        const std::vector<Box>& gt, double theta = 0.5,
                        double cell_thresh = 2.0);

// --- run/gt record files (structured text) ---

void write_run(const std::string& path, const TrackRun& run);
TrackRun read_run(const std::string& path);
void write_gt(const std::string& path, const std::vector<Box>& gt);
std::vector<Box> read_gt(const std::string& path);

}  // namespace corrtrack
