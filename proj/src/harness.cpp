#include "corrtrack/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "corrtrack/losses.hpp"
#include "corrtrack/memory.hpp"
#include "corrtrack/ops.hpp"
#include "corrtrack/optimizer.hpp"
#include "corrtrack/random.hpp"

namespace corrtrack {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Box ordered_unit_box(const BoxT& b) {
  const Box raw = boxt_value(b);
  return clip_unit(Box{std::min(raw.x0, raw.x1), std::min(raw.y0, raw.y1),
                       std::max(raw.x0, raw.x1), std::max(raw.y0, raw.y1)});
}

// Keeps the next crop well-posed no matter how far the prediction drifted:
// clamp into the frame and enforce a minimum extent.
Box sanitize_for_crop(Box b, double w, double h) {
  constexpr double kMinSide = 4.0;
  b.x0 = std::clamp(b.x0, 0.0, w);
  b.x1 = std::clamp(b.x1, 0.0, w);
  b.y0 = std::clamp(b.y0, 0.0, h);
  b.y1 = std::clamp(b.y1, 0.0, h);
  if (b.width() < kMinSide) {
    const double cx = std::clamp(b.cx(), kMinSide / 2, w - kMinSide / 2);
    b.x0 = cx - kMinSide / 2;
    b.x1 = cx + kMinSide / 2;
  }
  if (b.height() < kMinSide) {
    const double cy = std::clamp(b.cy(), kMinSide / 2, h - kMinSide / 2);
    b.y0 = cy - kMinSide / 2;
    b.y1 = cy + kMinSide / 2;
  }
  return b;
}

Reference make_reference(const TrackerModel& model, const Tensor& feats,
                         const Box& patch_box) {
  return Reference{feats, model.assign_embeddings(patch_box), patch_box};
}

// The crop is sized by the previous estimate, so size errors feed back on
// themselves: a corner head that resolves ~0.2 cells on the coarse grid
// over-sizes by a few percent per frame and the loop zooms out to nothing
// within a couple dozen frames. Centers must pass through at full rate or
// motion is lost, but size changes get a damped update plus a hard per-frame
// bound. True scale changes are slow, so the lag costs little.
constexpr double kSizeBlend = 0.35;    // fraction of log-size step taken
constexpr double kMaxSizeStep = 1.25;  // per-frame growth/shrink bound

Box damped_crop_box(const Box& pred, const Box& prev_crop) {
  auto blend = [](double next, double prev) {
    if (next <= 0.0 || prev <= 0.0) return prev;
    double ratio = std::pow(next / prev, kSizeBlend);
    ratio = std::clamp(ratio, 1.0 / kMaxSizeStep, kMaxSizeStep);
    return prev * ratio;
  };
  return Box::from_center(pred.cx(), pred.cy(),
                          blend(pred.width(), prev_crop.width()),
                          blend(pred.height(), prev_crop.height()));
}

double center_error_cells(const Box& pred, const Box& gt, double cell) {
  return std::hypot(pred.cx() - gt.cx(), pred.cy() - gt.cy()) / cell;
}

}  // namespace

std::size_t TrackRun::admitted_count() const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].admitted) ++n;
  return n;
}

TrackRun track_sequence(const TrackerModel& model, const SyntheticSequence& seq,
                        const TrackOptions& opts) {
  const TrackerConfig& cfg = model.config();
  if (seq.frames.empty())
    throw std::invalid_argument("track_sequence: empty sequence");
  if (seq.gt.size() != seq.frames.size())
    throw std::invalid_argument("track_sequence: gt/frame count mismatch");

  const std::size_t k =
      opts.ensemble_override ? opts.ensemble_override : cfg.ensemble_size;
  const double grid = static_cast<double>(cfg.grid_size());
  Rng ens_rng(opts.seed);
  TrackRun run;

  // Frame 0: the annotated frame becomes both the long-term anchor and the
  // first short-term entry.
  auto t0 = Clock::now();
  CropResult crop0 = crop_patch(seq.frames[0], seq.gt[0],
                                cfg.crop_area_factor, cfg.search_resolution);
  const Tensor feats0 =
      model.encode(model.stem(image_to_tensor(crop0.patch)));
  ++run.encodes.encode_calls;
  ++run.encodes.reference_encodes;
  const Box box0 = clip_unit(crop0.transform.box_to_patch(seq.gt[0]));
  MemoryCache cache(MemoryEntry{0, make_reference(model, feats0, box0), 1.0},
                    cfg.cache_capacity);
  run.records.push_back(FrameRecord{0, seq.gt[0], 1.0, true,
                                    crop0.transform.side / grid,
                                    ms_since(t0), 1.0, 0.0});

  Box prev = seq.gt[0];
  const double fw = static_cast<double>(seq.frames[0].width);
  const double fh = static_cast<double>(seq.frames[0].height);
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    t0 = Clock::now();
    CropResult crop = crop_patch(seq.frames[t], prev, cfg.crop_area_factor,
                                 cfg.search_resolution);
    const Tensor feats =
        model.encode(model.stem(image_to_tensor(crop.patch)));
    ++run.encodes.encode_calls;
    ++run.encodes.search_encodes;

    const std::vector<MemoryEntry> sampled =
        cfg.random_ensemble ? cache.sample_ensemble_random(k, ens_rng)
                            : cache.sample_ensemble(k);
    std::vector<Reference> ensemble;
    ensemble.reserve(sampled.size());
    for (const MemoryEntry& e : sampled) ensemble.push_back(e.ref);

    Tensor dec;
    const bool probed =
        opts.trace_every != 0 && opts.probes && t % opts.trace_every == 0;
    if (probed) {
      TraceProbe probe;
      probe.frame = t;
      {
        CorrelationTraceScope scope;
        dec = model.decode(feats, cache.long_term().ref, ensemble);
        probe.records = scope.records();
      }
      probe.long_ref_box = cache.long_term().ref.box;
      probe.gt_search_box = crop.transform.box_to_patch(seq.gt[t]);
      probe.search_patch = crop.patch;
      opts.probes->push_back(std::move(probe));
    } else {
      dec = model.decode(feats, cache.long_term().ref, ensemble);
    }

    const CornerOutput corner = model.corner_head(dec);
    const Box patch_box = ordered_unit_box(corner.box);
    const double score = model.iou_head(dec, patch_box).value();
    const Box frame_box = crop.transform.box_to_frame(patch_box);

    const bool admitted = cache.maybe_admit(
        MemoryEntry{t, make_reference(model, feats, patch_box), score}, score,
        cfg.update_threshold);
    if (admitted) {
      // The admitted reference is this frame's search encode, shared, so the
      // event counts in both tallies but encode_calls stays put.
      ++run.encodes.reference_encodes;
      if (!cache.entries().back().ref.features.same_storage(feats))
        throw std::logic_error(
            "track_sequence: cache entry must reuse the search features");
    }

    const double cell = crop.transform.side / grid;
    run.records.push_back(FrameRecord{
        t, frame_box, score, admitted, cell, ms_since(t0),
        box_iou(frame_box, seq.gt[t]),
        center_error_cells(frame_box, seq.gt[t], cell)});
    prev = sanitize_for_crop(damped_crop_box(frame_box, prev), fw, fh);
  }
  return run;
}

namespace {

// Jitter in frame pixels: Gaussian center shift scaled by the box extent,
// log-normal size wobble. Simulates the imperfect box a tracker would
// actually crop around.
Box jitter_frame_box(const Box& b, Rng& rng, double sigma_center,
                     double sigma_scale) {
  const double cx = b.cx() + sigma_center * b.width() * rng.normal();
  const double cy = b.cy() + sigma_center * b.height() * rng.normal();
  const double w = b.width() * std::exp(sigma_scale * rng.normal());
  const double h = b.height() * std::exp(sigma_scale * rng.normal());
  return Box::from_center(cx, cy, w, h);
}

Reference encoded_reference(const TrackerModel& model, const Image& frame,
                            const Box& crop_box, const Box& annotated) {
  const TrackerConfig& cfg = model.config();
  CropResult crop = crop_patch(frame, crop_box, cfg.crop_area_factor,
                               cfg.search_resolution);
  const Tensor feats = model.encode(model.stem(image_to_tensor(crop.patch)));
  const Box patch_box = clip_unit(crop.transform.box_to_patch(annotated));
  return make_reference(model, feats, patch_box);
}

// Crop-placement jitter. Much larger than the candidate jitter used for
// the overlap head: the crop simulates tracking from the previous frame's
// imperfect prediction, so it must cover several cells of displacement and
// real scale error, or the box regressor collapses onto a centered prior
// and cannot follow motion.
constexpr double kCropCenterJitter = 0.4;
constexpr double kCropScaleJitter = 0.25;

}  // namespace

Tensor triplet_loss(const TrackerModel& model, const SyntheticSequence& seq,
                    std::size_t i_long, std::size_t i_short,
                    std::size_t i_search, Rng& rng) {
  const TrackerConfig& cfg = model.config();

  // Long-term reference: exact annotated crop. Short-term reference: the
  // crop is taken around a jittered box (an imperfect tracked position)
  // but annotated with the true target location.
  const Reference ref_long = encoded_reference(
      model, seq.frames[i_long], seq.gt[i_long], seq.gt[i_long]);
  const Box short_crop = jitter_frame_box(seq.gt[i_short], rng,
                                          kCropCenterJitter, kCropScaleJitter);
  const Reference ref_short = encoded_reference(
      model, seq.frames[i_short], short_crop, seq.gt[i_short]);

  // Search crop around a jittered box, so the target sits off-center the
  // way it does when tracking from the previous frame's prediction.
  const Box search_crop = jitter_frame_box(seq.gt[i_search], rng,
                                           kCropCenterJitter, kCropScaleJitter);
  CropResult crop = crop_patch(seq.frames[i_search], search_crop,
                               cfg.crop_area_factor, cfg.search_resolution);
  const Tensor feats = model.encode(model.stem(image_to_tensor(crop.patch)));
  const Box label = clip_unit(crop.transform.box_to_patch(seq.gt[i_search]));

  const Tensor dec = model.decode(feats, ref_long, {ref_short});
  const CornerOutput corner = model.corner_head(dec);
  const BoxT gt_t = boxt_const(label);
  Tensor loss =
      add(scale(giou_loss(corner.box, gt_t), cfg.loss.lambda_giou),
          scale(l1_box(corner.box, gt_t), cfg.loss.lambda_l1));

  // Overlap-head regression: jittered near-hits plus displaced candidates.
  // Without the misses the head only ever sees boxes near the target and
  // scores everything alike, which makes the admission gate meaningless.
  std::vector<JitteredBox> cands = sample_jittered_boxes(
      label, cfg.iou_samples, rng, cfg.jitter_center, cfg.jitter_scale);
  const std::size_t negatives = (cfg.iou_samples + 1) / 2;
  for (std::size_t i = 0; i < negatives; ++i) {
    const double w = label.width() * std::exp(cfg.jitter_scale * rng.normal());
    const double h = label.height() * std::exp(cfg.jitter_scale * rng.normal());
    const Box miss = clip_unit(Box::from_center(
        rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), w, h));
    if (miss.area() <= 0.0) continue;
    cands.push_back(JitteredBox{miss, box_iou(miss, label)});
  }
  if (!cands.empty()) {
    Tensor mse;
    for (const JitteredBox& cand : cands) {
      const Tensor d = add_const(model.iou_head(dec, cand.box), -cand.iou);
      const Tensor sq = mul(d, d);
      mse = mse.defined() ? add(mse, sq) : sq;
    }
    loss = add(loss, scale(mse, cfg.loss.lambda_mse /
                                    static_cast<double>(cands.size())));
  }
  return loss;
}

namespace {

double mean_of(const std::vector<double>& v, std::size_t begin,
               std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - begin);
}

}  // namespace

TrainReport train_toy(TrackerModel& model, const TrainOptions& opts) {
  if (opts.steps == 0 || opts.batch == 0 || opts.num_sequences == 0)
    throw std::invalid_argument("train_toy: steps, batch, sequences all >= 1");
  if (opts.spec.frames < 2)
    throw std::invalid_argument("train_toy: sequences need >= 2 frames");

  const TrackerConfig& cfg = model.config();
  Rng rng(opts.seed);
  std::vector<SyntheticSequence> data;
  data.reserve(opts.num_sequences);
  for (std::size_t i = 0; i < opts.num_sequences; ++i) {
    Rng fork = rng.fork(i);
    data.push_back(make_sequence(opts.spec, fork.integer(UINT64_MAX)));
  }

  AdamWConfig ocfg;
  ocfg.lr = cfg.learning_rate;
  ocfg.weight_decay = cfg.weight_decay;
  ocfg.stem_lr_scale = cfg.stem_lr_scale;
  AdamW opt(model.params(), ocfg);

  TrainReport report;
  report.losses.reserve(opts.steps);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    try {
      GradientTape tape;
      Tensor total;
      for (std::size_t b = 0; b < opts.batch; ++b) {
        const std::size_t s = rng.integer(opts.num_sequences);
        const std::size_t len = data[s].frames.size();
        const std::size_t i_search = 1 + rng.integer(len - 1);
        const std::size_t i_long = rng.integer(i_search);
        const std::size_t i_short = rng.integer(i_search);
        const Tensor l = triplet_loss(model, data[s], i_long, i_short,
                                      i_search, rng);
        total = total.defined() ? add(total, l) : l;
      }
      const Tensor loss =
          scale(total, 1.0 / static_cast<double>(opts.batch));
      report.losses.push_back(loss.value());
      tape.backward(loss);
      opt.step(tape);
    } catch (const NumericError& e) {
      report.diverged_at = static_cast<long>(step);
      report.diagnostics = e.what();
      break;
    }
  }

  if (!report.losses.empty()) {
    const std::size_t head = std::min<std::size_t>(5, report.losses.size());
    report.initial_loss = mean_of(report.losses, 0, head);
    report.final_loss =
        mean_of(report.losses, report.losses.size() - head,
                report.losses.size());
  }
  return report;
}

Metrics compute_metrics(const std::vector<FrameRecord>& records,
                        const std::vector<Box>& gt, double theta,
                        double cell_thresh) {
  if (records.size() != gt.size())
    throw std::invalid_argument("compute_metrics: length mismatch");
  if (records.empty())
    throw std::invalid_argument("compute_metrics: empty run");
  Metrics m;
  m.frames = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double iou = box_iou(records[i].pred, gt[i]);
    m.mean_iou += iou;
    if (iou > theta) m.success += 1.0;
    const double cell = records[i].cell_size > 0.0 ? records[i].cell_size : 1.0;
    if (center_error_cells(records[i].pred, gt[i], cell) < cell_thresh)
      m.precision += 1.0;
  }
  const double n = static_cast<double>(m.frames);
  m.mean_iou /= n;
  m.success /= n;
  m.precision /= n;
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_record(const std::string& path, std::size_t line) {
  throw std::runtime_error(path + ": malformed record at line " +
                           std::to_string(line));
}

}  // namespace

void write_run(const std::string& path, const TrackRun& run) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "# corrtrack track run v1\n";
  out << "frames " << run.records.size() << "\n";
  out << "encodes " << run.encodes.reference_encodes << " "
      << run.encodes.search_encodes << " " << run.encodes.encode_calls
      << "\n";
  for (const FrameRecord& r : run.records) {
    out << "frame " << r.frame << " pred " << fmt(r.pred.x0) << " "
        << fmt(r.pred.y0) << " " << fmt(r.pred.x1) << " " << fmt(r.pred.y1)
        << " score " << fmt(r.iou_score) << " admitted " << (r.admitted ? 1 : 0)
        << " cell " << fmt(r.cell_size) << " wall_ms " << fmt(r.wall_ms)
        << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrackRun read_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  TrackRun run;
  std::size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frames") {
      if (!(ls >> expected)) bad_record(path, lineno);
      have_header = true;
    } else if (key == "encodes") {
      if (!(ls >> run.encodes.reference_encodes >> run.encodes.search_encodes >>
            run.encodes.encode_calls))
        bad_record(path, lineno);
    } else if (key == "frame") {
      FrameRecord r;
      std::string tag;
      int admitted = 0;
      if (!(ls >> r.frame >> tag) || tag != "pred") bad_record(path, lineno);
      if (!(ls >> r.pred.x0 >> r.pred.y0 >> r.pred.x1 >> r.pred.y1))
        bad_record(path, lineno);
      if (!(ls >> tag) || tag != "score" || !(ls >> r.iou_score))
        bad_record(path, lineno);
      if (!(ls >> tag) || tag != "admitted" || !(ls >> admitted))
        bad_record(path, lineno);
      if (!(ls >> tag) || tag != "cell" || !(ls >> r.cell_size))
        bad_record(path, lineno);
      if (!(ls >> tag) || tag != "wall_ms" || !(ls >> r.wall_ms))
        bad_record(path, lineno);
      r.admitted = admitted != 0;
      run.records.push_back(r);
    } else {
      bad_record(path, lineno);
    }
  }
  if (!have_header || run.records.size() != expected)
    throw std::runtime_error(path + ": frame count does not match header");
  return run;
}

void write_gt(const std::string& path, const std::vector<Box>& gt) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "# corrtrack gt v1\n";
  out << "frames " << gt.size() << "\n";
  for (std::size_t i = 0; i < gt.size(); ++i)
    out << "frame " << i << " box " << fmt(gt[i].x0) << " " << fmt(gt[i].y0)
        << " " << fmt(gt[i].x1) << " " << fmt(gt[i].y1) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Box> read_gt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Box> gt;
  std::size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frames") {
      if (!(ls >> expected)) bad_record(path, lineno);
      have_header = true;
    } else if (key == "frame") {
      std::size_t idx = 0;
      std::string tag;
      Box b;
      if (!(ls >> idx >> tag) || tag != "box") bad_record(path, lineno);
      if (!(ls >> b.x0 >> b.y0 >> b.x1 >> b.y1)) bad_record(path, lineno);
      gt.push_back(b);
    } else {
      bad_record(path, lineno);
    }
  }
  if (!have_header || gt.size() != expected)
    throw std::runtime_error(path + ": frame count does not match header");
  return gt;
}

}  // namespace corrtrack
