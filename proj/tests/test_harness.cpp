#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "corrtrack/harness.hpp"
#include "corrtrack/model.hpp"
#include "corrtrack/synthetic.hpp"

using namespace corrtrack;

namespace {

SyntheticSpec small_spec(std::size_t frames) {
  SyntheticSpec spec;
  spec.frames = frames;
  spec.size = 64;
  spec.target_fraction = 0.2;
  spec.distractors = 1;
  return spec;
}

TrackerConfig tiny_cfg() {
  TrackerConfig cfg = TrackerConfig::tiny();
  cfg.crop_area_factor = 9.0;
  return cfg;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool same_records(const std::vector<FrameRecord>& a,
                  const std::vector<FrameRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].pred.x0 != b[i].pred.x0 || a[i].pred.y1 != b[i].pred.y1)
      return false;
    if (a[i].iou_score != b[i].iou_score) return false;
    if (a[i].admitted != b[i].admitted) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("tracking counts one encode per frame and reuses admitted features") {
  TrackerConfig cfg = tiny_cfg();
  cfg.update_threshold = 0.0;  // untrained scores still clear a zero gate often
  TrackerModel model(cfg, 11);
  const SyntheticSequence seq = make_sequence(small_spec(9), 21);
  const TrackRun run = track_sequence(model, seq);

  REQUIRE(run.records.size() == 9);
  CHECK(run.encodes.search_encodes == 8);
  CHECK(run.encodes.encode_calls == 9);  // 1 init + 8 searches, never more
  // an admitted frame's encode serves as both search and reference
  CHECK(run.encodes.reference_encodes == 1 + run.admitted_count());
  CHECK(run.records[0].admitted);
  CHECK(run.records[0].gt_iou == 1.0);
}

TEST_CASE("an unreachable admission gate degenerates to the initial reference") {
  TrackerConfig cfg = tiny_cfg();
  cfg.update_threshold = 1.01;  // no score can exceed it
  TrackerModel model(cfg, 11);
  const SyntheticSequence seq = make_sequence(small_spec(7), 3);
  const TrackRun run = track_sequence(model, seq);
  CHECK(run.admitted_count() == 0);
  CHECK(run.encodes.reference_encodes == 1);
  CHECK(run.encodes.search_encodes == 6);
}

TEST_CASE("tracking is deterministic") {
  TrackerModel model(tiny_cfg(), 5);
  const SyntheticSequence seq = make_sequence(small_spec(6), 9);
  const TrackRun a = track_sequence(model, seq);
  const TrackRun b = track_sequence(model, seq);
  CHECK(same_records(a.records, b.records));
}

TEST_CASE("mismatched sequences are rejected") {
  TrackerModel model(tiny_cfg(), 5);
  SyntheticSequence seq = make_sequence(small_spec(3), 9);
  seq.gt.pop_back();
  CHECK_THROWS_AS(track_sequence(model, seq), std::invalid_argument);
  seq.frames.clear();
  seq.gt.clear();
  CHECK_THROWS_AS(track_sequence(model, seq), std::invalid_argument);
}

TEST_CASE("run and gt records survive the text files") {
  TrackerModel model(tiny_cfg(), 5);
  const SyntheticSequence seq = make_sequence(small_spec(4), 13);
  const TrackRun run = track_sequence(model, seq);

  const std::string run_path = temp_path("corrtrack_run.txt");
  const std::string gt_path = temp_path("corrtrack_gt.txt");
  write_run(run_path, run);
  write_gt(gt_path, seq.gt);
  const TrackRun back = read_run(run_path);
  const std::vector<Box> gt_back = read_gt(gt_path);

  REQUIRE(back.records.size() == run.records.size());
  CHECK(back.encodes.search_encodes == run.encodes.search_encodes);
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    CHECK(back.records[i].pred.x0 == run.records[i].pred.x0);
    CHECK(back.records[i].iou_score == run.records[i].iou_score);
    CHECK(back.records[i].cell_size == run.records[i].cell_size);
    CHECK(back.records[i].admitted == run.records[i].admitted);
  }
  REQUIRE(gt_back.size() == seq.gt.size());
  CHECK(gt_back[2].x1 == seq.gt[2].x1);

  // metrics computed from the files agree with in-memory metrics
  const Metrics direct = compute_metrics(run.records, seq.gt);
  const Metrics via_files = compute_metrics(back.records, gt_back);
  CHECK(direct.mean_iou == doctest::Approx(via_files.mean_iou).epsilon(1e-15));

  std::remove(run_path.c_str());
  std::remove(gt_path.c_str());
}

TEST_CASE("malformed record files are rejected") {
  const std::string path = temp_path("corrtrack_bad_run.txt");
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("frames 2\nframe 0 pred 0 0 1 1 score 0.5\n", f);  // short row
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_run(path), std::runtime_error);
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs(
        "frames 2\n"
        "frame 0 box 0 0 1 1\n",  // gt row in a run file
        f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_run(path), std::runtime_error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_run("/nonexistent/run.txt"), std::runtime_error);
}

TEST_CASE("metrics match hand-computed values") {
  std::vector<FrameRecord> records(3);
  std::vector<Box> gt(3);
  // frame 0: exact hit
  records[0].pred = Box{0, 0, 10, 10};
  gt[0] = Box{0, 0, 10, 10};
  // frame 1: half-width overlap -> IoU 1/3
  records[1].pred = Box{0, 0, 5, 10};
  gt[1] = Box{2.5, 0, 7.5, 10};
  // frame 2: disjoint
  records[2].pred = Box{0, 0, 2, 2};
  gt[2] = Box{20, 20, 30, 30};
  for (auto& r : records) r.cell_size = 2.0;

  const Metrics m = compute_metrics(records, gt, 0.5, 2.0);
  CHECK(m.mean_iou == doctest::Approx((1.0 + 1.0 / 3.0 + 0.0) / 3.0));
  CHECK(m.success == doctest::Approx(1.0 / 3.0));  // only the exact hit
  // centers: d0 = 0, d1 = 2.5 px, d2 = far; radius = 2 cells * 2 px = 4 px
  CHECK(m.precision == doctest::Approx(2.0 / 3.0));

  SUBCASE("perfect run scores 1 everywhere") {
    const Metrics perfect =
        compute_metrics({records[0]}, {gt[0]}, 0.5, 2.0);
    CHECK(perfect.mean_iou == 1.0);
    CHECK(perfect.success == 1.0);
    CHECK(perfect.precision == 1.0);
  }
  SUBCASE("all-miss run scores 0") {
    const Metrics miss = compute_metrics({records[2]}, {gt[2]}, 0.5, 2.0);
    CHECK(miss.mean_iou == 0.0);
    CHECK(miss.success == 0.0);
  }
  SUBCASE("length mismatch is an error") {
    CHECK_THROWS_AS(compute_metrics(records, {gt[0]}), std::invalid_argument);
    CHECK_THROWS_AS(compute_metrics({}, {}), std::invalid_argument);
  }
}

TEST_CASE("toy training is deterministic and honors a zero rate") {
  TrainOptions opt;
  opt.steps = 4;
  opt.batch = 1;
  opt.num_sequences = 2;
  opt.spec = small_spec(5);
  opt.seed = 3;

  SUBCASE("fixed seed, bit-identical curve") {
    TrackerModel a(tiny_cfg(), 9);
    TrackerModel b(tiny_cfg(), 9);
    const TrainReport ra = train_toy(a, opt);
    const TrainReport rb = train_toy(b, opt);
    CHECK(ra.losses == rb.losses);
    CHECK(ra.diverged_at == -1);
  }

  SUBCASE("zero learning rate leaves every parameter bit-identical") {
    TrackerConfig cfg = tiny_cfg();
    cfg.learning_rate = 0.0;
    TrackerModel model(cfg, 9);
    std::vector<std::vector<double>> before;
    for (const auto& [name, t] : model.params().entries())
      before.push_back(t.values());
    train_toy(model, opt);
    std::size_t i = 0;
    bool all_same = true;
    for (const auto& [name, t] : model.params().entries())
      all_same = all_same && t.values() == before[i++];
    CHECK(all_same);
  }

  SUBCASE("bad options are rejected") {
    TrackerModel model(tiny_cfg(), 9);
    TrainOptions bad = opt;
    bad.steps = 0;
    CHECK_THROWS_AS(train_toy(model, bad), std::invalid_argument);
    bad = opt;
    bad.spec.frames = 1;
    CHECK_THROWS_AS(train_toy(model, bad), std::invalid_argument);
  }
}
