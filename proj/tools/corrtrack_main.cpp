// Command-line front end: train on synthetic sequences, track them, score
// runs, probe gradients and correlation maps, and reproduce the ablation
// study. Everything is seeded explicitly; CORRTRACK_WORKERS (or --workers)
// bounds the evaluation pool.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "corrtrack/ablation.hpp"
#include "corrtrack/config.hpp"
#include "corrtrack/gradcheck.hpp"
#include "corrtrack/harness.hpp"
#include "corrtrack/model.hpp"
#include "corrtrack/synthetic.hpp"

using namespace corrtrack;

namespace {

// The stock desk profile keeps the paper's crop factor, which leaves the
// target under two feature cells wide; the harness default tightens the
// crop so the target spans enough grid to regress against.
TrackerConfig harness_default_config() {
  TrackerConfig cfg = TrackerConfig::desk();
  cfg.crop_area_factor = 9.0;
  return cfg;
}

TrackerConfig load_or_default(const std::string& path) {
  if (path.empty()) return harness_default_config();
  return load_config(path);
}

SyntheticSpec spec_from(std::size_t frames, std::size_t size,
                        std::size_t distractors) {
  SyntheticSpec spec;
  spec.frames = frames;
  spec.size = size;
  spec.distractors = distractors;
  return spec;
}

void write_lines(const std::string& path, const std::vector<double>& values) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[40];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << "\n";
  }
}

std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int run_gradcheck(const TrackerConfig& base, std::uint64_t seed, double eps,
                  double tol, std::size_t max_entries) {
  // Gradients are checked on the tiny profile: the full model forward is
  // re-run twice per probed entry.
  TrackerConfig cfg = TrackerConfig::tiny();
  cfg.crop_area_factor = base.crop_area_factor;
  TrackerModel model(cfg, seed);

  SyntheticSpec spec;
  spec.frames = 3;
  spec.size = 48;
  spec.distractors = 1;
  const SyntheticSequence seq = make_sequence(spec, seed + 1);

  const auto forward = [&]() {
    Rng rng(seed + 2);  // fresh identical stream per call: pure in the params
    return triplet_loss(model, seq, 0, 1, 2, rng);
  };
  GradCheckOptions opts;
  opts.eps = eps;
  opts.max_entries_per_param = max_entries;
  const GradCheckResult res =
      check_gradients(forward, model.params().entries(), opts);
  std::cout << res.describe() << "\n";
  std::cout << (res.ok(tol) ? "OK" : "FAIL") << " (tol " << tol << ")\n";
  return res.ok(tol) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic single-object tracker workbench"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "tracker config file");

  // --- gradcheck ---
  auto* cmd_grad = app.add_subcommand(
      "gradcheck", "compare tape gradients against finite differences");
  std::uint64_t g_seed = 0;
  double g_eps = 1e-4, g_tol = 1e-3;
  std::size_t g_entries = 2;
  cmd_grad->add_option("--seed", g_seed, "model/data seed")->required();
  cmd_grad->add_option("--eps", g_eps, "central-difference step");
  cmd_grad->add_option("--tol", g_tol, "max relative error accepted");
  cmd_grad->add_option("--max-entries", g_entries,
                       "entries probed per parameter (0 = all)");

  // --- train ---
  auto* cmd_train =
      app.add_subcommand("train", "toy-train a model on synthetic sequences");
  std::uint64_t t_seed = 0;
  std::size_t t_steps = 300, t_batch = 2, t_sequences = 20, t_frames = 30;
  std::size_t t_size = 128, t_distractors = 2;
  std::string t_out, t_losses;
  cmd_train->add_option("--seed", t_seed, "model/data seed")->required();
  cmd_train->add_option("--steps", t_steps, "optimization steps");
  cmd_train->add_option("--batch", t_batch, "triplets per step");
  cmd_train->add_option("--sequences", t_sequences, "training sequences");
  cmd_train->add_option("--frames", t_frames, "frames per sequence");
  cmd_train->add_option("--size", t_size, "frame side in pixels");
  cmd_train->add_option("--distractors", t_distractors,
                        "lookalike objects per sequence");
  cmd_train->add_option("--out", t_out, "write trained parameters here");
  cmd_train->add_option("--loss-curve", t_losses,
                        "write one loss per line here");

  // --- track ---
  auto* cmd_track =
      app.add_subcommand("track", "track one synthetic sequence");
  std::uint64_t k_seed = 0, k_seq_seed = 0;
  std::size_t k_frames = 40, k_size = 128, k_distractors = 2, k_ensemble = 0;
  std::string k_params, k_run, k_gt;
  cmd_track->add_option("--seed", k_seed, "model seed")->required();
  cmd_track->add_option("--seq-seed", k_seq_seed,
                        "sequence seed (default: model seed)");
  cmd_track->add_option("--params", k_params, "trained parameter file");
  cmd_track->add_option("--frames", k_frames, "sequence length");
  cmd_track->add_option("--size", k_size, "frame side in pixels");
  cmd_track->add_option("--distractors", k_distractors, "lookalike objects");
  cmd_track->add_option("--ensemble", k_ensemble,
                        "override the short-term ensemble size");
  cmd_track->add_option("--run", k_run, "write the tracking run here");
  cmd_track->add_option("--gt", k_gt, "write ground truth here");

  // --- metrics ---
  auto* cmd_metrics =
      app.add_subcommand("metrics", "score a tracking run against ground truth");
  std::string m_run, m_gt;
  double m_theta = 0.5, m_cells = 2.0;
  cmd_metrics->add_option("--run", m_run, "run file")->required();
  cmd_metrics->add_option("--gt", m_gt, "ground-truth file")->required();
  cmd_metrics->add_option("--theta", m_theta, "success overlap threshold");
  cmd_metrics->add_option("--cells", m_cells,
                          "precision radius in feature cells");

  // --- ablate ---
  auto* cmd_ablate = app.add_subcommand(
      "ablate", "train and evaluate the variant grid under paired seeds");
  std::uint64_t a_seed = 7;
  std::string a_variants = "b,c,d,i,conv";
  std::size_t a_steps = 300, a_batch = 2, a_train_seqs = 20, a_train_frames = 30;
  std::size_t a_eval_seqs = 20, a_eval_frames = 40, a_workers = 0;
  std::string a_sweep;
  cmd_ablate->add_option("--seed", a_seed, "shared seed for every variant")
      ->required();
  cmd_ablate->add_option("--variants", a_variants,
                         "comma list from {a..i, conv}, or 'all'");
  cmd_ablate->add_option("--steps", a_steps, "training steps per variant");
  cmd_ablate->add_option("--batch", a_batch, "triplets per step");
  cmd_ablate->add_option("--train-sequences", a_train_seqs, "");
  cmd_ablate->add_option("--train-frames", a_train_frames, "");
  cmd_ablate->add_option("--eval-sequences", a_eval_seqs, "");
  cmd_ablate->add_option("--eval-frames", a_eval_frames, "");
  cmd_ablate->add_option("--workers", a_workers,
                         "evaluation threads (0: CORRTRACK_WORKERS or auto)");
  cmd_ablate->add_option("--sweep", a_sweep,
                         "also sweep ensemble sizes, e.g. 1,2,3,5");

  // --- dump-corr ---
  auto* cmd_dump = app.add_subcommand(
      "dump-corr", "write pre/post refinement correlation maps for a sequence");
  std::uint64_t d_seed = 0, d_seq_seed = 0;
  std::size_t d_every = 5, d_frames = 40, d_size = 128, d_distractors = 2;
  std::string d_params, d_out = "corr_dump";
  cmd_dump->add_option("--seed", d_seed, "model seed")->required();
  cmd_dump->add_option("--seq-seed", d_seq_seed,
                       "sequence seed (default: model seed)");
  cmd_dump->add_option("--params", d_params, "trained parameter file");
  cmd_dump->add_option("--every", d_every, "probe every n-th frame");
  cmd_dump->add_option("--frames", d_frames, "sequence length");
  cmd_dump->add_option("--size", d_size, "frame side in pixels");
  cmd_dump->add_option("--distractors", d_distractors, "lookalike objects");
  cmd_dump->add_option("--out", d_out, "output directory for the maps");

  CLI11_PARSE(app, argc, argv);

  try {
    const TrackerConfig cfg = load_or_default(config_path);

    if (cmd_grad->parsed())
      return run_gradcheck(cfg, g_seed, g_eps, g_tol, g_entries);

    if (cmd_train->parsed()) {
      TrackerModel model(cfg, t_seed);
      TrainOptions opts;
      opts.steps = t_steps;
      opts.batch = t_batch;
      opts.num_sequences = t_sequences;
      opts.spec = spec_from(t_frames, t_size, t_distractors);
      opts.seed = t_seed;
      const TrainReport report = train_toy(model, opts);
      std::printf("steps %zu  loss %.4f -> %.4f\n", report.losses.size(),
                  report.initial_loss, report.final_loss);
      if (report.diverged_at >= 0) {
        std::printf("DIVERGED at step %ld: %s\n", report.diverged_at,
                    report.diagnostics.c_str());
        return 1;
      }
      if (!t_losses.empty()) write_lines(t_losses, report.losses);
      if (!t_out.empty()) {
        model.params().save(t_out);
        std::printf("parameters -> %s\n", t_out.c_str());
      }
      return 0;
    }

    if (cmd_track->parsed()) {
      TrackerModel model(cfg, k_seed);
      if (!k_params.empty()) model.params().load(k_params);
      const SyntheticSequence seq = make_sequence(
          spec_from(k_frames, k_size, k_distractors),
          cmd_track->count("--seq-seed") ? k_seq_seed : k_seed);
      TrackOptions opts;
      opts.seed = k_seed;
      opts.ensemble_override = k_ensemble;
      const TrackRun run = track_sequence(model, seq, opts);
      const Metrics m = compute_metrics(run.records, seq.gt, m_theta, m_cells);
      std::printf(
          "frames %zu  mean_iou %.4f  success %.4f  precision %.4f\n",
          m.frames, m.mean_iou, m.success, m.precision);
      std::printf("encodes: reference %zu  search %zu  calls %zu  admitted %zu\n",
                  run.encodes.reference_encodes, run.encodes.search_encodes,
                  run.encodes.encode_calls, run.admitted_count());
      if (!k_run.empty()) write_run(k_run, run);
      if (!k_gt.empty()) write_gt(k_gt, seq.gt);
      return 0;
    }

    if (cmd_metrics->parsed()) {
      const TrackRun run = read_run(m_run);
      const std::vector<Box> gt = read_gt(m_gt);
      const Metrics m = compute_metrics(run.records, gt, m_theta, m_cells);
      std::printf(
          "frames %zu  mean_iou %.4f  success %.4f  precision %.4f\n",
          m.frames, m.mean_iou, m.success, m.precision);
      return 0;
    }

    if (cmd_ablate->parsed()) {
      AblationOptions opts;
      opts.train_sequences = a_train_seqs;
      opts.train_frames = a_train_frames;
      opts.steps = a_steps;
      opts.batch = a_batch;
      opts.eval_sequences = a_eval_seqs;
      opts.eval_frames = a_eval_frames;
      opts.seed = a_seed;
      opts.workers = a_workers;

      const std::vector<std::string> names =
          a_variants == "all" ? ablation_variant_names()
                              : split_names(a_variants);
      const std::vector<VariantResult> results =
          run_ablation(names, cfg, opts);
      std::cout << ablation_table(results);
      const auto checks = direction_checks(results);
      if (!checks.empty()) std::cout << "\n" << direction_report(checks);

      if (!a_sweep.empty()) {
        std::vector<std::size_t> ks;
        for (const std::string& s : split_names(a_sweep))
          ks.push_back(static_cast<std::size_t>(std::stoul(s)));
        // one trained refinement model serves every ensemble size
        TrackerModel model(apply_variant(cfg, "i"), opts.seed);
        train_toy(model, make_train_options(opts));
        std::cout << "\nensemble sweep (variant i):\n";
        for (const SweepPoint& p : ensemble_sweep(model, ks, opts))
          std::printf("  k=%zu  mean_iou %.4f\n", p.k, p.mean_iou);
      }
      return 0;
    }

    if (cmd_dump->parsed()) {
      TrackerModel model(cfg, d_seed);
      if (!d_params.empty()) model.params().load(d_params);
      const SyntheticSequence seq = make_sequence(
          spec_from(d_frames, d_size, d_distractors),
          cmd_dump->count("--seq-seed") ? d_seq_seed : d_seed);
      const CorrDumpReport report =
          dump_correlations(model, seq, d_every, d_out);
      for (const CorrProbeResult& p : report.probes)
        std::printf("frame %4zu  target mass pre %.4f -> post %.4f  %s\n",
                    p.frame, p.pre_mass, p.post_mass,
                    p.post_mass >= p.pre_mass ? "up" : "down");
      std::printf("improved on %.0f%% of %zu probes; %zu files in %s\n",
                  100.0 * report.fraction_improved, report.probes.size(),
                  report.files.size(), d_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
