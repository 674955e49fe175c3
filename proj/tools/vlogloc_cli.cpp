#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vlogloc/commands.hpp"
#include "vlogloc/error.hpp"

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string scorer;
  std::string path;
  std::optional<std::size_t> threads;
  std::string out;
};

vlogloc::RunConfig load_config(const GlobalFlags& g, bool out_is_dir) {
  if (g.config.empty()) throw vlogloc::Error(vlogloc::ErrorCode::Config, "--config is required");
  auto cfg = vlogloc::load_run_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) {
    if (*g.threads == 0) throw vlogloc::Error(vlogloc::ErrorCode::Config, "--threads must be >= 1");
    cfg.threads = *g.threads;
  }
  if (!g.scorer.empty()) cfg.scorer = *vlogloc::parse_scorer_kind(g.scorer);
  if (!g.path.empty()) cfg.routing = *vlogloc::parse_routing_mode(g.path);
  if (out_is_dir && !g.out.empty()) cfg.output_dir = g.out;
  return cfg;
}

std::string require_out(const GlobalFlags& g) {
  if (g.out.empty()) throw vlogloc::Error(vlogloc::ErrorCode::Config, "--out is required");
  return g.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Duration-routed temporal action localization toolkit", "vlogloc"};
  app.set_version_flag("--version", VLOGLOC_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--scorer", g.scorer, "Span scorer")->check(CLI::IsMember({"mpu", "dot", "sca"}));
  app.add_option("--path", g.path, "Routing")->check(CLI::IsMember({"2seal", "align-only", "multimodal-only"}));
  app.add_option("--threads", g.threads, "Localization worker threads");
  app.add_option("--out", g.out, "Output file, prefix or directory");

  auto* ingest = app.add_subcommand("ingest", "Parse subtitles, filter by speech rate, extract actions");
  std::string subtitle_dir;
  double min_rate = vlogloc::kDefaultMinWordRate;
  ingest->add_option("subtitles", subtitle_dir, "Directory of .vtt/.srt files")->required();
  ingest->add_option("--min-rate", min_rate, "Minimum words per second");

  auto* segment = app.add_subcommand("segment", "Group actions into padded clips");
  std::string seg_manifest;
  vlogloc::SegmentOptions seg_opts;
  segment->add_option("manifest", seg_manifest)->required();
  segment->add_option("--max-len", seg_opts.max_len, "Longest cue span per clip (s)");
  segment->add_option("--pad", seg_opts.pad, "Padding on both sides (s)");

  auto* motion = app.add_subcommand("motion-filter", "Flag static clips by frame correlation");
  std::string frames;
  vlogloc::MotionFilterOptions motion_opts;
  motion->add_option("frames", frames, "PGM directory or FRM1 pack")->required();
  motion->add_option("--sample-every", motion_opts.sample_every);
  motion->add_option("--threshold", motion_opts.threshold);

  auto* synth = app.add_subcommand("synth", "Write a planted-signal synthetic dataset");
  vlogloc::SyntheticConfig synth_cfg;
  synth->add_option("--n-clips", synth_cfg.n_clips);
  synth->add_option("--clip-len", synth_cfg.clip_len);
  synth->add_option("--text-dim", synth_cfg.text_dim);
  synth->add_option("--video-dim", synth_cfg.video_dim);
  synth->add_option("--gain", synth_cfg.signal_gain);
  synth->add_option("--noise", synth_cfg.noise_sigma);
  synth->add_option("--nonvisible", synth_cfg.nonvisible_fraction);
  synth->add_option("--long-fraction", synth_cfg.long_fraction);

  auto* train_duration = app.add_subcommand("train-duration", "Train the short/long action classifier");
  auto* train_scorer = app.add_subcommand("train-scorer", "Train the MPU span scorer");

  auto* localize = app.add_subcommand("localize", "Localize actions with saved checkpoints");
  bool all_actions = false;
  localize->add_flag("--all", all_actions, "Localize every action, not only the test split");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold labels");
  std::string eval_predictions, eval_manifest, eval_method = "predictions";
  evaluate->add_option("predictions", eval_predictions)->required();
  evaluate->add_option("manifest", eval_manifest)->required();
  evaluate->add_option("--method", eval_method, "Row label");

  auto* agreement = app.add_subcommand("agreement", "Inter-annotator agreement");
  std::string annotations;
  agreement->add_option("annotations", annotations)->required();

  auto* report = app.add_subcommand("report", "Merge report.json rows into one table");
  std::vector<std::string> report_files;
  report->add_option("reports", report_files)->required();

  auto* pipeline = app.add_subcommand("pipeline", "segment, train, localize and evaluate in one run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (ingest->parsed()) {
      const auto r = vlogloc::cmd_ingest(subtitle_dir, require_out(g), min_rate);
      std::printf("%zu videos kept, %zu rejected, %zu actions\n", r.videos, r.rejected.size(), r.manifest.size());
      for (const auto& rej : r.rejected) {
        std::printf("rejected %s: %.3f words/s (%s)\n", rej.video_id.c_str(), rej.rate, rej.reason.c_str());
      }
    } else if (segment->parsed()) {
      const auto clips = vlogloc::cmd_segment(seg_manifest, require_out(g), seg_opts);
      std::printf("%zu clips\n", clips.size());
    } else if (motion->parsed()) {
      for (const auto& r : vlogloc::cmd_motion_filter(frames, g.out, motion_opts)) {
        std::printf("%s\t%.4f\t%s\n", r.clip_id.c_str(), r.result.median,
                    r.result.decision == vlogloc::MotionDecision::Drop ? "drop" : "keep");
      }
    } else if (synth->parsed()) {
      if (g.seed) synth_cfg.seed = *g.seed;
      const auto data = vlogloc::cmd_synth(synth_cfg, require_out(g));
      std::printf("%zu clips, %zu span vectors\n", data.clips.size(), data.video.size());
    } else if (train_duration->parsed()) {
      const auto clf = vlogloc::cmd_train_duration(load_config(g, false), require_out(g));
      std::printf("%zu support vectors, gamma %.6g, kkt gap %.3g\n", clf.support_vectors.size(), clf.gamma,
                  clf.kkt_gap);
    } else if (train_scorer->parsed()) {
      const auto r = vlogloc::cmd_train_scorer(load_config(g, false), require_out(g));
      std::printf("best epoch %zu of %zu, validation loss %.6f\n", r.best_epoch, r.log.size(), r.best_val_loss);
    } else if (localize->parsed()) {
      const auto preds = vlogloc::cmd_localize(load_config(g, false), require_out(g), all_actions);
      std::printf("%zu predictions\n", preds.size());
    } else if (evaluate->parsed()) {
      std::fputs(vlogloc::cmd_evaluate(eval_predictions, eval_manifest, g.out, eval_method).text.c_str(), stdout);
    } else if (agreement->parsed()) {
      std::fputs(vlogloc::format_agreement(vlogloc::cmd_agreement(annotations, g.out)).c_str(), stdout);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> paths(report_files.begin(), report_files.end());
      std::fputs(vlogloc::cmd_report(paths, g.out).c_str(), stdout);
    } else if (pipeline->parsed()) {
      const auto r = vlogloc::cmd_pipeline(load_config(g, true));
      for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::fputs(r.report_text.c_str(), stdout);
    }
  } catch (const vlogloc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return vlogloc::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
