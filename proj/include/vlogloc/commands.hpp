#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlogloc/dataprep.hpp"
#include "vlogloc/eval.hpp"
#include "vlogloc/features.hpp"
#include "vlogloc/localize.hpp"
#include "vlogloc/pipeline.hpp"
#include "vlogloc/transcript.hpp"

// One function per CLI subcommand. They read and write files and return what
// they wrote so callers and tests can inspect it; printing is left to the
// frontend.
namespace vlogloc {

struct IngestResult {
  std::vector<ManifestRecord> manifest;
  std::vector<TranscriptRejection> rejected;
  std::size_t videos = 0;  // transcripts that passed the filter
};

// Parses every .vtt/.srt file in `subtitle_dir` (video id = file stem),
// applies the speech-rate filter and extracts candidate actions. Writes the
// manifest and "<manifest>.rejected.tsv". Throws EmptyInput when no
// transcript survives; parse errors name the file.
IngestResult cmd_ingest(const std::filesystem::path& subtitle_dir, const std::filesystem::path& manifest_out,
                        double min_rate = kDefaultMinWordRate);

std::vector<ClipSpec> cmd_segment(const std::filesystem::path& manifest, const std::filesystem::path& clips_out,
                                  const SegmentOptions& options = {});

struct MotionRecord {
  std::string clip_id;
  MotionResult result;
};

// `input` is a directory of "<clip>_<index>.pgm" frames or a single FRM1 pack
// (clip id = file stem). Writes JSON Lines {clip_id, median, decision}.
std::vector<MotionRecord> cmd_motion_filter(const std::filesystem::path& input, const std::filesystem::path& out,
                                            const MotionFilterOptions& options = {});

SyntheticDataset cmd_synth(const SyntheticConfig& config, const std::filesystem::path& out_dir);

DurationClassifier cmd_train_duration(const RunConfig& config, const std::filesystem::path& out);

// Writes the checkpoint and "<out>.log.tsv".
TrainResult cmd_train_scorer(const RunConfig& config, const std::filesystem::path& out);

// Localizes the test split (every action with `all_actions`) using the
// checkpoints named in the config.
std::vector<Prediction> cmd_localize(const RunConfig& config, const std::filesystem::path& out,
                                     bool all_actions = false);

struct EvaluationResult {
  MetricsReport report;
  std::vector<BucketReport> breakdown;
  std::string text;
};

// Scores a predictions file against the gold labels of the actions it covers.
// Writes "<out>.txt" and "<out>.json" when `out` is non-empty.
EvaluationResult cmd_evaluate(const std::filesystem::path& predictions, const std::filesystem::path& manifest,
                              const std::filesystem::path& out = {}, const std::string& method = "predictions");

// Annotation record, one per line:
// {video_id, item_id, annotator, start_ms?, end_ms?, label?}
struct Annotation {
  std::string video_id;
  std::string item_id;
  std::string annotator;
  std::optional<TimeInterval> interval;
  std::optional<std::string> label;
};

Annotation parse_annotation_line(std::string_view line);
std::vector<Annotation> read_annotations(const std::filesystem::path& path);

struct VideoAgreement {
  std::string video_id;
  std::size_t annotators = 0;
  std::size_t items = 0;
  std::optional<double> alpha;
  std::string error;  // set when alpha is absent
};

struct AgreementReport {
  std::vector<VideoAgreement> videos;  // sorted by video id
  std::optional<double> alpha_min;
  std::optional<double> alpha_max;
  std::optional<double> kappa;
  std::size_t kappa_items = 0;
  int kappa_raters = 0;
  std::string kappa_error;
};

// Per video: interval alpha over the concatenated start and end offsets
// (annotator x [starts..., ends...]). Overall: Fleiss' kappa over items whose
// labels come from the full rater count.
AgreementReport compute_agreement(const std::vector<Annotation>& annotations);
std::string format_agreement(const AgreementReport& report);
nlohmann::json agreement_to_json(const AgreementReport& report);

AgreementReport cmd_agreement(const std::filesystem::path& annotations, const std::filesystem::path& out = {});

// Merges the rows of several report.json files into one table.
std::string cmd_report(const std::vector<std::filesystem::path>& reports, const std::filesystem::path& out = {});

PipelineResult cmd_pipeline(const RunConfig& config);

}  // namespace vlogloc
