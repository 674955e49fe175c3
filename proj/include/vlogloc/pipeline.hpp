#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vlogloc/dataprep.hpp"
#include "vlogloc/eval.hpp"
#include "vlogloc/features.hpp"
#include "vlogloc/localize.hpp"
#include "vlogloc/scorers.hpp"
#include "vlogloc/transcript.hpp"

namespace vlogloc {

enum class Split { Train, Validation, Test };
std::string_view to_string(Split split);

// Channel-keyed data split. Clips never cross splits because channels don't.
struct SplitSpec {
  std::set<std::string> train;
  std::set<std::string> validation;
  std::set<std::string> test;

  std::optional<Split> split_of(const std::string& channel) const;
};

// Throws Config when two splits share a channel or a manifest channel is
// unassigned.
void validate_split(const SplitSpec& split, const std::vector<ManifestRecord>& manifest);

// Sorted channels are dealt out in order: round(train * n) to train,
// round(validation * n) to validation, the rest to test.
SplitSpec split_by_fraction(const std::vector<ManifestRecord>& manifest, double train = 0.7,
                            double validation = 0.1);

enum class PositiveRule { Coverage, Iou };

struct LabelingOptions {
  PositiveRule rule = PositiveRule::Coverage;
  double threshold = 0.5;
};

// Coverage: |span & gold| / |span| >= threshold. Iou: iou(span, gold) >= threshold.
bool is_positive_span(const TimeInterval& span, const TimeInterval& gold, const LabelingOptions& options);

enum class ScorerKind { Mpu, Dot, Sca };
std::string_view to_string(ScorerKind kind);
std::optional<ScorerKind> parse_scorer_kind(std::string_view text);

struct RunConfig {
  // Input data. With `synthetic` set, data is generated into
  // <output_dir>/data and the data paths are ignored.
  std::filesystem::path manifest;
  std::filesystem::path clips;  // empty: segment from the manifest
  std::filesystem::path text_embeddings;
  std::filesystem::path video_embeddings;
  std::filesystem::path word_embeddings;  // optional, ids "<action_id>:w<k>"
  std::filesystem::path projection;       // optional text->video map for dot/sca
  std::optional<SyntheticConfig> synthetic;
  std::string text_variant;  // non-empty: text ids become "<action_id>:<variant>"

  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::optional<SplitSpec> split;  // nullopt: split_by_fraction
  double train_fraction = 0.7;
  double validation_fraction = 0.1;

  SegmentOptions segment;
  double span_len = kDefaultSpanLength;
  double stride = kDefaultSpanStride;

  LocalizerConfig localizer;
  RoutingMode routing = RoutingMode::TwoSeal;
  bool compare_paths = false;  // also report align-only and multimodal-only rows

  ScorerKind scorer = ScorerKind::Mpu;
  std::filesystem::path scorer_checkpoint;  // set: load instead of training
  TrainConfig train;
  LabelingOptions labeling;
  double sca_temperature = kDefaultScaTemperature;

  std::filesystem::path duration_checkpoint;  // set: load instead of training
  SvmOptions svm;
};

// Relative paths resolve against `base_dir`. Unknown keys are Config errors.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& config);

// FNV-1a over the canonical JSON of everything that affects results (output
// directory and thread count excluded), as 16 hex digits.
std::string config_hash(const RunConfig& config);

struct Workspace {
  std::vector<ManifestRecord> manifest;
  std::vector<VideoActions> videos;
  std::vector<ClipSpec> clips;
  std::vector<SpanGrid> grids;  // parallel to clips
  EmbeddingTable text;
  EmbeddingTable video;
  std::optional<EmbeddingTable> words;
  std::optional<Mat> projection;
  SplitSpec split;

  struct ActionRef {
    std::size_t record = 0;  // manifest index
    std::size_t video = 0;
    std::size_t action = 0;  // index into videos[video].actions
    std::optional<std::size_t> clip;
    Split split = Split::Test;
  };
  std::vector<ActionRef> actions;  // manifest order

  std::vector<std::size_t> actions_in(Split split) const;
  std::string text_id(const std::string& action_id, const std::string& variant) const;
};

// Loads or generates every input, segments when no clips are given, builds
// span grids and checks split integrity.
Workspace load_workspace(const RunConfig& config);

ActionFeatures action_features(const Workspace& ws, const std::string& action_id, const std::string& variant);

// Positive spans per visible action of the split; the other spans of the same
// clip are its negative candidates.
ScorerDataset build_scorer_dataset(const Workspace& ws, Split split, const RunConfig& config);

// Trained on the visible training actions, labelled by gold duration.
DurationClassifier train_duration_stage(const Workspace& ws, const RunConfig& config);
TrainResult train_scorer_stage(const Workspace& ws, const RunConfig& config);

std::unique_ptr<SpanScorer> make_scorer(const Workspace& ws, const RunConfig& config,
                                        std::optional<ScorerParams> params);

// Localizes the given actions (indices into ws.actions) on `threads` workers.
// Output order follows the input. Actions without embeddings come out not
// visible with a line in `warnings`. `scorer` may be null for align-only.
std::vector<Prediction> localize_actions(const Workspace& ws, const std::vector<std::size_t>& actions,
                                         const DurationClassifier* clf, const SpanScorer* scorer,
                                         const RunConfig& config, RoutingMode mode,
                                         std::vector<std::string>* warnings = nullptr);

std::vector<GoldLabel> gold_for(const Workspace& ws, const std::vector<std::size_t>& actions);

struct PipelineResult {
  std::vector<Prediction> predictions;
  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::vector<std::pair<std::string, std::vector<BucketReport>>> breakdown;
  std::vector<std::string> warnings;
  std::string report_text;
  nlohmann::json report_json;
};

// segment -> spans -> train -> localize -> evaluate on the test split. Writes
// predictions.jsonl, report.txt and report.json (plus checkpoints and the
// training log when trained) into config.output_dir. Stage failures are
// rethrown with the stage name in the message.
PipelineResult run_pipeline(const RunConfig& config);

}  // namespace vlogloc
