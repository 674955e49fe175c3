#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlogloc/chrono.hpp"
#include "vlogloc/features.hpp"
#include "vlogloc/scorers.hpp"
#include "vlogloc/transcript.hpp"

namespace vlogloc {

double rbf_kernel(const Vec& a, const Vec& b, double gamma);

struct SvmOptions {
  double c = 1.0;
  std::optional<double> gamma;  // default: 1 / (dim * variance of all training features)
  bool balanced_class_weights = true;
  double tolerance = 1e-3;      // stop when the maximal KKT violation drops below this
  std::size_t max_passes = 100; // one pass = n working-set updates
};

// Soft-margin RBF SVM separating short (+1) from long (-1) actions.
struct DurationClassifier {
  std::vector<Vec> support_vectors;
  std::vector<double> coefficients;  // alpha_i * y_i
  double bias = 0.0;
  double gamma = 1.0;
  double c = 1.0;
  std::array<double, 2> class_weights{1.0, 1.0};  // {short, long}

  // Diagnostics from training.
  double kkt_gap = 0.0;
  std::size_t iterations = 0;

  std::size_t dim() const { return support_vectors.empty() ? 0 : static_cast<std::size_t>(support_vectors[0].size()); }
  double decision_value(const Vec& x) const;
};

// Throws SingleClass when either class is missing.
DurationClassifier train_duration_clf(std::span<const Vec> texts, std::span<const DurationClass> labels,
                                      const SvmOptions& options = {});

// Decision value >= 0 maps to Short. Throws DimensionMismatch.
DurationClass predict_duration_class(const Vec& text, const DurationClassifier& clf);

// SVM1: "SVM1", u32 dim, u32 n_sv, f64 gamma, f64 bias, then per SV
// f64 alpha_i * y_i and dim f32 components.
std::string encode_duration_clf(const DurationClassifier& clf);
DurationClassifier decode_duration_clf(std::string_view bytes);
void save_duration_clf(const std::filesystem::path& path, const DurationClassifier& clf);
DurationClassifier load_duration_clf(const std::filesystem::path& path);

struct LocalizerConfig {
  double duration_threshold = kDefaultDurationThreshold;
  double span_score_threshold = 0.5;
  double merge_gap = 3.0;
  double nms_iou = 0.5;

  void validate() const;
};

struct Proposal {
  TimeInterval interval;
  double score = 0.0;
  std::vector<std::size_t> members;  // grid indices, in time order
};

// Spans scoring strictly above the threshold, merged in time order while the
// next span starts less than merge_gap after the current proposal ends.
std::vector<Proposal> build_proposals(const SpanGrid& grid, std::span<const double> scores, double threshold,
                                      double merge_gap = 3.0);

// Greedy suppression of IoU > nms_iou against a higher-scoring survivor.
// Ties go to the earlier start. Output is sorted by score.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double nms_iou = 0.5);

enum class LocalizationPath { Align, Multimodal };
enum class RoutingMode { TwoSeal, AlignOnly, MultimodalOnly };

std::string_view to_string(LocalizationPath path);
std::string_view to_string(RoutingMode mode);
std::optional<RoutingMode> parse_routing_mode(std::string_view text);

struct Prediction {
  std::string action_id;
  bool visible = false;
  std::optional<TimeInterval> interval;
  std::optional<double> score;
  LocalizationPath path = LocalizationPath::Multimodal;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Looks up every grid span in the table. Throws MissingEmbedding.
std::vector<Vec> gather_span_vectors(const SpanGrid& grid, const EmbeddingTable& table);

// Min-max rescaling to [0,1]; a constant vector maps to all zeros.
std::vector<double> midrange_normalize(std::span<const double> scores);

Prediction localize_multimodal(const std::string& action_id, const ActionFeatures& action, const SpanGrid& grid,
                               std::span<const Vec> span_vectors, const SpanScorer& scorer,
                               const LocalizerConfig& config);

// Transcript alignment: always visible, interval = the source utterance.
Prediction align_prediction(const ActionMention& action, const Transcript& transcript);

// Short actions go to transcript alignment, long ones to the multimodal path.
// `mode` can force either path.
Prediction two_seal(const ActionMention& action, const Transcript& transcript, const ActionFeatures& features,
                    const SpanGrid& grid, std::span<const Vec> span_vectors, const DurationClassifier* clf,
                    const SpanScorer& scorer, const LocalizerConfig& config,
                    RoutingMode mode = RoutingMode::TwoSeal);

std::string format_prediction_line(const Prediction& prediction);
Prediction parse_prediction_line(std::string_view line);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions);

}  // namespace vlogloc
