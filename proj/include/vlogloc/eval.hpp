#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlogloc/chrono.hpp"
#include "vlogloc/localize.hpp"
#include "vlogloc/transcript.hpp"

namespace vlogloc {

struct GoldLabel {
  std::string action_id;
  bool visible = false;
  std::optional<TimeInterval> interval;  // present iff visible
};

std::vector<GoldLabel> gold_from_manifest(const std::vector<ManifestRecord>& records);

inline constexpr std::array<double, 4> kRecallThresholds{0.1, 0.3, 0.5, 0.7};

// Percentages in [0, 100].
struct MetricsReport {
  double va = 0.0;
  std::map<double, double> recall;  // IoU threshold -> recall
  double miou = 0.0;
  std::size_t n_actions = 0;
  std::size_t n_visible = 0;
};

// Share of actions whose predicted visibility matches gold. Throws
// MissingPrediction.
double visibility_accuracy(std::span<const Prediction> predictions, std::span<const GoldLabel> gold);

// Over gold-visible actions: correct iff predicted visible and IoU > thr.
double recall_at_iou(std::span<const Prediction> predictions, std::span<const GoldLabel> gold, double threshold);

// Mean per-action IoU over gold-visible actions; not-visible predictions count 0.
double mean_iou(std::span<const Prediction> predictions, std::span<const GoldLabel> gold);

MetricsReport evaluate(std::span<const Prediction> predictions, std::span<const GoldLabel> gold);

struct DurationBucket {
  std::string label;
  double low = 0.0;   // exclusive, except the first bucket which includes 0
  double high = 0.0;  // inclusive
};

// 0-15, 16-35, 36-60 seconds; the last bucket also takes anything longer.
std::vector<DurationBucket> default_duration_buckets();

struct BucketReport {
  DurationBucket bucket;
  std::size_t n = 0;
  std::optional<MetricsReport> report;  // nullopt when n == 0
};

// Partitions gold-visible actions by gold duration and evaluates each part.
std::vector<BucketReport> breakdown_by_duration(std::span<const Prediction> predictions,
                                                std::span<const GoldLabel> gold,
                                                const std::vector<DurationBucket>& buckets = default_duration_buckets());

// Binary classification summary with "positive" as the first class, in percent.
struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

BinaryMetrics binary_metrics(const std::vector<bool>& predicted_positive, const std::vector<bool>& gold_positive);

// Fleiss' kappa for an item x category count matrix where each row sums to
// `raters`. Throws DegenerateChance when chance agreement is 1.
double fleiss_kappa(const std::vector<std::vector<int>>& counts, int raters);

// Krippendorff's alpha, interval metric, on an annotator x item matrix with
// missing values. Only items with at least two values are pairable. Throws
// InsufficientPairs when fewer than two items are pairable.
double krippendorff_alpha_interval(const std::vector<std::vector<std::optional<double>>>& values);

// Fixed-column table: Method | VA | R@0.1 | R@0.3 | R@0.5 | R@0.7 | mIoU.
std::string format_report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string format_breakdown_table(const std::vector<std::pair<std::string, std::vector<BucketReport>>>& rows);

nlohmann::json report_to_json(const MetricsReport& report);
nlohmann::json breakdown_to_json(const std::vector<BucketReport>& buckets);

}  // namespace vlogloc
