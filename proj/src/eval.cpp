#include "vlogloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <unordered_map>

#include "vlogloc/error.hpp"

namespace vlogloc {

namespace {

using PredictionIndex = std::unordered_map<std::string, const Prediction*>;

PredictionIndex index_predictions(std::span<const Prediction> predictions) {
  PredictionIndex index;
  for (const auto& p : predictions) index.emplace(p.action_id, &p);
  return index;
}

const Prediction& lookup(const PredictionIndex& index, const GoldLabel& g) {
  const auto it = index.find(g.action_id);
  if (it == index.end()) throw Error(ErrorCode::MissingPrediction, "no prediction for '" + g.action_id + "'");
  return *it->second;
}

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

double predicted_iou(const Prediction& p, const GoldLabel& g) {
  if (!p.visible || !p.interval || !g.interval) return 0.0;
  return iou(*p.interval, *g.interval);
}

}  // namespace

std::vector<GoldLabel> gold_from_manifest(const std::vector<ManifestRecord>& records) {
  std::vector<GoldLabel> gold;
  gold.reserve(records.size());
  for (const auto& r : records) {
    const auto interval = r.gold();
    gold.push_back({r.action_id, r.gold_visible.value_or(false) && interval.has_value(), interval});
  }
  return gold;
}

double visibility_accuracy(std::span<const Prediction> predictions, std::span<const GoldLabel> gold) {
  const auto index = index_predictions(predictions);
  std::size_t correct = 0;
  for (const auto& g : gold) {
    if (lookup(index, g).visible == g.visible) ++correct;
  }
  return percent(correct, gold.size());
}

double recall_at_iou(std::span<const Prediction> predictions, std::span<const GoldLabel> gold, double threshold) {
  const auto index = index_predictions(predictions);
  std::size_t visible = 0, correct = 0;
  for (const auto& g : gold) {
    if (!g.visible) continue;
    ++visible;
    if (predicted_iou(lookup(index, g), g) > threshold) ++correct;
  }
  return percent(correct, visible);
}

double mean_iou(std::span<const Prediction> predictions, std::span<const GoldLabel> gold) {
  const auto index = index_predictions(predictions);
  std::size_t visible = 0;
  double total = 0.0;
  for (const auto& g : gold) {
    if (!g.visible) continue;
    ++visible;
    total += predicted_iou(lookup(index, g), g);
  }
  return visible == 0 ? 0.0 : 100.0 * total / static_cast<double>(visible);
}

MetricsReport evaluate(std::span<const Prediction> predictions, std::span<const GoldLabel> gold) {
  MetricsReport r;
  r.n_actions = gold.size();
  r.n_visible = static_cast<std::size_t>(std::count_if(gold.begin(), gold.end(), [](const GoldLabel& g) { return g.visible; }));
  r.va = visibility_accuracy(predictions, gold);
  for (double thr : kRecallThresholds) r.recall[thr] = recall_at_iou(predictions, gold, thr);
  r.miou = mean_iou(predictions, gold);
  return r;
}

std::vector<DurationBucket> default_duration_buckets() {
  return {{"0-15s", 0.0, 15.0},
          {"16-35s", 15.0, 35.0},
          {"36-60s", 35.0, std::numeric_limits<double>::infinity()}};
}

std::vector<BucketReport> breakdown_by_duration(std::span<const Prediction> predictions,
                                                std::span<const GoldLabel> gold,
                                                const std::vector<DurationBucket>& buckets) {
  std::vector<BucketReport> out;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    const auto& bucket = buckets[b];
    std::vector<GoldLabel> members;
    for (const auto& g : gold) {
      if (!g.visible || !g.interval) continue;
      const double d = g.interval->duration();
      const bool above_low = b == 0 ? d >= bucket.low : d > bucket.low;
      if (above_low && d <= bucket.high) members.push_back(g);
    }
    BucketReport br{bucket, members.size(), std::nullopt};
    if (!members.empty()) br.report = evaluate(predictions, members);
    out.push_back(std::move(br));
  }
  return out;
}

BinaryMetrics binary_metrics(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  if (predicted.size() != gold.size()) throw Error(ErrorCode::DimensionMismatch, "prediction and label counts differ");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] && gold[i]) ++tp;
    else if (predicted[i]) ++fp;
    else if (gold[i]) ++fn;
    else ++tn;
  }
  BinaryMetrics m;
  m.accuracy = percent(tp + tn, gold.size());
  m.precision = percent(tp, tp + fp);
  m.recall = percent(tp, tp + fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

double fleiss_kappa(const std::vector<std::vector<int>>& counts, int raters) {
  if (counts.empty()) throw Error(ErrorCode::EmptyInput, "no items to score");
  if (raters < 2) throw Error(ErrorCode::InsufficientPairs, "Fleiss' kappa needs at least two raters");
  const std::size_t categories = counts.front().size();
  const double n = raters;
  std::vector<double> column(categories, 0.0);
  double agreement = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& row = counts[i];
    if (row.size() != categories) throw Error(ErrorCode::DimensionMismatch, "ragged count matrix");
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t j = 0; j < categories; ++j) {
      if (row[j] < 0) throw Error(ErrorCode::DimensionMismatch, "negative count");
      sum += row[j];
      sum_sq += static_cast<double>(row[j]) * row[j];
      column[j] += row[j];
    }
    if (sum != n) {
      throw Error(ErrorCode::DimensionMismatch, "item " + std::to_string(i) + " has " +
                                                    std::to_string(static_cast<int>(sum)) + " ratings, expected " +
                                                    std::to_string(raters));
    }
    agreement += (sum_sq - n) / (n * (n - 1.0));
  }
  const double items = static_cast<double>(counts.size());
  const double p_bar = agreement / items;
  double p_e = 0.0;
  for (double c : column) {
    const double p = c / (items * n);
    p_e += p * p;
  }
  if (p_e >= 1.0) throw Error(ErrorCode::DegenerateChance, "every rating falls in one category");
  return (p_bar - p_e) / (1.0 - p_e);
}

double krippendorff_alpha_interval(const std::vector<std::vector<std::optional<double>>>& values) {
  std::size_t items = 0;
  for (const auto& row : values) items = std::max(items, row.size());

  std::vector<double> pooled;
  double within = 0.0;  // sum over units of (sum over ordered pairs of squared diffs) / (m_u - 1)
  std::size_t pairable_units = 0;
  std::vector<double> unit;
  for (std::size_t u = 0; u < items; ++u) {
    unit.clear();
    for (const auto& row : values) {
      if (u < row.size() && row[u]) unit.push_back(*row[u]);
    }
    if (unit.size() < 2) continue;
    ++pairable_units;
    const double m = static_cast<double>(unit.size());
    double mean = 0.0;
    for (double v : unit) mean += v;
    mean /= m;
    double ss = 0.0;
    for (double v : unit) ss += (v - mean) * (v - mean);
    // sum_{i != j} (v_i - v_j)^2 = 2 m sum (v - mean)^2
    within += 2.0 * m * ss / (m - 1.0);
    pooled.insert(pooled.end(), unit.begin(), unit.end());
  }
  if (pairable_units < 2) {
    throw Error(ErrorCode::InsufficientPairs, std::to_string(pairable_units) + " pairable item(s), need 2");
  }
  const double n = static_cast<double>(pooled.size());
  const double observed = within / n;
  if (observed == 0.0) return 1.0;

  double mean = 0.0;
  for (double v : pooled) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : pooled) ss += (v - mean) * (v - mean);
  const double expected = 2.0 * n * ss / (n * (n - 1.0));
  return 1.0 - observed / expected;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.1f", v);
  return buf;
}

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string metrics_cells(const MetricsReport& r) {
  std::string out = fixed(r.va);
  for (double thr : kRecallThresholds) {
    const auto it = r.recall.find(thr);
    out += " | " + fixed(it == r.recall.end() ? 0.0 : it->second);
  }
  out += " | " + fixed(r.miou);
  return out;
}

constexpr const char* kHeaderCells = "    VA |  R@0.1 |  R@0.3 |  R@0.5 |  R@0.7 |   mIoU";

}  // namespace

std::string format_report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::string out = pad_right("Method", width) + " | " + kHeaderCells + " |      n |  n_vis\n";
  out += std::string(out.size() - 1, '-') + "\n";
  for (const auto& [name, r] : rows) {
    char counts[48];
    std::snprintf(counts, sizeof counts, " | %6zu | %6zu", r.n_actions, r.n_visible);
    out += pad_right(name, width) + " | " + metrics_cells(r) + counts + "\n";
  }
  return out;
}

std::string format_breakdown_table(const std::vector<std::pair<std::string, std::vector<BucketReport>>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, buckets] : rows)
    for (const auto& b : buckets) width = std::max(width, name.size() + 1 + b.bucket.label.size());
  std::string out = pad_right("Bucket", width) + " | " + kHeaderCells + "\n";
  out += std::string(out.size() - 1, '-') + "\n";
  for (const auto& [name, buckets] : rows) {
    for (const auto& b : buckets) {
      const auto label = pad_right(name + " " + b.bucket.label, width);
      if (!b.report) {
        out += label + " | n=0\n";
      } else {
        out += label + " | " + metrics_cells(*b.report) + "\n";
      }
    }
  }
  return out;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["va"] = r.va;
  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [thr, value] : r.recall) {
    char key[16];
    std::snprintf(key, sizeof key, "%.1f", thr);
    recall[key] = value;
  }
  j["recall"] = recall;
  j["miou"] = r.miou;
  j["n_actions"] = r.n_actions;
  j["n_visible"] = r.n_visible;
  return j;
}

nlohmann::json breakdown_to_json(const std::vector<BucketReport>& buckets) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& b : buckets) {
    nlohmann::json j;
    j["bucket"] = b.bucket.label;
    j["n"] = b.n;
    j["report"] = b.report ? report_to_json(*b.report) : nlohmann::json(nullptr);
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace vlogloc
