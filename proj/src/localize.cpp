#include "vlogloc/localize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "vlogloc/binary_io.hpp"
#include "vlogloc/error.hpp"

namespace vlogloc {

double rbf_kernel(const Vec& a, const Vec& b, double gamma) { return std::exp(-gamma * (a - b).squaredNorm()); }

double DurationClassifier::decision_value(const Vec& x) const {
  double f = bias;
  for (std::size_t i = 0; i < support_vectors.size(); ++i) {
    f += coefficients[i] * rbf_kernel(support_vectors[i], x, gamma);
  }
  return f;
}

namespace {

constexpr double kTau = 1e-12;

// Dual solver for  min 1/2 a'Qa - e'a,  0 <= a_i <= C_i,  y'a = 0,
// with second-order working-set selection.
class SmoSolver {
 public:
  SmoSolver(const Mat& kernel, std::vector<double> y, std::vector<double> upper)
      : k_(kernel), y_(std::move(y)), c_(std::move(upper)), n_(y_.size()), alpha_(n_, 0.0), grad_(n_, -1.0) {}

  void solve(double tolerance, std::size_t max_iterations) {
    while (iterations_ < max_iterations) {
      std::size_t i = 0, j = 0;
      if (!select(tolerance, i, j)) break;
      update(i, j);
      ++iterations_;
    }
    gap_ = violation();
  }

  double rho() const {
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n_; ++t) {
      const double yg = y_[t] * grad_[t];
      if (at_upper(t)) {
        if (y_[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
      } else if (at_lower(t)) {
        if (y_[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
      } else {
        ++n_free;
        sum_free += yg;
      }
    }
    return n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  }

  // max_{I_up} -y G  -  min_{I_low} -y G
  double violation() const {
    double up = -std::numeric_limits<double>::infinity();
    double low = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n_; ++t) {
      const double v = -y_[t] * grad_[t];
      if (in_up(t)) up = std::max(up, v);
      if (in_low(t)) low = std::min(low, v);
    }
    if (!std::isfinite(up) || !std::isfinite(low)) return 0.0;
    return std::max(0.0, up - low);
  }

  const std::vector<double>& alpha() const { return alpha_; }
  std::size_t iterations() const { return iterations_; }
  double gap() const { return gap_; }

 private:
  bool at_upper(std::size_t t) const { return alpha_[t] >= c_[t]; }
  bool at_lower(std::size_t t) const { return alpha_[t] <= 0.0; }
  bool in_up(std::size_t t) const { return y_[t] > 0 ? !at_upper(t) : !at_lower(t); }
  bool in_low(std::size_t t) const { return y_[t] > 0 ? !at_lower(t) : !at_upper(t); }
  double q(std::size_t a, std::size_t b) const { return y_[a] * y_[b] * k_(idx(a), idx(b)); }
  static Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

  bool select(double tolerance, std::size_t& out_i, std::size_t& out_j) const {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::optional<std::size_t> i;
    for (std::size_t t = 0; t < n_; ++t) {
      if (!in_up(t)) continue;
      const double v = -y_[t] * grad_[t];
      if (v >= gmax) {
        gmax = v;
        i = t;
      }
    }
    if (!i) return false;

    std::optional<std::size_t> j;
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n_; ++t) {
      if (!in_low(t)) continue;
      const double v = y_[t] * grad_[t];  // = -(-y G)
      gmax2 = std::max(gmax2, v);
      const double grad_diff = gmax + v;
      if (grad_diff > 0) {
        double quad = k_(idx(*i), idx(*i)) + k_(idx(t), idx(t)) - 2.0 * k_(idx(*i), idx(t));
        if (quad <= 0) quad = kTau;
        const double obj = -(grad_diff * grad_diff) / quad;
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (gmax + gmax2 < tolerance || !j) return false;
    out_i = *i;
    out_j = *j;
    return true;
  }

  void update(std::size_t i, std::size_t j) {
    const double old_i = alpha_[i];
    const double old_j = alpha_[j];
    const double ci = c_[i];
    const double cj = c_[j];
    double& ai = alpha_[i];
    double& aj = alpha_[j];
    if (y_[i] != y_[j]) {
      double quad = k_(idx(i), idx(i)) + k_(idx(j), idx(j)) + 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0) {
        if (aj < 0) { aj = 0; ai = diff; }
      } else {
        if (ai < 0) { ai = 0; aj = -diff; }
      }
      if (diff > ci - cj) {
        if (ai > ci) { ai = ci; aj = ci - diff; }
      } else {
        if (aj > cj) { aj = cj; ai = cj + diff; }
      }
    } else {
      double quad = k_(idx(i), idx(i)) + k_(idx(j), idx(j)) - 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > ci) {
        if (ai > ci) { ai = ci; aj = sum - ci; }
      } else {
        if (aj < 0) { aj = 0; ai = sum; }
      }
      if (sum > cj) {
        if (aj > cj) { aj = cj; ai = sum - cj; }
      } else {
        if (ai < 0) { ai = 0; aj = sum; }
      }
    }
    const double di = ai - old_i;
    const double dj = aj - old_j;
    for (std::size_t t = 0; t < n_; ++t) grad_[t] += q(i, t) * di + q(j, t) * dj;
  }

  const Mat& k_;
  std::vector<double> y_;
  std::vector<double> c_;
  std::size_t n_;
  std::vector<double> alpha_;
  std::vector<double> grad_;
  std::size_t iterations_ = 0;
  double gap_ = 0.0;
};

}  // namespace

DurationClassifier train_duration_clf(std::span<const Vec> texts, std::span<const DurationClass> labels,
                                      const SvmOptions& options) {
  if (texts.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "texts and labels differ in length");
  const std::size_t n = texts.size();
  const auto n_short = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), DurationClass::Short));
  if (n_short == 0 || n_short == n) {
    throw Error(ErrorCode::SingleClass, "duration classifier needs both short and long examples");
  }
  const auto dim = texts[0].size();
  for (const auto& t : texts) {
    if (t.size() != dim) throw Error(ErrorCode::DimensionMismatch, "duration features differ in dimension");
  }

  DurationClassifier clf;
  clf.c = options.c;
  if (options.balanced_class_weights) {
    clf.class_weights = {static_cast<double>(n) / (2.0 * static_cast<double>(n_short)),
                         static_cast<double>(n) / (2.0 * static_cast<double>(n - n_short))};
  }
  if (options.gamma) {
    clf.gamma = *options.gamma;
  } else {
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& t : texts) {
      sum += t.sum();
      sum_sq += t.squaredNorm();
    }
    const double count = static_cast<double>(n) * static_cast<double>(dim);
    const double var = sum_sq / count - (sum / count) * (sum / count);
    clf.gamma = var > 0.0 ? 1.0 / (static_cast<double>(dim) * var) : 1.0;
  }

  Mat kernel(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const double k = rbf_kernel(texts[a], texts[b], clf.gamma);
      kernel(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = k;
      kernel(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = k;
    }
  }
  std::vector<double> y(n), upper(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_short = labels[i] == DurationClass::Short;
    y[i] = is_short ? 1.0 : -1.0;
    upper[i] = options.c * clf.class_weights[is_short ? 0 : 1];
  }

  SmoSolver solver(kernel, y, upper);
  solver.solve(options.tolerance, options.max_passes * std::max<std::size_t>(n, 1));
  clf.bias = -solver.rho();
  clf.kkt_gap = solver.gap();
  clf.iterations = solver.iterations();
  for (std::size_t i = 0; i < n; ++i) {
    if (solver.alpha()[i] > 0.0) {
      clf.support_vectors.push_back(texts[i]);
      clf.coefficients.push_back(solver.alpha()[i] * y[i]);
    }
  }
  return clf;
}

DurationClass predict_duration_class(const Vec& text, const DurationClassifier& clf) {
  if (!clf.support_vectors.empty() && static_cast<std::size_t>(text.size()) != clf.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "duration classifier expects dim " + std::to_string(clf.dim()));
  }
  return clf.decision_value(text) >= 0.0 ? DurationClass::Short : DurationClass::Long;
}

std::string encode_duration_clf(const DurationClassifier& clf) {
  io::ByteWriter out;
  out.bytes("SVM1");
  out.u32(static_cast<std::uint32_t>(clf.dim()));
  out.u32(static_cast<std::uint32_t>(clf.support_vectors.size()));
  out.f64(clf.gamma);
  out.f64(clf.bias);
  for (std::size_t i = 0; i < clf.support_vectors.size(); ++i) {
    out.f64(clf.coefficients[i]);
    for (double x : clf.support_vectors[i]) out.f32(static_cast<float>(x));
  }
  return out.data();
}

DurationClassifier decode_duration_clf(std::string_view bytes) {
  io::ByteReader in{std::string(bytes)};
  if (in.remaining() < 4 || in.bytes(4) != "SVM1") throw Error(ErrorCode::BadMagic, "not an SVM1 checkpoint");
  const auto dim = in.u32();
  const auto n_sv = in.u32();
  DurationClassifier clf;
  clf.gamma = in.f64();
  clf.bias = in.f64();
  for (std::uint32_t i = 0; i < n_sv; ++i) {
    clf.coefficients.push_back(in.f64());
    Vec v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = in.f32();
    clf.support_vectors.push_back(std::move(v));
  }
  if (in.remaining() != 0) throw Error(ErrorCode::DimensionMismatch, "trailing bytes in SVM1 checkpoint");
  return clf;
}

void save_duration_clf(const std::filesystem::path& path, const DurationClassifier& clf) {
  io::write_file(path, encode_duration_clf(clf));
}

DurationClassifier load_duration_clf(const std::filesystem::path& path) {
  return decode_duration_clf(io::read_file(path));
}

void LocalizerConfig::validate() const {
  if (!(duration_threshold > 0.0) || !(span_score_threshold > 0.0) || !(merge_gap > 0.0) || !(nms_iou > 0.0) ||
      nms_iou > 1.0) {
    throw Error(ErrorCode::Config, "localizer thresholds must be positive and nms_iou in (0,1]");
  }
}

std::vector<Proposal> build_proposals(const SpanGrid& grid, std::span<const double> scores, double threshold,
                                      double merge_gap) {
  if (scores.size() != grid.spans.size()) {
    throw Error(ErrorCode::DimensionMismatch, "scores do not cover the span grid");
  }
  std::vector<std::size_t> order(grid.spans.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return grid.spans[a].start < grid.spans[b].start;
  });

  std::vector<Proposal> proposals;
  for (auto k : order) {
    if (!(scores[k] > threshold)) continue;
    const auto& span = grid.spans[k];
    if (!proposals.empty() && span.start - proposals.back().interval.end < merge_gap) {
      auto& p = proposals.back();
      p.interval.end = std::max(p.interval.end, span.end);
      p.interval.start = std::min(p.interval.start, span.start);
      p.score = std::max(p.score, scores[k]);
      p.members.push_back(k);
    } else {
      proposals.push_back(Proposal{span, scores[k], {k}});
    }
  }
  return proposals;
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double nms_iou) {
  std::stable_sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.interval.start < b.interval.start;
  });
  std::vector<Proposal> kept;
  for (auto& p : proposals) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](const Proposal& k) { return iou(k.interval, p.interval) > nms_iou; });
    if (!suppressed) kept.push_back(std::move(p));
  }
  return kept;
}

std::string_view to_string(LocalizationPath path) { return path == LocalizationPath::Align ? "align" : "multimodal"; }

std::string_view to_string(RoutingMode mode) {
  switch (mode) {
    case RoutingMode::TwoSeal: return "2seal";
    case RoutingMode::AlignOnly: return "align-only";
    case RoutingMode::MultimodalOnly: return "multimodal-only";
  }
  return "2seal";
}

std::optional<RoutingMode> parse_routing_mode(std::string_view text) {
  if (text == "2seal") return RoutingMode::TwoSeal;
  if (text == "align-only") return RoutingMode::AlignOnly;
  if (text == "multimodal-only") return RoutingMode::MultimodalOnly;
  return std::nullopt;
}

std::vector<Vec> gather_span_vectors(const SpanGrid& grid, const EmbeddingTable& table) {
  std::vector<Vec> out;
  out.reserve(grid.spans.size());
  for (std::size_t k = 0; k < grid.spans.size(); ++k) out.push_back(table.vector(grid.span_id(k)));
  return out;
}

std::vector<double> midrange_normalize(std::span<const double> scores) {
  std::vector<double> out(scores.size(), 0.0);
  if (scores.empty()) return out;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / range;
  return out;
}

Prediction localize_multimodal(const std::string& action_id, const ActionFeatures& action, const SpanGrid& grid,
                               std::span<const Vec> span_vectors, const SpanScorer& scorer,
                               const LocalizerConfig& config) {
  if (span_vectors.size() != grid.spans.size()) {
    throw Error(ErrorCode::MissingEmbedding, "clip '" + grid.clip_id + "' has " + std::to_string(span_vectors.size()) +
                                                 " span vectors for " + std::to_string(grid.spans.size()) + " spans");
  }
  auto scores = scorer.score_spans(action, span_vectors);
  if (scorer.needs_midrange()) scores = midrange_normalize(scores);

  Prediction pred{action_id, false, std::nullopt, std::nullopt, LocalizationPath::Multimodal};
  const auto kept = nms(build_proposals(grid, scores, config.span_score_threshold, config.merge_gap), config.nms_iou);
  if (!kept.empty()) {
    pred.visible = true;
    pred.interval = kept.front().interval;
    pred.score = kept.front().score;
  }
  return pred;
}

Prediction align_prediction(const ActionMention& action, const Transcript& transcript) {
  return Prediction{action.id, true, align_action_to_utterance(action, transcript), std::nullopt,
                    LocalizationPath::Align};
}

Prediction two_seal(const ActionMention& action, const Transcript& transcript, const ActionFeatures& features,
                    const SpanGrid& grid, std::span<const Vec> span_vectors, const DurationClassifier* clf,
                    const SpanScorer& scorer, const LocalizerConfig& config, RoutingMode mode) {
  bool use_align = mode == RoutingMode::AlignOnly;
  if (mode == RoutingMode::TwoSeal) {
    if (clf == nullptr) throw Error(ErrorCode::Config, "2SEAL routing needs a duration classifier");
    use_align = predict_duration_class(features.text, *clf) == DurationClass::Short;
  }
  if (use_align) return align_prediction(action, transcript);
  return localize_multimodal(action.id, features, grid, span_vectors, scorer, config);
}

std::string format_prediction_line(const Prediction& p) {
  nlohmann::json j;
  j["action_id"] = p.action_id;
  j["visible"] = p.visible;
  j["start_ms"] = p.interval ? nlohmann::json(to_ms(p.interval->start)) : nlohmann::json(nullptr);
  j["end_ms"] = p.interval ? nlohmann::json(to_ms(p.interval->end)) : nlohmann::json(nullptr);
  j["score"] = p.score ? nlohmann::json(*p.score) : nlohmann::json(nullptr);
  j["path"] = std::string(to_string(p.path));
  return j.dump();
}

Prediction parse_prediction_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Prediction p;
    p.action_id = j.at("action_id").get<std::string>();
    p.visible = j.at("visible").get<bool>();
    if (j.contains("start_ms") && !j["start_ms"].is_null()) {
      p.interval = interval_from_ms(j.at("start_ms").get<std::int64_t>(), j.at("end_ms").get<std::int64_t>());
    }
    if (j.contains("score") && !j["score"].is_null()) p.score = j["score"].get<double>();
    p.path = j.value("path", std::string("multimodal")) == "align" ? LocalizationPath::Align
                                                                   : LocalizationPath::Multimodal;
    if (p.visible != p.interval.has_value()) {
      throw Error(ErrorCode::Config, "prediction '" + p.action_id + "': visible iff interval present");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("prediction record: ") + e.what());
  }
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for (const auto& line : io::read_lines(path)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_prediction_line(line));
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions) {
  std::string out;
  for (const auto& p : predictions) out += format_prediction_line(p) + "\n";
  io::write_file(path, out);
}

}  // namespace vlogloc
