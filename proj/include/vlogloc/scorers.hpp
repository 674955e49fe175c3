#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vlogloc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ProjectionActivation { Tanh, Identity };

// Learnable weights of the multimodal processing unit (MPU) scorer.
//
//   u = act(text_proj^T t + text_bias)            text_proj:   text_dim x d
//   w = act(video_proj^T v + video_bias)          video_proj:  video_dim x d
//   h = tanh(fusion_weight^T [u; w] + fusion_bias) fusion_weight: 2d x d
//   score = sigmoid(out_weight . [u + w; u * w; h] + out_bias)
//
// `activation` is a model option, not a weight; Identity gives strictly
// linear projections.
struct ScorerParams {
  Mat text_proj;
  Mat video_proj;
  Vec text_bias;
  Vec video_bias;
  Mat fusion_weight;
  Vec fusion_bias;
  Vec out_weight;
  double out_bias = 0.0;
  ProjectionActivation activation = ProjectionActivation::Tanh;

  static ScorerParams zeros(std::size_t text_dim, std::size_t video_dim, std::size_t common_dim);
  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for every weight and bias.
  static ScorerParams random(std::size_t text_dim, std::size_t video_dim, std::size_t common_dim,
                             std::uint64_t seed);

  std::size_t text_dim() const { return static_cast<std::size_t>(text_proj.rows()); }
  std::size_t video_dim() const { return static_cast<std::size_t>(video_proj.rows()); }
  std::size_t common_dim() const { return static_cast<std::size_t>(text_proj.cols()); }

  // Flat views over every tensor, in checkpoint order.
  std::array<std::span<double>, 8> tensors();
  std::array<std::span<const double>, 8> tensors() const;
  std::size_t parameter_count() const;
};

double sigmoid(double z);

double mpu_logit(const Vec& text, const Vec& span, const ScorerParams& params);
// Score in (0,1). Throws DimensionMismatch.
double mpu_forward(const Vec& text, const Vec& span, const ScorerParams& params);

// Non-owning view of one training pair.
struct LabeledPair {
  const Vec* text = nullptr;
  const Vec* span = nullptr;
  double label = 0.0;  // 0 or 1
};

struct MpuGradients {
  ScorerParams grads;  // same shapes as the params
  double loss = 0.0;   // mean binary cross-entropy over the batch
};

// Exact gradients of the mean cross-entropy of the batch.
MpuGradients mpu_gradients(std::span<const LabeledPair> batch, const ScorerParams& params);
double mpu_loss(std::span<const LabeledPair> batch, const ScorerParams& params);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam step on a flat tensor; `step` is the 1-based count
// after this update.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::int64_t step, const AdamConfig& config);

struct AdamState {
  ScorerParams m;
  ScorerParams v;
  std::int64_t step = 0;

  static AdamState for_params(const ScorerParams& params);
};

void adam_step(ScorerParams& params, const ScorerParams& grads, AdamState& state,
               const AdamConfig& config = {});

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t patience_epochs = 15;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  double negative_ratio = 1.0;
  std::size_t common_dim = 256;
  ProjectionActivation activation = ProjectionActivation::Tanh;
};

// Span vectors live in one pool; actions refer to them by index.
struct ScorerExample {
  std::string action_id;
  Vec text;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;  // candidates from the same clip
};

struct ScorerDataset {
  std::vector<Vec> spans;
  std::vector<ScorerExample> actions;

  std::size_t positive_count() const;
};

// All positives plus round(ratio * |positives|) negatives per action, drawn
// without replacement from that action's candidates.
std::vector<LabeledPair> sample_pairs(const ScorerDataset& data, double negative_ratio, std::uint64_t seed);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool best = false;
};

struct TrainResult {
  ScorerParams params;  // best-validation checkpoint
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

// Minibatch Adam on balanced pairs, resampling negatives every epoch, with
// early stopping on validation loss. An empty validation set falls back to
// a fixed sample of the training set. Throws NoPositives.
TrainResult train_scorer(const ScorerDataset& train, const ScorerDataset& validation, const TrainConfig& config);

// "epoch\ttrain_loss\tval_loss\tbest" lines.
std::string format_training_log(const std::vector<EpochLog>& log);

// Fraction of pairs whose score lands on the right side of 0.5.
double pair_accuracy(std::span<const LabeledPair> pairs, const ScorerParams& params);

// SCR1: "SCR1", u32 version, u32 text_dim, u32 video_dim, u32 d, then every
// tensor as row-major little-endian f32 in field order.
std::string encode_scorer(const ScorerParams& params);
ScorerParams decode_scorer(std::string_view bytes);
void save_scorer(const std::filesystem::path& path, const ScorerParams& params);
ScorerParams load_scorer(const std::filesystem::path& path);

double dot_score(const Vec& text, const Vec& span);
double cosine(const Vec& a, const Vec& b);

inline constexpr double kDefaultScaTemperature = 0.1;

// Per word: softmax attention over frames on cosine / temperature, then the
// word's cosine with its attended vector (a weighted sum of unit-length
// frames); averaged over words.
double sca_score(std::span<const Vec> words, std::span<const Vec> frames,
                 double temperature = kDefaultScaTemperature);

struct ActionFeatures {
  Vec text;
  std::vector<Vec> words;  // empty: the sentence vector stands in as the only word
};

// Scores an action against every span of a clip grid.
class SpanScorer {
 public:
  virtual ~SpanScorer() = default;
  virtual std::string_view name() const = 0;
  virtual std::vector<double> score_spans(const ActionFeatures& action, std::span<const Vec> spans) const = 0;
  // Raw scores need per-clip min-max rescaling before a mid-range threshold.
  virtual bool needs_midrange() const = 0;
};

class MpuScorer final : public SpanScorer {
 public:
  explicit MpuScorer(ScorerParams params) : params_(std::move(params)) {}
  std::string_view name() const override { return "mpu"; }
  std::vector<double> score_spans(const ActionFeatures& action, std::span<const Vec> spans) const override;
  bool needs_midrange() const override { return false; }
  const ScorerParams& params() const { return params_; }

 private:
  ScorerParams params_;
};

// Raw dot product, optionally after a fixed text->video projection.
class DotScorer final : public SpanScorer {
 public:
  explicit DotScorer(std::optional<Mat> projection = std::nullopt) : projection_(std::move(projection)) {}
  std::string_view name() const override { return "dot"; }
  std::vector<double> score_spans(const ActionFeatures& action, std::span<const Vec> spans) const override;
  bool needs_midrange() const override { return true; }

 private:
  std::optional<Mat> projection_;
};

// Stacked cross attention. The frames of span k are the grid vectors
// k .. k + frames_per_span - 1 (one per stride step inside the span).
class ScaScorer final : public SpanScorer {
 public:
  ScaScorer(std::optional<Mat> projection, double temperature, std::size_t frames_per_span)
      : projection_(std::move(projection)), temperature_(temperature), frames_per_span_(frames_per_span) {}
  std::string_view name() const override { return "sca"; }
  std::vector<double> score_spans(const ActionFeatures& action, std::span<const Vec> spans) const override;
  bool needs_midrange() const override { return true; }

 private:
  std::optional<Mat> projection_;
  double temperature_;
  std::size_t frames_per_span_;
};

}  // namespace vlogloc
