#include "vlogloc/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "vlogloc/binary_io.hpp"
#include "vlogloc/error.hpp"

namespace vlogloc {

namespace {

Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

template <typename Derived>
std::span<double> view(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Derived>
std::span<const double> view(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

// Row-major ordering for a column-major Eigen matrix.
void write_matrix(io::ByteWriter& out, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.f32(static_cast<float>(m(r, c)));
}

void read_matrix(io::ByteReader& in, Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in.f32();
}

void check_dims(const Vec& text, const Vec& span, const ScorerParams& p) {
  if (static_cast<std::size_t>(text.size()) != p.text_dim() ||
      static_cast<std::size_t>(span.size()) != p.video_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "MPU expects text " + std::to_string(p.text_dim()) + " / video " + std::to_string(p.video_dim()) +
                    ", got " + std::to_string(text.size()) + " / " + std::to_string(span.size()));
  }
}

struct Activations {
  Vec u, w, joint, h;
  double logit = 0.0;
};

Vec activate(const Vec& pre, ProjectionActivation act) {
  return act == ProjectionActivation::Tanh ? Vec(pre.array().tanh()) : pre;
}

Activations forward(const Vec& text, const Vec& span, const ScorerParams& p) {
  const auto d = p.text_proj.cols();
  Activations a;
  a.u = activate(p.text_proj.transpose() * text + p.text_bias, p.activation);
  a.w = activate(p.video_proj.transpose() * span + p.video_bias, p.activation);
  a.joint.resize(2 * d);
  a.joint << a.u, a.w;
  a.h = (p.fusion_weight.transpose() * a.joint + p.fusion_bias).array().tanh();
  a.logit = p.out_weight.segment(0, d).dot(a.u + a.w) +
            p.out_weight.segment(d, d).dot(a.u.cwiseProduct(a.w)) + p.out_weight.segment(2 * d, d).dot(a.h) +
            p.out_bias;
  return a;
}

// Numerically stable log(1 + e^z).
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Cross-entropy of sigmoid(z) against y, written in terms of the logit.
double bce_from_logit(double z, double y) { return softplus(z) - y * z; }

}  // namespace

ScorerParams ScorerParams::zeros(std::size_t text_dim, std::size_t video_dim, std::size_t common_dim) {
  const auto d = idx(common_dim);
  ScorerParams p;
  p.text_proj = Mat::Zero(idx(text_dim), d);
  p.video_proj = Mat::Zero(idx(video_dim), d);
  p.text_bias = Vec::Zero(d);
  p.video_bias = Vec::Zero(d);
  p.fusion_weight = Mat::Zero(2 * d, d);
  p.fusion_bias = Vec::Zero(d);
  p.out_weight = Vec::Zero(3 * d);
  p.out_bias = 0.0;
  return p;
}

ScorerParams ScorerParams::random(std::size_t text_dim, std::size_t video_dim, std::size_t common_dim,
                                  std::uint64_t seed) {
  ScorerParams p = zeros(text_dim, video_dim, common_dim);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](std::span<double> t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, fan_in)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : t) x = dist(rng);
  };
  fill(view(p.text_proj), text_dim);
  fill(view(p.video_proj), video_dim);
  fill(view(p.text_bias), text_dim);
  fill(view(p.video_bias), video_dim);
  fill(view(p.fusion_weight), 2 * common_dim);
  fill(view(p.fusion_bias), 2 * common_dim);
  fill(view(p.out_weight), 3 * common_dim);
  fill(std::span<double>(&p.out_bias, 1), 3 * common_dim);
  return p;
}

std::array<std::span<double>, 8> ScorerParams::tensors() {
  return {view(text_proj), view(video_proj),  view(text_bias), view(video_bias),
          view(fusion_weight), view(fusion_bias), view(out_weight), std::span<double>(&out_bias, 1)};
}

std::array<std::span<const double>, 8> ScorerParams::tensors() const {
  return {view(text_proj), view(video_proj),  view(text_bias), view(video_bias),
          view(fusion_weight), view(fusion_bias), view(out_weight), std::span<const double>(&out_bias, 1)};
}

std::size_t ScorerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double mpu_logit(const Vec& text, const Vec& span, const ScorerParams& params) {
  check_dims(text, span, params);
  return forward(text, span, params).logit;
}

double mpu_forward(const Vec& text, const Vec& span, const ScorerParams& params) {
  return sigmoid(mpu_logit(text, span, params));
}

double mpu_loss(std::span<const LabeledPair> batch, const ScorerParams& params) {
  if (batch.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& pair : batch) loss += bce_from_logit(mpu_logit(*pair.text, *pair.span, params), pair.label);
  return loss / static_cast<double>(batch.size());
}

MpuGradients mpu_gradients(std::span<const LabeledPair> batch, const ScorerParams& p) {
  const auto d = p.text_proj.cols();
  MpuGradients out{ScorerParams::zeros(p.text_dim(), p.video_dim(), p.common_dim()), 0.0};
  out.grads.activation = p.activation;
  if (batch.empty()) return out;
  auto& g = out.grads;
  const double scale = 1.0 / static_cast<double>(batch.size());

  for (const auto& pair : batch) {
    check_dims(*pair.text, *pair.span, p);
    const auto a = forward(*pair.text, *pair.span, p);
    out.loss += bce_from_logit(a.logit, pair.label) * scale;

    const double dz = (sigmoid(a.logit) - pair.label) * scale;
    g.out_bias += dz;
    g.out_weight.segment(0, d) += dz * (a.u + a.w);
    g.out_weight.segment(d, d) += dz * a.u.cwiseProduct(a.w);
    g.out_weight.segment(2 * d, d) += dz * a.h;

    const Vec d_sum = dz * p.out_weight.segment(0, d);
    const Vec d_prod = dz * p.out_weight.segment(d, d);
    const Vec d_h = dz * p.out_weight.segment(2 * d, d);

    const Vec d_fused_pre = d_h.array() * (1.0 - a.h.array().square());
    g.fusion_weight.noalias() += a.joint * d_fused_pre.transpose();
    g.fusion_bias += d_fused_pre;
    const Vec d_joint = p.fusion_weight * d_fused_pre;

    Vec d_u = d_sum + d_prod.cwiseProduct(a.w) + d_joint.segment(0, d);
    Vec d_w = d_sum + d_prod.cwiseProduct(a.u) + d_joint.segment(d, d);
    if (p.activation == ProjectionActivation::Tanh) {
      d_u.array() *= 1.0 - a.u.array().square();
      d_w.array() *= 1.0 - a.w.array().square();
    }
    g.text_proj.noalias() += *pair.text * d_u.transpose();
    g.text_bias += d_u;
    g.video_proj.noalias() += *pair.span * d_w.transpose();
    g.video_bias += d_w;
  }
  return out;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::int64_t step, const AdamConfig& c) {
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

AdamState AdamState::for_params(const ScorerParams& params) {
  AdamState s;
  s.m = ScorerParams::zeros(params.text_dim(), params.video_dim(), params.common_dim());
  s.v = s.m;
  return s;
}

void adam_step(ScorerParams& params, const ScorerParams& grads, AdamState& state, const AdamConfig& config) {
  ++state.step;
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].size() != g[k].size()) throw Error(ErrorCode::DimensionMismatch, "gradient shape differs from params");
    adam_update(p[k], g[k], m[k], v[k], state.step, config);
  }
}

std::size_t ScorerDataset::positive_count() const {
  std::size_t n = 0;
  for (const auto& a : actions) n += a.positives.size();
  return n;
}

std::vector<LabeledPair> sample_pairs(const ScorerDataset& data, double negative_ratio, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledPair> pairs;
  std::vector<std::size_t> pool;
  for (const auto& action : data.actions) {
    if (action.positives.empty()) continue;
    for (auto k : action.positives) pairs.push_back({&action.text, &data.spans[k], 1.0});
    const auto wanted = static_cast<std::size_t>(
        std::llround(negative_ratio * static_cast<double>(action.positives.size())));
    pool = action.negatives;
    const std::size_t take = std::min(wanted, pool.size());
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      pairs.push_back({&action.text, &data.spans[pool[i]], 0.0});
    }
  }
  return pairs;
}

TrainResult train_scorer(const ScorerDataset& train, const ScorerDataset& validation, const TrainConfig& cfg) {
  if (train.positive_count() == 0) throw Error(ErrorCode::NoPositives, "training set has no positive spans");
  if (!(cfg.learning_rate > 0.0) || cfg.batch_size == 0 || cfg.patience_epochs == 0 || cfg.common_dim == 0) {
    throw Error(ErrorCode::Config, "train config needs lr > 0, batch >= 1, patience >= 1, d >= 1");
  }
  const auto& first = train.actions.front();
  const std::size_t text_dim = static_cast<std::size_t>(first.text.size());
  const std::size_t video_dim = train.spans.empty() ? 0 : static_cast<std::size_t>(train.spans.front().size());

  std::mt19937_64 rng(cfg.seed);
  ScorerParams params = ScorerParams::random(text_dim, video_dim, cfg.common_dim, rng());
  params.activation = cfg.activation;
  AdamState state = AdamState::for_params(params);
  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};

  const std::uint64_t val_seed = rng();
  auto val_pairs = sample_pairs(validation, cfg.negative_ratio, val_seed);
  if (val_pairs.empty()) val_pairs = sample_pairs(train, cfg.negative_ratio, val_seed);

  TrainResult result;
  result.params = params;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t stall = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto pairs = sample_pairs(train, cfg.negative_ratio, rng());
    std::shuffle(pairs.begin(), pairs.end(), rng);

    double train_loss = 0.0;
    for (std::size_t b = 0; b < pairs.size(); b += cfg.batch_size) {
      const auto batch = std::span<const LabeledPair>(pairs).subspan(b, std::min(cfg.batch_size, pairs.size() - b));
      const auto grads = mpu_gradients(batch, params);
      train_loss += grads.loss * static_cast<double>(batch.size());
      adam_step(params, grads.grads, state, adam);
    }
    train_loss /= static_cast<double>(pairs.size());
    const double val_loss = mpu_loss(val_pairs, params);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw Error(ErrorCode::NumericFailure, "loss diverged at epoch " + std::to_string(epoch));
    }

    const bool best = val_loss < result.best_val_loss;
    if (best) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.params = params;
      stall = 0;
    } else {
      ++stall;
    }
    result.log.push_back({epoch, train_loss, val_loss, best});
    if (stall >= cfg.patience_epochs) break;
  }
  return result;
}

std::string format_training_log(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch\ttrain_loss\tval_loss\tbest\n";
  for (const auto& e : log) out << e.epoch << '\t' << e.train_loss << '\t' << e.val_loss << '\t' << (e.best ? 1 : 0) << '\n';
  return out.str();
}

double pair_accuracy(std::span<const LabeledPair> pairs, const ScorerParams& params) {
  if (pairs.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& pair : pairs) {
    const bool positive = mpu_forward(*pair.text, *pair.span, params) > 0.5;
    if (positive == (pair.label > 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

std::string encode_scorer(const ScorerParams& p) {
  io::ByteWriter out;
  out.bytes("SCR1");
  out.u32(1);
  out.u32(static_cast<std::uint32_t>(p.text_dim()));
  out.u32(static_cast<std::uint32_t>(p.video_dim()));
  out.u32(static_cast<std::uint32_t>(p.common_dim()));
  write_matrix(out, p.text_proj);
  write_matrix(out, p.video_proj);
  for (double x : p.text_bias) out.f32(static_cast<float>(x));
  for (double x : p.video_bias) out.f32(static_cast<float>(x));
  write_matrix(out, p.fusion_weight);
  for (double x : p.fusion_bias) out.f32(static_cast<float>(x));
  for (double x : p.out_weight) out.f32(static_cast<float>(x));
  out.f32(static_cast<float>(p.out_bias));
  return out.data();
}

ScorerParams decode_scorer(std::string_view bytes) {
  io::ByteReader in{std::string(bytes)};
  if (in.remaining() < 4 || in.bytes(4) != "SCR1") throw Error(ErrorCode::BadMagic, "not an SCR1 checkpoint");
  const auto version = in.u32();
  if (version != 1) throw Error(ErrorCode::BadMagic, "unsupported SCR1 version " + std::to_string(version));
  const auto text_dim = in.u32();
  const auto video_dim = in.u32();
  const auto d = in.u32();
  auto p = ScorerParams::zeros(text_dim, video_dim, d);
  read_matrix(in, p.text_proj);
  read_matrix(in, p.video_proj);
  for (auto& x : p.text_bias) x = in.f32();
  for (auto& x : p.video_bias) x = in.f32();
  read_matrix(in, p.fusion_weight);
  for (auto& x : p.fusion_bias) x = in.f32();
  for (auto& x : p.out_weight) x = in.f32();
  p.out_bias = in.f32();
  if (in.remaining() != 0) throw Error(ErrorCode::DimensionMismatch, "trailing bytes in SCR1 checkpoint");
  return p;
}

void save_scorer(const std::filesystem::path& path, const ScorerParams& params) {
  io::write_file(path, encode_scorer(params));
}

ScorerParams load_scorer(const std::filesystem::path& path) { return decode_scorer(io::read_file(path)); }

double dot_score(const Vec& text, const Vec& span) {
  if (text.size() != span.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dot product of " + std::to_string(text.size()) + " and " +
                                                  std::to_string(span.size()) + " dims");
  }
  return text.dot(span);
}

double cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cosine of unequal dims");
  const double norms = a.norm() * b.norm();
  return norms > 0.0 ? a.dot(b) / norms : 0.0;
}

double sca_score(std::span<const Vec> words, std::span<const Vec> frames, double temperature) {
  if (words.empty() || frames.empty()) throw Error(ErrorCode::EmptyInput, "SCA needs words and frames");
  if (!(temperature > 0.0)) throw Error(ErrorCode::Config, "SCA temperature must be positive");
  std::vector<double> logits(frames.size());
  double total = 0.0;
  for (const auto& word : words) {
    for (std::size_t k = 0; k < frames.size(); ++k) logits[k] = cosine(word, frames[k]) / temperature;
    const double top = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (auto& l : logits) norm += (l = std::exp(l - top));
    // Frames enter the attended vector L2-normalized, so a frame's scale
    // never shifts the result.
    Vec attended = Vec::Zero(frames.front().size());
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const double length = frames[k].norm();
      if (length > 0.0) attended += (logits[k] / norm / length) * frames[k];
    }
    total += cosine(word, attended);
  }
  return total / static_cast<double>(words.size());
}

std::vector<double> MpuScorer::score_spans(const ActionFeatures& action, std::span<const Vec> spans) const {
  std::vector<double> scores;
  scores.reserve(spans.size());
  for (const auto& s : spans) scores.push_back(mpu_forward(action.text, s, params_));
  return scores;
}

namespace {

Vec project(const std::optional<Mat>& projection, const Vec& text) {
  if (!projection) return text;
  if (projection->cols() != text.size()) throw Error(ErrorCode::DimensionMismatch, "projection does not fit text dim");
  return *projection * text;
}

}  // namespace

std::vector<double> DotScorer::score_spans(const ActionFeatures& action, std::span<const Vec> spans) const {
  const Vec text = project(projection_, action.text);
  std::vector<double> scores;
  scores.reserve(spans.size());
  for (const auto& s : spans) scores.push_back(dot_score(text, s));
  return scores;
}

std::vector<double> ScaScorer::score_spans(const ActionFeatures& action, std::span<const Vec> spans) const {
  std::vector<Vec> words;
  if (action.words.empty()) {
    words.push_back(project(projection_, action.text));
  } else {
    for (const auto& w : action.words) words.push_back(project(projection_, w));
  }
  const std::size_t width = std::max<std::size_t>(1, frames_per_span_);
  std::vector<double> scores;
  scores.reserve(spans.size());
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto frames = spans.subspan(k, std::min(width, spans.size() - k));
    scores.push_back(sca_score(words, frames, temperature_));
  }
  return scores;
}

}  // namespace vlogloc
