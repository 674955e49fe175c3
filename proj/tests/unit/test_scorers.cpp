#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "vlogloc/error.hpp"
#include "vlogloc/features.hpp"
#include "vlogloc/scorers.hpp"

using namespace vlogloc;

namespace {

Vec random_vec(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

// Second implementation of the forward pass, written out element by element.
double forward_oracle(const Vec& t, const Vec& v, const ScorerParams& p) {
  const auto d = p.common_dim();
  std::vector<double> u(d), w(d), h(d);
  for (std::size_t j = 0; j < d; ++j) {
    double su = p.text_bias[j], sw = p.video_bias[j];
    for (Eigen::Index i = 0; i < t.size(); ++i) su += p.text_proj(i, j) * t[i];
    for (Eigen::Index i = 0; i < v.size(); ++i) sw += p.video_proj(i, j) * v[i];
    u[j] = std::tanh(su);
    w[j] = std::tanh(sw);
  }
  for (std::size_t j = 0; j < d; ++j) {
    double s = p.fusion_bias[j];
    for (std::size_t i = 0; i < d; ++i) s += p.fusion_weight(i, j) * u[i] + p.fusion_weight(d + i, j) * w[i];
    h[j] = std::tanh(s);
  }
  double z = p.out_bias;
  for (std::size_t j = 0; j < d; ++j) {
    z += p.out_weight[j] * (u[j] + w[j]) + p.out_weight[d + j] * (u[j] * w[j]) + p.out_weight[2 * d + j] * h[j];
  }
  return 1.0 / (1.0 + std::exp(-z));
}

double softmax_attention_oracle(const std::vector<Vec>& words, const std::vector<Vec>& frames, double temp) {
  double total = 0.0;
  for (const auto& e : words) {
    std::vector<double> logits;
    for (const auto& f : frames) logits.push_back(e.dot(f) / (e.norm() * f.norm()) / temp);
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    Vec a = Vec::Zero(frames[0].size());
    for (std::size_t k = 0; k < frames.size(); ++k) a += (logits[k] / z) * frames[k].normalized();
    total += e.dot(a) / (e.norm() * a.norm());
  }
  return total / static_cast<double>(words.size());
}

ScorerDataset planted_dataset(std::uint64_t seed, std::size_t n_actions, double gain) {
  // One planted map shared by every split; the seed only varies the samples.
  std::mt19937_64 map_rng(1234), rng(seed);
  const Eigen::Index dim = 8;
  Mat m(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r) m.row(r) = random_vec(map_rng, dim).transpose() / std::sqrt(double(dim));
  ScorerDataset ds;
  for (std::size_t a = 0; a < n_actions; ++a) {
    ScorerExample ex;
    ex.action_id = "a" + std::to_string(a);
    ex.text = random_vec(rng, dim);
    for (int k = 0; k < 6; ++k) {
      const bool pos = k < 3;
      Vec v = 0.1 * random_vec(rng, dim);
      if (pos) v += gain * (m * ex.text);
      (pos ? ex.positives : ex.negatives).push_back(ds.spans.size());
      ds.spans.push_back(v);
    }
    ds.actions.push_back(std::move(ex));
  }
  return ds;
}

std::vector<LabeledPair> all_pairs(const ScorerDataset& ds) {
  std::vector<LabeledPair> out;
  for (const auto& a : ds.actions) {
    for (auto i : a.positives) out.push_back({&a.text, &ds.spans[i], 1.0});
    for (auto i : a.negatives) out.push_back({&a.text, &ds.spans[i], 0.0});
  }
  return out;
}

}  // namespace

TEST(MpuForward, ZeroParamsGiveHalf) {
  const auto p = ScorerParams::zeros(3, 5, 4);
  EXPECT_DOUBLE_EQ(mpu_forward(Vec::Ones(3), Vec::Ones(5), p), 0.5);
}

TEST(MpuForward, DeadTextBranchIgnoresText) {
  auto p = ScorerParams::random(3, 5, 4, 1);
  p.text_proj.setZero();
  std::mt19937_64 rng(2);
  const Vec t = random_vec(rng, 3), v = random_vec(rng, 5);
  EXPECT_DOUBLE_EQ(mpu_forward(t, v, p), mpu_forward(7.5 * t, v, p));
}

TEST(MpuForward, MatchesHandRolledOracle) {
  const auto p = ScorerParams::random(6, 5, 4, 17);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const Vec t = random_vec(rng, 6), v = random_vec(rng, 5);
    EXPECT_NEAR(mpu_forward(t, v, p), forward_oracle(t, v, p), 1e-9);
  }
}

TEST(MpuForward, DimensionMismatch) {
  const auto p = ScorerParams::random(3, 5, 4, 1);
  try {
    mpu_forward(Vec::Ones(4), Vec::Ones(5), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(MpuForwardProperty, StrictlyInsideUnitInterval) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto p = ScorerParams::random(4, 4, 3, rng());
    const double s = mpu_forward(random_vec(rng, 4), random_vec(rng, 4), p);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(MpuForward, IdentityActivationIsLinearProjection) {
  auto p = ScorerParams::random(3, 3, 2, 8);
  p.activation = ProjectionActivation::Identity;
  p.fusion_weight.setZero();
  p.fusion_bias.setZero();
  p.out_weight.setZero();
  p.out_weight.head(2).setOnes();  // logit = sum(u + w) + b
  p.out_bias = 0.0;
  const Vec t = Vec::Ones(3), v = Vec::Zero(3);
  const double z = (p.text_proj.transpose() * t + p.text_bias).sum() + p.video_bias.sum();
  EXPECT_NEAR(mpu_logit(t, v, p), z, 1e-12);
}

TEST(MpuGradients, OutputBiasAtZeroLogit) {
  const auto p = ScorerParams::zeros(2, 2, 3);
  const Vec t = Vec::Ones(2), v = Vec::Ones(2);
  const LabeledPair pair{&t, &v, 1.0};
  const auto g = mpu_gradients(std::span<const LabeledPair>(&pair, 1), p);
  EXPECT_NEAR(g.grads.out_bias, -0.5, 1e-15);
  EXPECT_NEAR(g.loss, std::log(2.0), 1e-15);
}

TEST(MpuGradientsProperty, MatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t d : {2u, 4u, 8u}) {
    for (int draw = 0; draw < 5; ++draw) {
      auto p = ScorerParams::random(3, 4, d, rng());
      std::vector<Vec> texts, spans;
      for (int i = 0; i < 4; ++i) {
        texts.push_back(random_vec(rng, 3));
        spans.push_back(random_vec(rng, 4));
      }
      std::vector<LabeledPair> batch;
      for (int i = 0; i < 4; ++i) batch.push_back({&texts[i], &spans[i], double(i % 2)});
      const auto g = mpu_gradients(batch, p);
      auto params = p.tensors();
      const auto grads = g.grads.tensors();
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t k = 0; k < params[t].size(); ++k) {
          const double keep = params[t][k];
          params[t][k] = keep + h;
          const double up = mpu_loss(batch, p);
          params[t][k] = keep - h;
          const double down = mpu_loss(batch, p);
          params[t][k] = keep;
          const double numeric = (up - down) / (2 * h);
          const double rel = std::abs(numeric - grads[t][k]) / std::max({std::abs(numeric), std::abs(grads[t][k]), 1e-6});
          worst = std::max(worst, rel);
        }
      }
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(MpuGradients, StationaryWhenFit) {
  auto p = ScorerParams::zeros(2, 2, 2);
  p.out_bias = 40.0;  // s ~ 1
  const Vec t = Vec::Ones(2), v = Vec::Ones(2);
  const LabeledPair pair{&t, &v, 1.0};
  const auto g = mpu_gradients(std::span<const LabeledPair>(&pair, 1), p);
  double norm = 0.0;
  for (const auto& tensor : g.grads.tensors())
    for (double x : tensor) norm += x * x;
  EXPECT_LT(std::sqrt(norm), 1e-12);
}

TEST(Adam, FirstStepIsSignTimesLr) {
  std::vector<double> p{1.0, -2.0, 0.5}, g{0.3, -4.0, 1e-3}, m(3, 0.0), v(3, 0.0);
  const auto before = p;
  adam_update(p, g, m, v, 1, {});
  for (std::size_t i = 0; i < 3; ++i) {
    const double delta = p[i] - before[i];
    EXPECT_NEAR(delta, -0.001 * g[i] / (std::abs(g[i]) + 1e-8), 1e-12);
    EXPECT_NEAR(std::abs(delta), 0.001, 1e-5);
  }
}

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0}, m(2, 0.0), v(2, 0.0);
  adam_update(p, g, m, v, 1, {});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, TwoStepsClosedForm) {
  const double g = 0.7, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> p{0.0}, grad{g}, m{0.0}, v{0.0};
  const AdamConfig cfg{lr, b1, b2, eps};
  double expected = 0.0, mm = 0.0, vv = 0.0;
  for (int t = 1; t <= 2; ++t) {
    adam_update(p, grad, m, v, t, cfg);
    mm = b1 * mm + (1 - b1) * g;
    vv = b2 * vv + (1 - b2) * g * g;
    const double mhat = mm / (1 - std::pow(b1, t)), vhat = vv / (1 - std::pow(b2, t));
    expected -= lr * mhat / (std::sqrt(vhat) + eps);
    EXPECT_NEAR(m[0], mm, 1e-12);
    EXPECT_NEAR(v[0], vv, 1e-12);
    EXPECT_NEAR(p[0], expected, 1e-12);
  }
  // Constant gradient: both bias-corrected moments equal g and g^2.
  EXPECT_NEAR(p[0], -2 * lr * g / (g + eps), 1e-12);
}

TEST(Adam, StateStepsEveryTensor) {
  auto p = ScorerParams::random(2, 2, 2, 1);
  auto grads = ScorerParams::zeros(2, 2, 2);
  grads.out_bias = 1.0;
  auto state = AdamState::for_params(p);
  const double before = p.out_bias;
  adam_step(p, grads, state, {0.01, 0.9, 0.999, 1e-8});
  EXPECT_EQ(state.step, 1);
  EXPECT_NEAR(p.out_bias, before - 0.01, 1e-9);
}

TEST(SamplePairs, BalancedAndDeterministic) {
  const auto ds = planted_dataset(1, 5, 1.0);
  const auto a = sample_pairs(ds, 1.0, 3), b = sample_pairs(ds, 1.0, 3);
  ASSERT_EQ(a.size(), 30u);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pos += a[i].label > 0.5;
    EXPECT_EQ(a[i].span, b[i].span);
  }
  EXPECT_EQ(pos, 15u);
  EXPECT_EQ(sample_pairs(ds, 0.0, 3).size(), 15u);
}

TEST(TrainScorer, LearnsPlantedSignal) {
  const auto train = planted_dataset(1, 200, 1.0), val = planted_dataset(2, 40, 1.0), test = planted_dataset(3, 60, 1.0);
  TrainConfig cfg;
  cfg.common_dim = 16;
  cfg.max_epochs = 60;
  cfg.seed = 4;
  const auto r = train_scorer(train, val, cfg);
  EXPECT_GE(pair_accuracy(all_pairs(test), r.params), 0.9);
}

TEST(TrainScorer, NoSignalIsChance) {
  const auto train = planted_dataset(1, 200, 0.0), val = planted_dataset(2, 40, 0.0), test = planted_dataset(3, 100, 0.0);
  TrainConfig cfg;
  cfg.common_dim = 8;
  cfg.max_epochs = 40;
  cfg.seed = 4;
  const auto r = train_scorer(train, val, cfg);
  EXPECT_NEAR(pair_accuracy(all_pairs(test), r.params), 0.5, 0.1);
}

TEST(TrainScorer, DeterministicAndBestCheckpoint) {
  const auto train = planted_dataset(5, 60, 1.0), val = planted_dataset(6, 20, 1.0);
  TrainConfig cfg;
  cfg.common_dim = 8;
  cfg.max_epochs = 25;
  cfg.patience_epochs = 5;
  cfg.seed = 9;
  const auto a = train_scorer(train, val, cfg), b = train_scorer(train, val, cfg);
  EXPECT_EQ(encode_scorer(a.params), encode_scorer(b.params));
  ASSERT_FALSE(a.log.empty());
  for (const auto& e : a.log) EXPECT_LE(a.best_val_loss, e.val_loss);
  EXPECT_EQ(a.log[a.best_epoch - 1].val_loss, a.best_val_loss);
  EXPECT_NE(format_training_log(a.log).find("epoch\ttrain_loss\tval_loss\tbest"), std::string::npos);
}

TEST(TrainScorer, NoPositives) {
  ScorerDataset empty;
  try {
    train_scorer(empty, empty, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoPositives);
  }
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  const auto p = ScorerParams::random(3, 5, 4, 21);
  const auto bytes = encode_scorer(p);
  EXPECT_EQ(bytes.substr(0, 4), "SCR1");
  const auto q = decode_scorer(bytes);
  EXPECT_EQ(q.text_dim(), 3u);
  EXPECT_EQ(q.video_dim(), 5u);
  EXPECT_EQ(q.common_dim(), 4u);
  EXPECT_TRUE(q.fusion_weight.isApprox(p.fusion_weight, 1e-6));
  EXPECT_NEAR(q.out_bias, p.out_bias, 1e-6);
  EXPECT_EQ(encode_scorer(q), bytes);
  EXPECT_THROW(decode_scorer("SCR0" + bytes.substr(4)), Error);
  EXPECT_THROW(decode_scorer(bytes.substr(0, bytes.size() - 1)), Error);
}

TEST(DotScore, Examples) {
  Vec a(2), b(2);
  a << 1, 0;
  EXPECT_DOUBLE_EQ(dot_score(a, a), 1.0);
  b << 0, 1;
  EXPECT_DOUBLE_EQ(dot_score(a, b), 0.0);
  a << 1, 2;
  b << 3, -1;
  EXPECT_DOUBLE_EQ(dot_score(a, b), 1.0);
  EXPECT_THROW(dot_score(a, Vec::Ones(3)), Error);
}

TEST(DotScoreProperty, Bilinear) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const Vec t = random_vec(rng, 5), v = random_vec(rng, 5);
    const double alpha = random_vec(rng, 1)[0];
    EXPECT_NEAR(dot_score(alpha * t, v), alpha * dot_score(t, v), 1e-12);
  }
}

TEST(ScaScore, SingletonIsCosine) {
  std::mt19937_64 rng(7);
  const Vec w = random_vec(rng, 4), f = random_vec(rng, 4);
  const std::vector<Vec> words{w}, frames{f};
  EXPECT_NEAR(sca_score(words, frames), cosine(w, f), 1e-12);
}

TEST(ScaScore, OrthogonalIsZero) {
  const std::vector<Vec> words{Vec::Unit(4, 0)};
  const std::vector<Vec> frames{Vec::Unit(4, 1), Vec::Unit(4, 2), Vec::Unit(4, 3)};
  EXPECT_NEAR(sca_score(words, frames), 0.0, 1e-12);
}

TEST(ScaScore, MatchesDirectOracle) {
  std::vector<Vec> words(2, Vec(4)), frames(3, Vec(4));
  words[0] << 1, 0.5, -0.2, 0.3;
  words[1] << -0.4, 1, 0.7, 0;
  frames[0] << 0.2, 0.1, 0.9, -0.5;
  frames[1] << 1, 1, 0, 0.3;
  frames[2] << -0.6, 0.4, 0.2, 0.8;
  EXPECT_NEAR(sca_score(words, frames, 0.1), softmax_attention_oracle(words, frames, 0.1), 1e-9);
  EXPECT_NEAR(sca_score(words, frames, 1.0), softmax_attention_oracle(words, frames, 1.0), 1e-9);
}

TEST(ScaScoreProperty, FrameRescalingInvariant) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 30; ++i) {
    std::vector<Vec> words{random_vec(rng, 5), random_vec(rng, 5)};
    std::vector<Vec> frames{random_vec(rng, 5), random_vec(rng, 5), random_vec(rng, 5)};
    const double before = sca_score(words, frames);
    frames[i % 3] *= 0.01 + std::abs(random_vec(rng, 1)[0]) * 20.0;
    EXPECT_NEAR(sca_score(words, frames), before, 1e-9);
  }
}

TEST(ScaScore, Errors) {
  const std::vector<Vec> none, one{Vec::Ones(3)};
  try {
    sca_score(none, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  EXPECT_THROW(sca_score(one, none), Error);
}

TEST(Scorers, DotScorerAppliesProjection) {
  Mat m(2, 3);
  m << 1, 0, 0, 0, 0, 2;
  const DotScorer scorer(m);
  ActionFeatures f{Vec::Ones(3), {}};
  Vec s(2);
  s << 1, 1;
  const std::vector<Vec> spans{s};
  EXPECT_DOUBLE_EQ(scorer.score_spans(f, spans)[0], 3.0);
  EXPECT_TRUE(scorer.needs_midrange());
}

TEST(Scorers, ScaScorerUsesFollowingFrames) {
  const ScaScorer scorer(std::nullopt, 0.1, 2);
  ActionFeatures f{Vec::Unit(2, 0), {}};
  const std::vector<Vec> spans{Vec::Unit(2, 1), Vec::Unit(2, 0), Vec::Unit(2, 1)};
  const auto scores = scorer.score_spans(f, spans);
  ASSERT_EQ(scores.size(), 3u);
  const std::vector<Vec> words{f.text};
  EXPECT_NEAR(scores[0], sca_score(words, std::span<const Vec>(spans).subspan(0, 2)), 1e-12);
  EXPECT_NEAR(scores[2], 0.0, 1e-12);  // last span sees only its own frame
}

TEST(Scorers, MpuScorerMatchesForward) {
  const auto p = ScorerParams::random(3, 3, 2, 5);
  const MpuScorer scorer(p);
  ActionFeatures f{Vec::Ones(3), {}};
  const std::vector<Vec> spans{Vec::Zero(3), Vec::Ones(3)};
  const auto scores = scorer.score_spans(f, spans);
  EXPECT_DOUBLE_EQ(scores[1], mpu_forward(f.text, spans[1], p));
  EXPECT_FALSE(scorer.needs_midrange());
}
