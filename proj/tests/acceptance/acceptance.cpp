// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Reference values come from brute-force oracles written here, not from the
// library under test.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "json.hpp"
#include "vlogloc/binary_io.hpp"
#include "vlogloc/commands.hpp"
#include "vlogloc/error.hpp"

using namespace vlogloc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vlogloc_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- oracles ---

double iou_by_ticks(std::int64_t a0, std::int64_t a1, std::int64_t b0, std::int64_t b1) {
  std::int64_t inter = 0, uni = 0;
  for (std::int64_t t = std::min(a0, b0); t < std::max(a1, b1); ++t) {
    const bool in_a = t >= a0 && t < a1, in_b = t >= b0 && t < b1;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

double fleiss_direct(const std::vector<std::vector<int>>& counts, int n) {
  const double items = double(counts.size());
  std::vector<double> col(counts[0].size(), 0.0);
  double p_bar = 0.0;
  for (const auto& row : counts) {
    double agree = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      agree += double(row[j]) * (row[j] - 1);
      col[j] += row[j];
    }
    p_bar += agree / (double(n) * (n - 1));
  }
  p_bar /= items;
  double pe = 0.0;
  for (double c : col) pe += (c / (items * n)) * (c / (items * n));
  return (p_bar - pe) / (1.0 - pe);
}

// Coincidence-matrix form over every ordered pair of pairable values.
double alpha_direct(const std::vector<std::vector<std::optional<double>>>& v) {
  std::vector<std::vector<double>> units;
  for (std::size_t i = 0; i < v[0].size(); ++i) {
    std::vector<double> u;
    for (const auto& row : v)
      if (row[i]) u.push_back(*row[i]);
    if (u.size() >= 2) units.push_back(u);
  }
  std::vector<double> all;
  double d_o = 0.0;
  for (const auto& u : units) {
    for (std::size_t a = 0; a < u.size(); ++a)
      for (std::size_t b = 0; b < u.size(); ++b)
        if (a != b) d_o += (u[a] - u[b]) * (u[a] - u[b]) / double(u.size() - 1);
    all.insert(all.end(), u.begin(), u.end());
  }
  const double n = double(all.size());
  double d_e = 0.0;
  for (double a : all)
    for (double b : all) d_e += (a - b) * (a - b);
  return 1.0 - (d_o / n) / (d_e / (n * (n - 1)));
}

// --- criteria ---

Outcome iou_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::int64_t> start(0, 20000), len(0, 10000);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto a0 = start(rng), a1 = a0 + len(rng), b0 = start(rng), b1 = b0 + len(rng);
    const double got = iou(interval_from_ms(a0, a1), interval_from_ms(b0, b1));
    worst = std::max(worst, std::abs(got - iou_by_ticks(a0, a1, b0, b1)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5.0, fmt("max |err| %.3g, %.2f s", worst, secs)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g;
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t d : {2u, 4u, 8u}) {
    for (int draw = 0; draw < 50; ++draw) {
      const std::size_t text_dim = 2 + draw % 4, video_dim = 2 + draw % 3;
      auto p = ScorerParams::random(text_dim, video_dim, d, rng());
      std::vector<Vec> texts, spans;
      for (int i = 0; i < 4; ++i) {
        Vec t(text_dim), s(video_dim);
        for (auto& x : t) x = g(rng);
        for (auto& x : s) x = g(rng);
        texts.push_back(t);
        spans.push_back(s);
      }
      std::vector<LabeledPair> batch;
      for (int i = 0; i < 4; ++i) batch.push_back({&texts[i], &spans[i], double(i % 2)});
      const auto analytic = mpu_gradients(batch, p);
      const auto grads = analytic.grads.tensors();
      auto params = p.tensors();
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t k = 0; k < params[t].size(); ++k) {
          const double keep = params[t][k];
          params[t][k] = keep + h;
          const double up = mpu_loss(batch, p);
          params[t][k] = keep - h;
          const double down = mpu_loss(batch, p);
          params[t][k] = keep;
          const double numeric = (up - down) / (2 * h);
          const double scale = std::max({std::abs(numeric), std::abs(grads[t][k]), 1e-6});
          worst = std::max(worst, std::abs(numeric - grads[t][k]) / scale);
        }
      }
    }
  }
  return {worst <= 1e-4, fmt("max relative error %.3g over 150 draws", worst)};
}

Outcome planted_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = scratch("planted");
  const auto config = parse_run_config(json{
      {"seed", 4},
      {"output_dir", dir.string()},
      {"synthetic", {{"n_clips", 400}, {"signal_gain", 1.0}, {"noise_sigma", 0.1}}},
      {"localizer", {{"routing", "multimodal-only"}}},
      {"scorer", {{"kind", "mpu"}, {"common_dim", 64}}}});
  const auto result = cmd_pipeline(config);
  const double r05 = result.rows.at(0).second.recall.at(0.5);
  const double secs = seconds_since(t0);
  return {r05 >= 80.0 && secs < 300.0,
          fmt("multimodal R@0.5 %.1f%% on %.0f held-out actions, %.1f s", r05,
              double(result.rows.at(0).second.n_actions), secs)};
}

Outcome routing_crossover() {
  const auto dir = scratch("crossover");
  const auto config = parse_run_config(json{{"seed", 7},
                                            {"output_dir", dir.string()},
                                            {"synthetic", {{"n_clips", 200}}},
                                            {"localizer", {{"compare_paths", true}}},
                                            {"scorer", {{"kind", "mpu"}, {"common_dim", 32}}}});
  const auto result = cmd_pipeline(config);
  auto row = [&](const std::string& prefix) -> const MetricsReport& {
    for (const auto& [name, r] : result.rows)
      if (name.rfind(prefix, 0) == 0) return r;
    throw Error(ErrorCode::Config, "missing report row " + prefix);
  };
  auto bucket = [&](const std::string& prefix, std::size_t b) {
    for (const auto& [name, parts] : result.breakdown)
      if (name.rfind(prefix, 0) == 0) return parts.at(b).report ? parts.at(b).report->miou : 0.0;
    throw Error(ErrorCode::Config, "missing breakdown row " + prefix);
  };
  const double align_short = bucket("Transcript", 0), mm_short = bucket("Multimodal", 0);
  const double align_long = bucket("Transcript", 2), mm_long = bucket("Multimodal", 2);
  const double seal = row("2SEAL").miou, best = std::max(row("Transcript").miou, row("Multimodal").miou);
  const bool pass = align_short > mm_short && mm_long > align_long && seal >= best - 1.0;
  return {pass, fmt("0-15s align %.1f vs mm %.1f; 36-60s mm %.1f vs align %.1f", align_short, mm_short, mm_long,
                    align_long) +
                    fmt("; 2SEAL mIoU %.1f vs best single %.1f", seal, best)};
}

Outcome duration_direction() {
  // 74 short / 26 long per 100, two well separated Gaussian clusters.
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g(0.0, 0.6);
  auto draw = [&](std::size_t n, std::vector<Vec>& x, std::vector<DurationClass>& y) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool is_short = i % 100 < 74;
      Vec v(8);
      for (auto& c : v) c = g(rng);
      v[0] += is_short ? 2.0 : -2.0;
      x.push_back(v);
      y.push_back(is_short ? DurationClass::Short : DurationClass::Long);
    }
  };
  std::vector<Vec> train_x, test_x;
  std::vector<DurationClass> train_y, test_y;
  draw(300, train_x, train_y);
  draw(500, test_x, test_y);
  const auto clf = train_duration_clf(train_x, train_y);
  std::vector<bool> pred, gold, majority;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    pred.push_back(predict_duration_class(test_x[i], clf) == DurationClass::Short);
    gold.push_back(test_y[i] == DurationClass::Short);
    majority.push_back(true);
  }
  const auto svm = binary_metrics(pred, gold), base = binary_metrics(majority, gold);
  const double prior = 100.0 * double(std::count(gold.begin(), gold.end(), true)) / double(gold.size());
  const bool pass = svm.accuracy > base.accuracy && svm.f1 > base.f1 && base.accuracy == prior && base.recall == 100.0;
  return {pass, fmt("SVM A %.1f F1 %.1f; majority A %.1f (prior %.1f)", svm.accuracy, svm.f1, base.accuracy, prior) +
                    fmt(" R %.1f F1 %.1f", base.recall, base.f1)};
}

Outcome metric_anchors() {
  std::vector<GoldLabel> gold;
  std::vector<Prediction> exact, hidden;
  for (int i = 0; i < 1000; ++i) {
    const auto id = "a" + std::to_string(i);
    if (i % 1000 < 257) {
      const TimeInterval span{double(i % 40), double(i % 40) + 2.0 + i % 30};
      gold.push_back({id, true, span});
      exact.push_back({id, true, span, 1.0, LocalizationPath::Multimodal});
    } else {
      gold.push_back({id, false, std::nullopt});
      exact.push_back({id, false, std::nullopt, std::nullopt, LocalizationPath::Multimodal});
    }
    hidden.push_back({id, false, std::nullopt, std::nullopt, LocalizationPath::Multimodal});
  }
  const auto good = evaluate(exact, gold), none = evaluate(hidden, gold);
  bool pass = good.va == 100.0 && good.miou == 100.0 && none.miou == 0.0 && std::abs(none.va - 74.3) < 1e-9;
  for (double t : kRecallThresholds) pass = pass && good.recall.at(t) == 100.0 && none.recall.at(t) == 0.0;
  return {pass, fmt("exact: VA %.1f mIoU %.1f; all-not-visible: VA %.1f mIoU %.1f", good.va, good.miou, none.va,
                    none.miou)};
}

Outcome proposal_properties() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const LocalizerConfig cfg;
  std::size_t proposals = 0, violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto clip_len = 3.0 + std::floor(u(rng) * 58.0);
    const auto grid = generate_spans({0.0, clip_len});
    std::vector<double> scores(grid.spans.size());
    const double density = u(rng);
    for (auto& s : scores) s = u(rng) < density ? 0.5 + 0.5 * u(rng) : 0.5 * u(rng);
    const auto props = build_proposals(grid, scores, cfg.span_score_threshold, cfg.merge_gap);
    proposals += props.size();
    for (std::size_t i = 0; i < props.size(); ++i) {
      double best = -1.0, reach = 0.0;
      for (std::size_t m = 0; m < props[i].members.size(); ++m) {
        const auto k = props[i].members[m];
        best = std::max(best, scores[k]);
        if (m > 0 && grid.spans[k].start - reach >= cfg.merge_gap) ++violations;
        reach = m == 0 ? grid.spans[k].end : std::max(reach, grid.spans[k].end);
      }
      if (props[i].score != best) ++violations;
      if (i > 0 && props[i].interval.start - props[i - 1].interval.end < cfg.merge_gap) ++violations;
    }
    const auto kept = nms(props, cfg.nms_iou);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (iou(kept[i].interval, kept[j].interval) > cfg.nms_iou) ++violations;
  }
  return {violations == 0, fmt("%.0f proposals, %.0f violations", double(proposals), double(violations))};
}

Outcome agreement_oracles() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 5.0);
  double worst_kappa = 0.0, worst_alpha = 0.0;
  int kappa_cases = 0, alpha_cases = 0;
  while (kappa_cases < 100) {
    const int raters = 2 + int(u(rng) * 4);                 // 2..5
    const std::size_t items = 2 + std::size_t(u(rng) * 9);  // 2..10
    const std::size_t cats = 2 + std::size_t(u(rng) * 3);
    std::vector<std::vector<int>> counts(items, std::vector<int>(cats, 0));
    for (auto& row : counts)
      for (int r = 0; r < raters; ++r) ++row[std::min(cats - 1, std::size_t(u(rng) * cats))];
    try {
      const double k = fleiss_kappa(counts, raters);
      worst_kappa = std::max(worst_kappa, std::abs(k - fleiss_direct(counts, raters)));
      ++kappa_cases;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateChance) throw;
    }
  }
  while (alpha_cases < 100) {
    const std::size_t annotators = 2 + std::size_t(u(rng) * 4), items = 2 + std::size_t(u(rng) * 9);
    std::vector<std::vector<std::optional<double>>> v(annotators, std::vector<std::optional<double>>(items));
    for (std::size_t i = 0; i < items; ++i) {
      const double truth = 10.0 * g(rng);
      for (auto& row : v)
        if (u(rng) < 0.85) row[i] = std::round(truth + g(rng));
    }
    try {
      const double a = krippendorff_alpha_interval(v);
      worst_alpha = std::max(worst_alpha, std::abs(a - alpha_direct(v)));
      ++alpha_cases;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientPairs) throw;
    }
  }
  const double perfect_kappa = fleiss_kappa({{3, 0}, {0, 3}, {3, 0}}, 3);
  const double perfect_alpha = krippendorff_alpha_interval({{1, 4, 9}, {1, 4, 9}, {1, std::nullopt, 9}});
  const bool pass = worst_kappa <= 1e-12 && worst_alpha <= 1e-12 && perfect_kappa == 1.0 && perfect_alpha == 1.0;
  return {pass, fmt("kappa max |err| %.3g, alpha max |err| %.3g, perfect %.17g / %.17g", worst_kappa, worst_alpha,
                    perfect_kappa, perfect_alpha)};
}

Outcome parser_round_trip() {
  const auto dir = scratch("subtitles");
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<int> gap(0, 4000), len(1, 9000), nwords(1, 8), pick(0, 9);
  const char* vocab[] = {"grab", "my", "Kindle", "and", "wash", "the", "dishes,", "then", "I'm", "ready!"};
  std::size_t files = 0, mismatches = 0;
  for (int f = 0; f < 100; ++f) {
    const auto format = f % 2 ? SubtitleFormat::SRT : SubtitleFormat::WebVTT;
    Transcript t;
    std::int64_t now = gap(rng) * 1000LL;  // some files start past the first hour mark
    for (int c = 0, n = 1 + f % 25; c < n; ++c) {
      now += gap(rng);
      const std::int64_t end = now + len(rng);
      std::string text;
      for (int w = nwords(rng); w > 0; --w) text += std::string(vocab[pick(rng)]) + (w > 1 ? " " : "");
      t.cues.push_back({std::size_t(c + 1), interval_from_ms(now, end), text});
      now = end;
    }
    const auto path = dir / ("v" + std::to_string(f) + (format == SubtitleFormat::SRT ? ".srt" : ".vtt"));
    io::write_file(path, serialize_subtitles(t, format));
    const auto once = parse_subtitles(io::read_file(path), *subtitle_format_for(path));
    const auto twice = parse_subtitles(serialize_subtitles(once, format), format);
    ++files;
    bool ok = once.cues.size() == t.cues.size() && twice.cues.size() == t.cues.size();
    for (std::size_t i = 0; ok && i < t.cues.size(); ++i) {
      ok = to_ms(once.cues[i].interval.start) == to_ms(t.cues[i].interval.start) &&
           to_ms(once.cues[i].interval.end) == to_ms(t.cues[i].interval.end) && once.cues[i].text == t.cues[i].text &&
           twice.cues[i] == once.cues[i];
    }
    mismatches += !ok;
  }
  return {mismatches == 0, fmt("%.0f files, %.0f mismatches", double(files), double(mismatches))};
}

Outcome motion_anchors() {
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<int> px(0, 255);
  auto noise = [&] {
    GrayFrame f{64, 64, std::vector<std::uint8_t>(64 * 64)};
    for (auto& p : f.pixels) p = std::uint8_t(px(rng));
    return f;
  };
  const auto still = noise();
  const auto fixed = motion_filter(FrameSequence{"static", 30.0, std::vector<GrayFrame>(301, still)});
  FrameSequence moving{"noise", 30.0, {}};
  for (int i = 0; i < 301; ++i) moving.frames.push_back(noise());
  const auto busy = motion_filter(moving);
  // Pearson of (0,1,2,3) against (0,2,1,3) is exactly 4/5.
  const GrayFrame a{2, 2, {0, 1, 2, 3}}, b{2, 2, {0, 2, 1, 3}};
  const auto edge = motion_filter(FrameSequence{"edge", 30.0, {a, b, a}}, {1, 0.8});
  const bool pass = fixed.median == 1.0 && fixed.decision == MotionDecision::Drop &&
                    busy.decision == MotionDecision::Keep && edge.median == 0.8 &&
                    edge.decision == MotionDecision::Keep;
  return {pass, fmt("static median %.3f, noise median %.3f, edge median %.17g", fixed.median, busy.median, edge.median)};
}

Outcome determinism() {
  const auto dir = scratch("determinism");
  auto make = [&](const std::string& name) {
    return parse_run_config(json{{"seed", 11},
                                 {"output_dir", (dir / name).string()},
                                 {"synthetic", {{"n_clips", 120}}},
                                 {"localizer", {{"compare_paths", true}}},
                                 {"scorer", {{"common_dim", 16}}}});
  };
  cmd_pipeline(make("first"));
  cmd_pipeline(make("second"));
  std::size_t differing = 0;
  for (const char* f : {"predictions.jsonl", "report.txt", "report.json"}) {
    differing += io::read_file(dir / "first" / f) != io::read_file(dir / "second" / f);
  }
  return {differing == 0, fmt("%.0f of 3 output files differ", double(differing))};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"IoU matches tick-count oracle", iou_oracle},
      {"MPU gradients match finite differences", gradient_check},
      {"planted-signal multimodal recall@0.5", planted_end_to_end},
      {"duration routing crossover", routing_crossover},
      {"duration classifier beats majority", duration_direction},
      {"metric anchors", metric_anchors},
      {"proposal and NMS properties", proposal_properties},
      {"agreement statistics match direct formulas", agreement_oracles},
      {"subtitle parser round trip", parser_round_trip},
      {"motion filter anchors", motion_anchors},
      {"pipeline determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2zu: %s  %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
