#include "vlogloc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <thread>

#include "vlogloc/binary_io.hpp"
#include "vlogloc/error.hpp"

namespace vlogloc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

std::optional<Split> SplitSpec::split_of(const std::string& channel) const {
  if (train.count(channel)) return Split::Train;
  if (validation.count(channel)) return Split::Validation;
  if (test.count(channel)) return Split::Test;
  return std::nullopt;
}

void validate_split(const SplitSpec& split, const std::vector<ManifestRecord>& manifest) {
  auto check_disjoint = [](const std::set<std::string>& a, const std::set<std::string>& b, std::string_view an,
                           std::string_view bn) {
    for (const auto& c : a) {
      if (b.count(c)) {
        throw Error(ErrorCode::Config,
                    "channel '" + c + "' is in both " + std::string(an) + " and " + std::string(bn) + " splits");
      }
    }
  };
  check_disjoint(split.train, split.validation, "train", "validation");
  check_disjoint(split.train, split.test, "train", "test");
  check_disjoint(split.validation, split.test, "validation", "test");
  for (const auto& r : manifest) {
    if (!split.split_of(r.channel())) {
      throw Error(ErrorCode::Config, "channel '" + r.channel() + "' of action '" + r.action_id + "' has no split");
    }
  }
}

SplitSpec split_by_fraction(const std::vector<ManifestRecord>& manifest, double train, double validation) {
  if (train < 0.0 || validation < 0.0 || train + validation > 1.0) {
    throw Error(ErrorCode::Config, "split fractions must be non-negative and sum to at most 1");
  }
  std::set<std::string> channels;
  for (const auto& r : manifest) channels.insert(r.channel());
  const double n = static_cast<double>(channels.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train * n));
  const auto n_val = std::min(channels.size() - std::min(channels.size(), n_train),
                              static_cast<std::size_t>(std::llround(validation * n)));
  SplitSpec spec;
  std::size_t k = 0;
  for (const auto& c : channels) {
    if (k < n_train) spec.train.insert(c);
    else if (k < n_train + n_val) spec.validation.insert(c);
    else spec.test.insert(c);
    ++k;
  }
  return spec;
}

bool is_positive_span(const TimeInterval& span, const TimeInterval& gold, const LabelingOptions& options) {
  if (options.rule == PositiveRule::Iou) return iou(span, gold) >= options.threshold;
  if (span.duration() <= 0.0) return gold.start <= span.start && span.end <= gold.end;
  return intersection_length(span, gold) / span.duration() >= options.threshold;
}

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::Mpu: return "mpu";
    case ScorerKind::Dot: return "dot";
    case ScorerKind::Sca: return "sca";
  }
  return "?";
}

std::optional<ScorerKind> parse_scorer_kind(std::string_view text) {
  if (text == "mpu") return ScorerKind::Mpu;
  if (text == "dot") return ScorerKind::Dot;
  if (text == "sca") return ScorerKind::Sca;
  return std::nullopt;
}

namespace {

// Reads one JSON object, tracking which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw Error(ErrorCode::Config, "'" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Config, name_ + "." + key + ": " + e.what());
    }
  }

  void path(const char* key, fs::path& out, const fs::path& base) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = resolve(s, base);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw Error(ErrorCode::Config, "unknown key '" + name_ + "." + item.key() + "'");
    }
  }

  static fs::path resolve(const std::string& s, const fs::path& base) {
    fs::path p(s);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

ProjectionActivation parse_activation(const std::string& s) {
  if (s == "tanh") return ProjectionActivation::Tanh;
  if (s == "identity" || s == "linear") return ProjectionActivation::Identity;
  throw Error(ErrorCode::Config, "unknown activation '" + s + "' (tanh, identity)");
}

std::string activation_name(ProjectionActivation a) {
  return a == ProjectionActivation::Tanh ? "tanh" : "identity";
}

void validate_config(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::Config, what);
  };
  require(c.threads >= 1, "threads must be >= 1");
  require(c.span_len > 0.0 && c.stride > 0.0, "span length and stride must be positive");
  require(c.segment.max_len > 0.0 && c.segment.pad >= 0.0, "segment max_len must be positive, pad >= 0");
  require(c.train.learning_rate > 0.0, "learning_rate must be positive");
  require(c.train.batch_size >= 1, "batch_size must be >= 1");
  require(c.train.patience_epochs >= 1, "patience_epochs must be >= 1");
  require(c.train.common_dim >= 1, "common_dim must be >= 1");
  require(c.train.negative_ratio >= 0.0, "negative_ratio must be >= 0");
  require(c.labeling.threshold > 0.0 && c.labeling.threshold <= 1.0, "positive_threshold must be in (0, 1]");
  require(c.sca_temperature > 0.0, "sca_temperature must be positive");
  require(c.svm.c > 0.0, "duration C must be positive");
  require(!c.svm.gamma || *c.svm.gamma > 0.0, "duration gamma must be positive");
  c.localizer.validate();
  if (!c.synthetic) {
    require(!c.manifest.empty(), "data.manifest is required without a synthetic section");
    require(!c.text_embeddings.empty(), "data.text_embeddings is required without a synthetic section");
    require(!c.video_embeddings.empty(), "data.video_embeddings is required without a synthetic section");
  }
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  Section top(doc, "config");
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.path("output_dir", c.output_dir, base_dir);

  if (const auto* j = top.child("data")) {
    Section s(*j, "data");
    s.path("manifest", c.manifest, base_dir);
    s.path("clips", c.clips, base_dir);
    s.path("text_embeddings", c.text_embeddings, base_dir);
    s.path("video_embeddings", c.video_embeddings, base_dir);
    s.path("word_embeddings", c.word_embeddings, base_dir);
    s.path("projection", c.projection, base_dir);
    s.get("text_variant", c.text_variant);
    s.finish();
  }
  if (const auto* j = top.child("synthetic")) {
    Section s(*j, "synthetic");
    SyntheticConfig sc;
    s.get("n_clips", sc.n_clips);
    s.get("clip_len", sc.clip_len);
    s.get("text_dim", sc.text_dim);
    s.get("video_dim", sc.video_dim);
    s.get("signal_gain", sc.signal_gain);
    s.get("noise_sigma", sc.noise_sigma);
    s.get("nonvisible_fraction", sc.nonvisible_fraction);
    s.get("long_fraction", sc.long_fraction);
    s.get("short_min", sc.short_min);
    s.get("short_max", sc.short_max);
    s.get("long_min", sc.long_min);
    s.get("long_max", sc.long_max);
    s.get("duration_cue", sc.duration_cue);
    s.get("sync_jitter", sc.sync_jitter);
    s.get("long_cue_min", sc.long_cue_min);
    s.get("long_cue_max", sc.long_cue_max);
    s.get("long_drift", sc.long_drift);
    s.get("n_channels", sc.n_channels);
    s.finish();
    c.synthetic = sc;
  }
  if (const auto* j = top.child("split")) {
    Section s(*j, "split");
    std::vector<std::string> train, validation, test;
    s.get("train", train);
    s.get("validation", validation);
    s.get("test", test);
    s.get("train_fraction", c.train_fraction);
    s.get("validation_fraction", c.validation_fraction);
    s.finish();
    if (!train.empty() || !validation.empty() || !test.empty()) {
      SplitSpec spec;
      spec.train.insert(train.begin(), train.end());
      spec.validation.insert(validation.begin(), validation.end());
      spec.test.insert(test.begin(), test.end());
      c.split = spec;
    }
  }
  if (const auto* j = top.child("segment")) {
    Section s(*j, "segment");
    s.get("max_len", c.segment.max_len);
    s.get("pad", c.segment.pad);
    s.finish();
  }
  if (const auto* j = top.child("spans")) {
    Section s(*j, "spans");
    s.get("length", c.span_len);
    s.get("stride", c.stride);
    s.finish();
  }
  if (const auto* j = top.child("localizer")) {
    Section s(*j, "localizer");
    s.get("duration_threshold", c.localizer.duration_threshold);
    s.get("span_score_threshold", c.localizer.span_score_threshold);
    s.get("merge_gap", c.localizer.merge_gap);
    s.get("nms_iou", c.localizer.nms_iou);
    std::string routing;
    s.get("routing", routing);
    if (!routing.empty()) {
      const auto mode = parse_routing_mode(routing);
      if (!mode) throw Error(ErrorCode::Config, "unknown routing '" + routing + "'");
      c.routing = *mode;
    }
    s.get("compare_paths", c.compare_paths);
    s.finish();
  }
  if (const auto* j = top.child("scorer")) {
    Section s(*j, "scorer");
    std::string kind, activation, rule;
    s.get("kind", kind);
    if (!kind.empty()) {
      const auto k = parse_scorer_kind(kind);
      if (!k) throw Error(ErrorCode::Config, "unknown scorer '" + kind + "'");
      c.scorer = *k;
    }
    s.path("checkpoint", c.scorer_checkpoint, base_dir);
    s.get("common_dim", c.train.common_dim);
    s.get("activation", activation);
    if (!activation.empty()) c.train.activation = parse_activation(activation);
    s.get("sca_temperature", c.sca_temperature);
    s.get("positive_rule", rule);
    if (rule == "iou") c.labeling.rule = PositiveRule::Iou;
    else if (rule == "coverage" || rule.empty()) c.labeling.rule = PositiveRule::Coverage;
    else throw Error(ErrorCode::Config, "unknown positive_rule '" + rule + "' (coverage, iou)");
    s.get("positive_threshold", c.labeling.threshold);
    s.finish();
  }
  if (const auto* j = top.child("train")) {
    Section s(*j, "train");
    s.get("learning_rate", c.train.learning_rate);
    s.get("batch_size", c.train.batch_size);
    s.get("patience_epochs", c.train.patience_epochs);
    s.get("max_epochs", c.train.max_epochs);
    s.get("negative_ratio", c.train.negative_ratio);
    s.finish();
  }
  if (const auto* j = top.child("duration")) {
    Section s(*j, "duration");
    s.path("checkpoint", c.duration_checkpoint, base_dir);
    s.get("c", c.svm.c);
    double gamma = 0.0;
    s.get("gamma", gamma);
    if (gamma != 0.0) c.svm.gamma = gamma;
    s.get("balanced_class_weights", c.svm.balanced_class_weights);
    s.get("tolerance", c.svm.tolerance);
    s.get("max_passes", c.svm.max_passes);
    s.finish();
  }
  top.finish();
  validate_config(c);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  const auto text = io::read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir.generic_string();
  j["data"] = {{"manifest", c.manifest.generic_string()},
               {"clips", c.clips.generic_string()},
               {"text_embeddings", c.text_embeddings.generic_string()},
               {"video_embeddings", c.video_embeddings.generic_string()},
               {"word_embeddings", c.word_embeddings.generic_string()},
               {"projection", c.projection.generic_string()},
               {"text_variant", c.text_variant}};
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    j["synthetic"] = {{"n_clips", s.n_clips},
                      {"clip_len", s.clip_len},
                      {"text_dim", s.text_dim},
                      {"video_dim", s.video_dim},
                      {"signal_gain", s.signal_gain},
                      {"noise_sigma", s.noise_sigma},
                      {"nonvisible_fraction", s.nonvisible_fraction},
                      {"long_fraction", s.long_fraction},
                      {"short_min", s.short_min},
                      {"short_max", s.short_max},
                      {"long_min", s.long_min},
                      {"long_max", s.long_max},
                      {"duration_cue", s.duration_cue},
                      {"sync_jitter", s.sync_jitter},
                      {"long_cue_min", s.long_cue_min},
                      {"long_cue_max", s.long_cue_max},
                      {"long_drift", s.long_drift},
                      {"n_channels", s.n_channels}};
  }
  json split = {{"train_fraction", c.train_fraction}, {"validation_fraction", c.validation_fraction}};
  if (c.split) {
    split["train"] = c.split->train;
    split["validation"] = c.split->validation;
    split["test"] = c.split->test;
  }
  j["split"] = split;
  j["segment"] = {{"max_len", c.segment.max_len}, {"pad", c.segment.pad}};
  j["spans"] = {{"length", c.span_len}, {"stride", c.stride}};
  j["localizer"] = {{"duration_threshold", c.localizer.duration_threshold},
                    {"span_score_threshold", c.localizer.span_score_threshold},
                    {"merge_gap", c.localizer.merge_gap},
                    {"nms_iou", c.localizer.nms_iou},
                    {"routing", std::string(to_string(c.routing))},
                    {"compare_paths", c.compare_paths}};
  j["scorer"] = {{"kind", std::string(to_string(c.scorer))},
                 {"checkpoint", c.scorer_checkpoint.generic_string()},
                 {"common_dim", c.train.common_dim},
                 {"activation", activation_name(c.train.activation)},
                 {"sca_temperature", c.sca_temperature},
                 {"positive_rule", c.labeling.rule == PositiveRule::Iou ? "iou" : "coverage"},
                 {"positive_threshold", c.labeling.threshold}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"patience_epochs", c.train.patience_epochs},
                {"max_epochs", c.train.max_epochs},
                {"negative_ratio", c.train.negative_ratio}};
  j["duration"] = {{"checkpoint", c.duration_checkpoint.generic_string()},
                   {"c", c.svm.c},
                   {"gamma", c.svm.gamma ? json(*c.svm.gamma) : json(nullptr)},
                   {"balanced_class_weights", c.svm.balanced_class_weights},
                   {"tolerance", c.svm.tolerance},
                   {"max_passes", c.svm.max_passes}};
  return j;
}

std::string config_hash(const RunConfig& config) {
  auto j = run_config_to_json(config);
  j.erase("output_dir");
  j.erase("threads");
  const auto text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::size_t> Workspace::actions_in(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i].split == split) out.push_back(i);
  }
  return out;
}

std::string Workspace::text_id(const std::string& action_id, const std::string& variant) const {
  return variant.empty() ? action_id : action_id + ":" + variant;
}

Workspace load_workspace(const RunConfig& config) {
  Workspace ws;
  bool have_clips = false;
  if (config.synthetic) {
    auto sc = *config.synthetic;
    sc.seed = config.seed;
    sc.span_len = config.span_len;
    sc.stride = config.stride;
    auto data = synth_generate(sc);
    write_synthetic(config.output_dir / "data", data);
    ws.manifest = std::move(data.manifest);
    ws.clips = std::move(data.clips);
    ws.text = std::move(data.text);
    ws.video = std::move(data.video);
    ws.projection = std::move(data.projection);
    have_clips = true;
  } else {
    ws.manifest = read_manifest(config.manifest);
    if (!config.clips.empty()) {
      ws.clips = read_clips(config.clips);
      have_clips = true;
    }
    ws.text = load_embeddings(config.text_embeddings, Modality::Text);
    ws.video = load_embeddings(config.video_embeddings, Modality::VideoSpan);
    if (!config.word_embeddings.empty()) ws.words = load_embeddings(config.word_embeddings, Modality::Text);
    if (!config.projection.empty()) ws.projection = projection_from_table(load_embeddings(config.projection));
  }
  if (ws.manifest.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no actions");

  ws.videos = group_by_video(ws.manifest);
  if (!have_clips) {
    for (const auto& v : ws.videos) {
      auto clips = segment_video(v.transcript, v.actions, config.segment);
      ws.clips.insert(ws.clips.end(), clips.begin(), clips.end());
    }
  }
  std::map<std::string, std::size_t> clip_by_id, clip_by_action;
  for (std::size_t i = 0; i < ws.clips.size(); ++i) {
    const auto& clip = ws.clips[i];
    if (!clip_by_id.emplace(clip.clip_id, i).second) {
      throw Error(ErrorCode::DuplicateId, "clip '" + clip.clip_id + "' listed twice");
    }
    for (const auto& a : clip.action_ids) clip_by_action.emplace(a, i);
    ws.grids.push_back(generate_spans(clip.interval, config.span_len, config.stride, clip.clip_id));
  }

  ws.split = config.split ? *config.split
                          : split_by_fraction(ws.manifest, config.train_fraction, config.validation_fraction);
  validate_split(ws.split, ws.manifest);

  ws.actions.resize(ws.manifest.size());
  for (std::size_t v = 0; v < ws.videos.size(); ++v) {
    const auto& va = ws.videos[v];
    for (std::size_t a = 0; a < va.actions.size(); ++a) {
      const auto record = va.record_indices[a];
      const auto& rec = ws.manifest[record];
      Workspace::ActionRef ref{record, v, a, std::nullopt, *ws.split.split_of(rec.channel())};
      if (auto it = clip_by_action.find(rec.action_id); it != clip_by_action.end()) {
        ref.clip = it->second;
      } else if (auto jt = clip_by_id.find(rec.clip_id); jt != clip_by_id.end()) {
        ref.clip = jt->second;
      }
      ws.actions[record] = ref;
    }
  }
  return ws;
}

ActionFeatures action_features(const Workspace& ws, const std::string& action_id, const std::string& variant) {
  ActionFeatures f;
  f.text = ws.text.vector(ws.text_id(action_id, variant));
  if (ws.words) {
    for (std::size_t k = 0;; ++k) {
      const auto id = action_id + ":w" + std::to_string(k);
      if (!ws.words->contains(id)) break;
      f.words.push_back(ws.words->vector(id));
    }
  }
  return f;
}

ScorerDataset build_scorer_dataset(const Workspace& ws, Split split, const RunConfig& config) {
  ScorerDataset ds;
  std::map<std::size_t, std::size_t> pool_offset;  // clip -> first pool index
  for (auto idx : ws.actions_in(split)) {
    const auto& ref = ws.actions[idx];
    const auto& rec = ws.manifest[ref.record];
    const auto gold = rec.gold();
    if (!rec.gold_visible.value_or(false) || !gold || !ref.clip) continue;
    const auto text_id = ws.text_id(rec.action_id, config.text_variant);
    if (!ws.text.contains(text_id)) continue;
    const auto& grid = ws.grids[*ref.clip];

    auto it = pool_offset.find(*ref.clip);
    if (it == pool_offset.end()) {
      std::vector<Vec> vectors;
      try {
        vectors = gather_span_vectors(grid, ws.video);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::MissingEmbedding) throw;
        continue;
      }
      it = pool_offset.emplace(*ref.clip, ds.spans.size()).first;
      for (auto& v : vectors) ds.spans.push_back(std::move(v));
    }

    ScorerExample ex;
    ex.action_id = rec.action_id;
    ex.text = ws.text.vector(text_id);
    for (std::size_t k = 0; k < grid.spans.size(); ++k) {
      (is_positive_span(grid.spans[k], *gold, config.labeling) ? ex.positives : ex.negatives).push_back(it->second + k);
    }
    if (!ex.positives.empty()) ds.actions.push_back(std::move(ex));
  }
  return ds;
}

DurationClassifier train_duration_stage(const Workspace& ws, const RunConfig& config) {
  std::vector<Vec> texts;
  std::vector<DurationClass> labels;
  for (auto idx : ws.actions_in(Split::Train)) {
    const auto& rec = ws.manifest[ws.actions[idx].record];
    const auto gold = rec.gold();
    const auto id = ws.text_id(rec.action_id, config.text_variant);
    if (!rec.gold_visible.value_or(false) || !gold || !ws.text.contains(id)) continue;
    texts.push_back(ws.text.vector(id));
    labels.push_back(classify_duration(*gold, config.localizer.duration_threshold));
  }
  return train_duration_clf(texts, labels, config.svm);
}

TrainResult train_scorer_stage(const Workspace& ws, const RunConfig& config) {
  const auto train = build_scorer_dataset(ws, Split::Train, config);
  const auto validation = build_scorer_dataset(ws, Split::Validation, config);
  auto tc = config.train;
  tc.seed = config.seed;
  return train_scorer(train, validation, tc);
}

std::unique_ptr<SpanScorer> make_scorer(const Workspace& ws, const RunConfig& config,
                                        std::optional<ScorerParams> params) {
  switch (config.scorer) {
    case ScorerKind::Mpu:
      if (!params) throw Error(ErrorCode::Config, "the mpu scorer needs trained parameters");
      params->activation = config.train.activation;
      return std::make_unique<MpuScorer>(std::move(*params));
    case ScorerKind::Dot:
      return std::make_unique<DotScorer>(ws.projection);
    case ScorerKind::Sca: {
      const auto frames = static_cast<std::size_t>(std::max(1.0, std::round(config.span_len / config.stride)));
      return std::make_unique<ScaScorer>(ws.projection, config.sca_temperature, frames);
    }
  }
  throw Error(ErrorCode::Config, "unknown scorer");
}

std::vector<Prediction> localize_actions(const Workspace& ws, const std::vector<std::size_t>& actions,
                                         const DurationClassifier* clf, const SpanScorer* scorer,
                                         const RunConfig& config, RoutingMode mode,
                                         std::vector<std::string>* warnings) {
  if (mode != RoutingMode::AlignOnly && scorer == nullptr) {
    throw Error(ErrorCode::Config, std::string(to_string(mode)) + " routing needs a span scorer");
  }
  // Span vectors are gathered once per clip up front; workers only read.
  std::map<std::size_t, std::optional<std::vector<Vec>>> span_cache;
  for (auto idx : actions) {
    const auto& ref = ws.actions.at(idx);
    if (!ref.clip || span_cache.count(*ref.clip)) continue;
    try {
      span_cache[*ref.clip] = gather_span_vectors(ws.grids[*ref.clip], ws.video);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingEmbedding) throw;
      span_cache[*ref.clip] = std::nullopt;
    }
  }

  std::vector<Prediction> out(actions.size());
  std::vector<std::string> notes(actions.size());
  std::vector<std::exception_ptr> errors(actions.size());

  auto run_one = [&](std::size_t slot) {
    const auto& ref = ws.actions[actions[slot]];
    const auto& va = ws.videos[ref.video];
    const auto& mention = va.actions[ref.action];
    const Prediction hidden{mention.id, false, std::nullopt, std::nullopt, LocalizationPath::Multimodal};

    if (mode == RoutingMode::AlignOnly) {
      out[slot] = align_prediction(mention, va.transcript);
      return;
    }
    const auto text_id = ws.text_id(mention.id, config.text_variant);
    if (!ws.text.contains(text_id)) {
      out[slot] = hidden;
      notes[slot] = "no text embedding for '" + text_id + "'; predicted not visible";
      return;
    }
    const auto features = action_features(ws, mention.id, config.text_variant);
    const std::vector<Vec>* spans = nullptr;
    if (ref.clip) {
      if (const auto& cached = span_cache.at(*ref.clip)) spans = &*cached;
    }
    if (spans == nullptr) {
      const bool align = mode == RoutingMode::TwoSeal && clf != nullptr &&
                         predict_duration_class(features.text, *clf) == DurationClass::Short;
      if (align) {
        out[slot] = align_prediction(mention, va.transcript);
      } else {
        out[slot] = hidden;
        notes[slot] = ref.clip ? "missing span embeddings for clip '" + ws.clips[*ref.clip].clip_id +
                                     "'; '" + mention.id + "' predicted not visible"
                               : "no clip for '" + mention.id + "'; predicted not visible";
      }
      return;
    }
    out[slot] = two_seal(mention, va.transcript, features, ws.grids[*ref.clip], *spans, clf, *scorer,
                         config.localizer, mode);
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(config.threads, actions.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t slot; (slot = next.fetch_add(1)) < actions.size();) {
      try {
        run_one(slot);
      } catch (...) {
        errors[slot] = std::current_exception();
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (warnings) {
    for (auto& n : notes) {
      if (!n.empty()) warnings->push_back(std::move(n));
    }
  }
  return out;
}

std::vector<GoldLabel> gold_for(const Workspace& ws, const std::vector<std::size_t>& actions) {
  std::vector<ManifestRecord> records;
  records.reserve(actions.size());
  for (auto idx : actions) records.push_back(ws.manifest[ws.actions.at(idx).record]);
  return gold_from_manifest(records);
}

namespace {

std::string strip_code(const std::string& what) {
  const auto pos = what.find(": ");
  return pos == std::string::npos ? what : what.substr(pos + 2);
}

template <class F>
auto stage(std::string_view name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), "stage '" + std::string(name) + "': " + strip_code(e.what()));
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::Io, "stage '" + std::string(name) + "': " + e.what());
  }
}

std::string method_name(RoutingMode mode, ScorerKind scorer) {
  switch (mode) {
    case RoutingMode::TwoSeal: return "2SEAL (" + std::string(to_string(scorer)) + ")";
    case RoutingMode::AlignOnly: return "Transcript alignment";
    case RoutingMode::MultimodalOnly: return "Multimodal (" + std::string(to_string(scorer)) + ")";
  }
  return "?";
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config) {
  PipelineResult result;
  fs::create_directories(config.output_dir);

  const auto ws = stage("load", [&] { return load_workspace(config); });
  if (!config.synthetic && config.clips.empty()) {
    stage("segment", [&] { write_clips(config.output_dir / "clips.jsonl", ws.clips); });
  }

  const bool need_clf = config.routing == RoutingMode::TwoSeal || config.compare_paths;
  const bool need_scorer = config.routing != RoutingMode::AlignOnly || config.compare_paths;

  std::optional<DurationClassifier> clf;
  if (need_clf) {
    clf = stage("train-duration", [&] {
      if (!config.duration_checkpoint.empty()) return load_duration_clf(config.duration_checkpoint);
      const auto bytes = encode_duration_clf(train_duration_stage(ws, config));
      io::write_file(config.output_dir / "duration.svm", bytes);
      return decode_duration_clf(bytes);
    });
  }

  std::optional<ScorerParams> params;
  std::optional<TrainResult> training;
  if (need_scorer && config.scorer == ScorerKind::Mpu) {
    params = stage("train-scorer", [&] {
      if (!config.scorer_checkpoint.empty()) return load_scorer(config.scorer_checkpoint);
      training = train_scorer_stage(ws, config);
      const auto bytes = encode_scorer(training->params);
      io::write_file(config.output_dir / "scorer.scr", bytes);
      io::write_file(config.output_dir / "training_log.tsv", format_training_log(training->log));
      // Localize with the stored float32 weights so a reload reproduces this run.
      return decode_scorer(bytes);
    });
  }
  std::unique_ptr<SpanScorer> scorer;
  if (need_scorer) scorer = stage("scorer", [&] { return make_scorer(ws, config, params); });

  const auto test = ws.actions_in(Split::Test);
  if (test.empty()) throw Error(ErrorCode::EmptyInput, "stage 'localize': the test split has no actions");
  const auto gold = gold_for(ws, test);

  result.predictions = stage("localize", [&] {
    return localize_actions(ws, test, clf ? &*clf : nullptr, scorer.get(), config, config.routing, &result.warnings);
  });
  stage("write", [&] { write_predictions(config.output_dir / "predictions.jsonl", result.predictions); });

  std::vector<std::pair<RoutingMode, std::vector<Prediction>>> runs;
  runs.emplace_back(config.routing, result.predictions);
  if (config.compare_paths) {
    for (auto mode : {RoutingMode::TwoSeal, RoutingMode::AlignOnly, RoutingMode::MultimodalOnly}) {
      if (mode == config.routing) continue;
      runs.emplace_back(mode, stage("localize", [&] {
                          return localize_actions(ws, test, clf ? &*clf : nullptr, scorer.get(), config, mode);
                        }));
    }
  }

  stage("evaluate", [&] {
    for (const auto& [mode, preds] : runs) {
      const auto name = method_name(mode, config.scorer);
      result.rows.emplace_back(name, evaluate(preds, gold));
      result.breakdown.emplace_back(name, breakdown_by_duration(preds, gold));
    }
  });

  // Duration classifier quality on the visible test actions.
  std::optional<BinaryMetrics> clf_metrics;
  if (clf) {
    std::vector<bool> predicted, actual;
    for (auto idx : test) {
      const auto& rec = ws.manifest[ws.actions[idx].record];
      const auto g = rec.gold();
      const auto id = ws.text_id(rec.action_id, config.text_variant);
      if (!rec.gold_visible.value_or(false) || !g || !ws.text.contains(id)) continue;
      predicted.push_back(predict_duration_class(ws.text.vector(id), *clf) == DurationClass::Short);
      actual.push_back(classify_duration(*g, config.localizer.duration_threshold) == DurationClass::Short);
    }
    if (!actual.empty()) clf_metrics = binary_metrics(predicted, actual);
  }

  const auto hash = config_hash(config);
  std::string text = "Results on the test split\n\n" + format_report_table(result.rows) +
                     "\nBreakdown by gold action duration\n\n" + format_breakdown_table(result.breakdown);
  char line[160];
  if (clf_metrics) {
    std::snprintf(line, sizeof line, "\nDuration classifier (short = positive): A %.1f  P %.1f  R %.1f  F1 %.1f\n",
                  clf_metrics->accuracy, clf_metrics->precision, clf_metrics->recall, clf_metrics->f1);
    text += line;
  }
  if (training) {
    std::snprintf(line, sizeof line, "\nScorer training: best epoch %zu of %zu, validation loss %.6f\n",
                  training->best_epoch, training->log.size(), training->best_val_loss);
    text += line;
  }
  if (!result.warnings.empty()) {
    text += "\nWarnings (" + std::to_string(result.warnings.size()) + ")\n";
    for (const auto& w : result.warnings) text += "  " + w + "\n";
  }
  text += "\nReproducibility\n  config_hash: " + hash + "\n  seed: " + std::to_string(config.seed) +
          "\n  version: " VLOGLOC_VERSION "\n  scorer: " + std::string(to_string(config.scorer)) +
          "\n  routing: " + std::string(to_string(config.routing)) +
          "\n  test_actions: " + std::to_string(test.size()) + "\n";
  result.report_text = text;

  json doc;
  doc["rows"] = json::array();
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    doc["rows"].push_back({{"method", result.rows[i].first},
                           {"metrics", report_to_json(result.rows[i].second)},
                           {"breakdown", breakdown_to_json(result.breakdown[i].second)}});
  }
  if (clf_metrics) {
    doc["duration_classifier"] = {{"accuracy", clf_metrics->accuracy},
                                  {"precision", clf_metrics->precision},
                                  {"recall", clf_metrics->recall},
                                  {"f1", clf_metrics->f1}};
  }
  if (training) {
    doc["training"] = {{"best_epoch", training->best_epoch},
                       {"epochs", training->log.size()},
                       {"best_val_loss", training->best_val_loss}};
  }
  doc["warnings"] = result.warnings;
  doc["reproducibility"] = {{"config_hash", hash},
                            {"seed", config.seed},
                            {"version", VLOGLOC_VERSION},
                            {"scorer", std::string(to_string(config.scorer))},
                            {"routing", std::string(to_string(config.routing))},
                            {"test_actions", test.size()}};
  result.report_json = doc;

  stage("write", [&] {
    io::write_file(config.output_dir / "report.txt", result.report_text);
    io::write_file(config.output_dir / "report.json", result.report_json.dump(2) + "\n");
  });
  return result;
}

}  // namespace vlogloc
