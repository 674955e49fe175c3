#include "vlogloc/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "vlogloc/binary_io.hpp"
#include "vlogloc/error.hpp"

namespace vlogloc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string strip_code(const std::string& what) {
  const auto pos = what.find(": ");
  return pos == std::string::npos ? what : what.substr(pos + 2);
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

}  // namespace

IngestResult cmd_ingest(const fs::path& subtitle_dir, const fs::path& manifest_out, double min_rate) {
  if (!fs::is_directory(subtitle_dir)) throw Error(ErrorCode::Io, subtitle_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(subtitle_dir)) {
    if (entry.is_regular_file() && subtitle_format_for(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Transcript> transcripts;
  for (const auto& f : files) {
    try {
      auto t = parse_subtitles(io::read_file(f), *subtitle_format_for(f));
      t.video_id = f.stem().string();
      transcripts.push_back(std::move(t));
    } catch (const Error& e) {
      throw Error(e.code(), f.string() + ": " + strip_code(e.what()));
    }
  }

  auto filtered = filter_transcripts(std::move(transcripts), min_rate);
  IngestResult result;
  result.rejected = filtered.rejected;
  result.videos = filtered.kept.size();

  std::string log = "video_id\trate\treason\n";
  for (const auto& r : filtered.rejected) {
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", r.rate);
    log += r.video_id + "\t" + rate + "\t" + r.reason + "\n";
  }
  io::write_file(with_suffix(manifest_out, ".rejected.tsv"), log);

  if (filtered.kept.empty()) {
    throw Error(ErrorCode::EmptyInput, "no transcript in " + subtitle_dir.string() + " passed the speech-rate filter");
  }
  for (const auto& t : filtered.kept) {
    for (const auto& a : extract_candidate_actions(t)) {
      const auto& cue = t.cues.at(a.cue_index).interval;
      ManifestRecord rec;
      rec.action_id = a.id;
      rec.video_id = t.video_id;
      rec.text = a.text;
      rec.cue_start_ms = to_ms(cue.start);
      rec.cue_end_ms = to_ms(cue.end);
      rec.video_duration_ms = to_ms(t.video_duration);
      result.manifest.push_back(std::move(rec));
    }
  }
  write_manifest(manifest_out, result.manifest);
  return result;
}

std::vector<ClipSpec> cmd_segment(const fs::path& manifest, const fs::path& clips_out, const SegmentOptions& options) {
  const auto records = read_manifest(manifest);
  std::vector<ClipSpec> clips;
  for (const auto& v : group_by_video(records)) {
    auto part = segment_video(v.transcript, v.actions, options);
    clips.insert(clips.end(), part.begin(), part.end());
  }
  write_clips(clips_out, clips);
  return clips;
}

std::vector<MotionRecord> cmd_motion_filter(const fs::path& input, const fs::path& out,
                                            const MotionFilterOptions& options) {
  std::vector<MotionRecord> records;
  if (fs::is_directory(input)) {
    for (const auto& [clip_id, seq] : load_frame_directory(input)) {
      records.push_back({clip_id, motion_filter(seq, options)});
    }
  } else {
    const auto seq = read_frame_pack(input, input.stem().string());
    records.push_back({seq.clip_id, motion_filter(seq, options)});
  }
  std::string text;
  for (const auto& r : records) {
    json j;
    j["clip_id"] = r.clip_id;
    j["median"] = r.result.median;
    j["decision"] = r.result.decision == MotionDecision::Drop ? "drop" : "keep";
    text += j.dump() + "\n";
  }
  if (!out.empty()) io::write_file(out, text);
  return records;
}

SyntheticDataset cmd_synth(const SyntheticConfig& config, const fs::path& out_dir) {
  auto data = synth_generate(config);
  write_synthetic(out_dir, data);
  return data;
}

DurationClassifier cmd_train_duration(const RunConfig& config, const fs::path& out) {
  const auto ws = load_workspace(config);
  auto clf = train_duration_stage(ws, config);
  save_duration_clf(out, clf);
  return clf;
}

TrainResult cmd_train_scorer(const RunConfig& config, const fs::path& out) {
  if (config.scorer != ScorerKind::Mpu) {
    throw Error(ErrorCode::Config, "only the mpu scorer is trainable; dot and sca are frozen");
  }
  const auto ws = load_workspace(config);
  auto result = train_scorer_stage(ws, config);
  save_scorer(out, result.params);
  io::write_file(with_suffix(out, ".log.tsv"), format_training_log(result.log));
  return result;
}

std::vector<Prediction> cmd_localize(const RunConfig& config, const fs::path& out, bool all_actions) {
  if (config.scorer == ScorerKind::Mpu && config.routing != RoutingMode::AlignOnly &&
      config.scorer_checkpoint.empty()) {
    throw Error(ErrorCode::Config, "localize with the mpu scorer needs scorer.checkpoint");
  }
  if (config.routing == RoutingMode::TwoSeal && config.duration_checkpoint.empty()) {
    throw Error(ErrorCode::Config, "2seal routing needs duration.checkpoint");
  }
  const auto ws = load_workspace(config);
  std::optional<DurationClassifier> clf;
  if (config.routing == RoutingMode::TwoSeal) clf = load_duration_clf(config.duration_checkpoint);
  std::optional<ScorerParams> params;
  if (config.scorer == ScorerKind::Mpu && !config.scorer_checkpoint.empty()) {
    params = load_scorer(config.scorer_checkpoint);
  }
  std::unique_ptr<SpanScorer> scorer;
  if (config.routing != RoutingMode::AlignOnly) scorer = make_scorer(ws, config, params);

  std::vector<std::size_t> actions;
  if (all_actions) {
    for (std::size_t i = 0; i < ws.actions.size(); ++i) actions.push_back(i);
  } else {
    actions = ws.actions_in(Split::Test);
  }
  std::vector<std::string> warnings;
  auto predictions = localize_actions(ws, actions, clf ? &*clf : nullptr, scorer.get(), config, config.routing, &warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  write_predictions(out, predictions);
  return predictions;
}

EvaluationResult cmd_evaluate(const fs::path& predictions, const fs::path& manifest, const fs::path& out,
                              const std::string& method) {
  const auto preds = read_predictions(predictions);
  std::set<std::string> covered;
  for (const auto& p : preds) covered.insert(p.action_id);
  std::vector<ManifestRecord> records;
  for (auto& r : read_manifest(manifest)) {
    if (covered.count(r.action_id)) records.push_back(std::move(r));
  }
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no predicted action appears in the manifest");
  const auto gold = gold_from_manifest(records);

  EvaluationResult result;
  result.report = evaluate(preds, gold);
  result.breakdown = breakdown_by_duration(preds, gold);
  result.text = format_report_table({{method, result.report}}) + "\n" +
                format_breakdown_table({{method, result.breakdown}});
  if (!out.empty()) {
    json doc;
    doc["rows"] = json::array({{{"method", method},
                                {"metrics", report_to_json(result.report)},
                                {"breakdown", breakdown_to_json(result.breakdown)}}});
    io::write_file(with_suffix(out, ".txt"), result.text);
    io::write_file(with_suffix(out, ".json"), doc.dump(2) + "\n");
  }
  return result;
}

Annotation parse_annotation_line(std::string_view line) {
  try {
    const auto j = json::parse(line);
    Annotation a;
    a.video_id = j.at("video_id").get<std::string>();
    a.item_id = j.contains("item_id") ? j.at("item_id").get<std::string>() : j.at("action_id").get<std::string>();
    a.annotator = j.at("annotator").get<std::string>();
    const bool has_start = j.contains("start_ms") && !j["start_ms"].is_null();
    const bool has_end = j.contains("end_ms") && !j["end_ms"].is_null();
    if (has_start != has_end) throw Error(ErrorCode::MalformedTimestamp, "annotation needs both start_ms and end_ms");
    if (has_start) a.interval = interval_from_ms(j["start_ms"].get<std::int64_t>(), j["end_ms"].get<std::int64_t>());
    if (j.contains("label") && !j["label"].is_null()) {
      a.label = j["label"].is_string() ? j["label"].get<std::string>() : j["label"].dump();
    }
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("annotation record: ") + e.what());
  }
}

std::vector<Annotation> read_annotations(const fs::path& path) {
  std::vector<Annotation> out;
  std::size_t n = 0;
  for (const auto& line : io::read_lines(path)) {
    ++n;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse_annotation_line(line));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(n) + ": " + strip_code(e.what()));
    }
  }
  return out;
}

AgreementReport compute_agreement(const std::vector<Annotation>& annotations) {
  AgreementReport report;

  // video -> annotator -> item -> interval
  std::map<std::string, std::map<std::string, std::map<std::string, TimeInterval>>> spans;
  std::map<std::string, std::set<std::string>> items_of;
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::string>> labels;  // (video,item)->annotator->label
  for (const auto& a : annotations) {
    if (a.interval) {
      spans[a.video_id][a.annotator][a.item_id] = *a.interval;
      items_of[a.video_id].insert(a.item_id);
    }
    if (a.label) labels[{a.video_id, a.item_id}][a.annotator] = *a.label;
  }

  for (const auto& [video, by_annotator] : spans) {
    const auto& items = items_of[video];
    VideoAgreement va;
    va.video_id = video;
    va.annotators = by_annotator.size();
    va.items = items.size();
    std::vector<std::vector<std::optional<double>>> matrix;
    for (const auto& [annotator, marks] : by_annotator) {
      std::vector<std::optional<double>> row;
      row.reserve(2 * items.size());
      for (const auto& item : items) {
        const auto it = marks.find(item);
        row.push_back(it == marks.end() ? std::nullopt : std::optional<double>(it->second.start));
      }
      for (const auto& item : items) {
        const auto it = marks.find(item);
        row.push_back(it == marks.end() ? std::nullopt : std::optional<double>(it->second.end));
      }
      matrix.push_back(std::move(row));
    }
    try {
      va.alpha = krippendorff_alpha_interval(matrix);
      report.alpha_min = std::min(report.alpha_min.value_or(*va.alpha), *va.alpha);
      report.alpha_max = std::max(report.alpha_max.value_or(*va.alpha), *va.alpha);
    } catch (const Error& e) {
      va.error = e.what();
    }
    report.videos.push_back(std::move(va));
  }

  if (!labels.empty()) {
    std::set<std::string> categories;
    std::size_t raters = 0;
    for (const auto& [key, by_annotator] : labels) {
      raters = std::max(raters, by_annotator.size());
      for (const auto& [annotator, label] : by_annotator) categories.insert(label);
    }
    const std::vector<std::string> cats(categories.begin(), categories.end());
    std::vector<std::vector<int>> counts;
    for (const auto& [key, by_annotator] : labels) {
      if (by_annotator.size() != raters) continue;
      std::vector<int> row(cats.size(), 0);
      for (const auto& [annotator, label] : by_annotator) {
        ++row[static_cast<std::size_t>(std::lower_bound(cats.begin(), cats.end(), label) - cats.begin())];
      }
      counts.push_back(std::move(row));
    }
    report.kappa_items = counts.size();
    report.kappa_raters = static_cast<int>(raters);
    try {
      report.kappa = fleiss_kappa(counts, static_cast<int>(raters));
    } catch (const Error& e) {
      report.kappa_error = e.what();
    }
  }
  return report;
}

std::string format_agreement(const AgreementReport& r) {
  std::size_t width = 8;
  for (const auto& v : r.videos) width = std::max(width, v.video_id.size());
  std::string out = "video";
  out.append(width - 5, ' ');
  out += " | annotators | items |   alpha\n";
  out += std::string(out.size() - 1, '-') + "\n";
  char buf[256];
  for (const auto& v : r.videos) {
    std::string id = v.video_id;
    id.append(width - id.size(), ' ');
    if (v.alpha) {
      std::snprintf(buf, sizeof buf, "%s | %10zu | %5zu | %7.4f\n", id.c_str(), v.annotators, v.items, *v.alpha);
    } else {
      std::snprintf(buf, sizeof buf, "%s | %10zu | %5zu | %s\n", id.c_str(), v.annotators, v.items, v.error.c_str());
    }
    out += buf;
  }
  if (r.alpha_min) {
    std::snprintf(buf, sizeof buf, "\nalpha range: %.4f .. %.4f\n", *r.alpha_min, *r.alpha_max);
    out += buf;
  }
  if (r.kappa) {
    std::snprintf(buf, sizeof buf, "Fleiss kappa: %.4f (%zu items, %d raters)\n", *r.kappa, r.kappa_items,
                  r.kappa_raters);
    out += buf;
  } else if (!r.kappa_error.empty()) {
    out += "Fleiss kappa: " + r.kappa_error + "\n";
  }
  return out;
}

json agreement_to_json(const AgreementReport& r) {
  json j;
  j["videos"] = json::array();
  for (const auto& v : r.videos) {
    json e = {{"video_id", v.video_id}, {"annotators", v.annotators}, {"items", v.items}};
    e["alpha"] = v.alpha ? json(*v.alpha) : json(nullptr);
    if (!v.error.empty()) e["error"] = v.error;
    j["videos"].push_back(std::move(e));
  }
  j["alpha_min"] = r.alpha_min ? json(*r.alpha_min) : json(nullptr);
  j["alpha_max"] = r.alpha_max ? json(*r.alpha_max) : json(nullptr);
  j["kappa"] = r.kappa ? json(*r.kappa) : json(nullptr);
  j["kappa_items"] = r.kappa_items;
  j["kappa_raters"] = r.kappa_raters;
  if (!r.kappa_error.empty()) j["kappa_error"] = r.kappa_error;
  return j;
}

AgreementReport cmd_agreement(const fs::path& annotations, const fs::path& out) {
  auto report = compute_agreement(read_annotations(annotations));
  if (!out.empty()) {
    io::write_file(with_suffix(out, ".txt"), format_agreement(report));
    io::write_file(with_suffix(out, ".json"), agreement_to_json(report).dump(2) + "\n");
  }
  return report;
}

namespace {

MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  r.va = j.at("va").get<double>();
  r.miou = j.at("miou").get<double>();
  r.n_actions = j.value("n_actions", std::size_t{0});
  r.n_visible = j.value("n_visible", std::size_t{0});
  for (const auto& [key, value] : j.at("recall").items()) r.recall[std::stod(key)] = value.get<double>();
  return r;
}

}  // namespace

std::string cmd_report(const std::vector<fs::path>& reports, const fs::path& out) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no report files given");
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& path : reports) {
    try {
      const auto doc = json::parse(io::read_file(path));
      for (const auto& row : doc.at("rows")) {
        rows.emplace_back(row.at("method").get<std::string>(), metrics_from_json(row.at("metrics")));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Config, path.string() + ": " + e.what());
    }
  }
  const auto text = format_report_table(rows);
  if (!out.empty()) io::write_file(out, text);
  return text;
}

PipelineResult cmd_pipeline(const RunConfig& config) { return run_pipeline(config); }

}  // namespace vlogloc
