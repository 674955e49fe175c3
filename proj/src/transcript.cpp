#include "vlogloc/transcript.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "vlogloc/binary_io.hpp"
#include "vlogloc/error.hpp"

namespace vlogloc {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> split_lines(std::string_view raw) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    const auto nl = raw.find('\n', pos);
    auto line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string line_error(std::size_t line, std::string_view what) {
  return "line " + std::to_string(line) + ": " + std::string(what);
}

// "a --> b [settings]" -> interval, or nullopt when the line has no arrow.
std::optional<std::pair<std::int64_t, std::int64_t>> parse_timing_line(std::string_view line,
                                                                       std::size_t line_no) {
  const auto arrow = line.find("-->");
  if (arrow == std::string_view::npos) return std::nullopt;
  const auto lhs = trim(line.substr(0, arrow));
  auto rhs = trim(line.substr(arrow + 3));
  // WebVTT cue settings follow the end timestamp after whitespace.
  if (const auto ws = rhs.find_first_of(" \t"); ws != std::string_view::npos) rhs = rhs.substr(0, ws);
  const auto start = parse_timestamp(lhs);
  const auto end = parse_timestamp(rhs);
  if (!start || !end) {
    throw Error(ErrorCode::MalformedTimestamp, line_error(line_no, "bad timing '" + std::string(line) + "'"));
  }
  if (*end < *start) {
    throw Error(ErrorCode::MalformedTimestamp, line_error(line_no, "cue ends before it starts"));
  }
  return std::make_pair(*start, *end);
}

}  // namespace

std::optional<SubtitleFormat> subtitle_format_for(const std::filesystem::path& path) {
  const auto ext = to_lower(path.extension().string());
  if (ext == ".vtt") return SubtitleFormat::WebVTT;
  if (ext == ".srt") return SubtitleFormat::SRT;
  return std::nullopt;
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  // [HH:]MM:SS(.|,)mmm, hours of any width.
  const auto frac_sep = text.find_last_of(".,");
  if (frac_sep == std::string_view::npos) return std::nullopt;
  const auto millis = text.substr(frac_sep + 1);
  if (millis.size() != 3 || !all_digits(millis)) return std::nullopt;

  std::vector<std::string_view> fields;
  auto clock = text.substr(0, frac_sep);
  while (true) {
    const auto colon = clock.find(':');
    fields.push_back(clock.substr(0, colon));
    if (colon == std::string_view::npos) break;
    clock.remove_prefix(colon + 1);
  }
  if (fields.size() < 2 || fields.size() > 3) return std::nullopt;
  std::int64_t hours = 0;
  if (fields.size() == 3) {
    if (!all_digits(fields[0])) return std::nullopt;
    hours = std::stoll(std::string(fields[0]));
  }
  const auto mm = fields[fields.size() - 2];
  const auto ss = fields[fields.size() - 1];
  if (mm.size() != 2 || ss.size() != 2 || !all_digits(mm) || !all_digits(ss)) return std::nullopt;
  const int minutes = std::stoi(std::string(mm));
  const int seconds = std::stoi(std::string(ss));
  if (minutes >= 60 || seconds >= 60) return std::nullopt;
  return ((hours * 60 + minutes) * 60 + seconds) * 1000 + std::stoi(std::string(millis));
}

std::string format_timestamp(std::int64_t ms, SubtitleFormat format) {
  const auto hours = ms / 3'600'000;
  const auto minutes = (ms / 60'000) % 60;
  const auto seconds = (ms / 1000) % 60;
  const auto millis = ms % 1000;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld%c%03lld", static_cast<long long>(hours),
                static_cast<long long>(minutes), static_cast<long long>(seconds),
                format == SubtitleFormat::SRT ? ',' : '.', static_cast<long long>(millis));
  return buf;
}

Transcript parse_subtitles(std::string_view raw, SubtitleFormat format) {
  if (raw.starts_with("\xEF\xBB\xBF")) raw.remove_prefix(3);
  const auto lines = split_lines(raw);

  Transcript transcript;
  std::size_t i = 0;
  if (format == SubtitleFormat::WebVTT) {
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i < lines.size() && lines[i].starts_with("WEBVTT")) {
      // Header block runs to the first blank line.
      while (i < lines.size() && !trim(lines[i]).empty()) ++i;
    }
  }

  std::int64_t previous_start = -1;
  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    // Collect one block.
    const std::size_t block_begin = i;
    while (i < lines.size() && !trim(lines[i]).empty()) ++i;
    const std::size_t block_end = i;

    const auto first = trim(lines[block_begin]);
    if (format == SubtitleFormat::WebVTT &&
        (first.starts_with("NOTE") || first == "STYLE" || first == "REGION")) {
      continue;
    }

    // Timing is on the first or second line (after an identifier / counter).
    std::size_t timing_line = block_begin;
    std::optional<std::pair<std::int64_t, std::int64_t>> timing;
    for (std::size_t k = block_begin; k < std::min(block_end, block_begin + 2) && !timing; ++k) {
      timing = parse_timing_line(lines[k], k + 1);
      timing_line = k;
    }
    if (!timing) {
      throw Error(ErrorCode::MalformedTimestamp, line_error(block_begin + 1, "cue without timing line"));
    }
    if (format == SubtitleFormat::SRT && timing_line > block_begin && !all_digits(first)) {
      throw Error(ErrorCode::MalformedTimestamp,
                  line_error(block_begin + 1, "expected numeric cue counter"));
    }
    if (timing->first < previous_start) {
      throw Error(ErrorCode::UnorderedCues,
                  line_error(timing_line + 1, "cue starts before the previous cue"));
    }
    previous_start = timing->first;

    std::string text;
    for (std::size_t k = timing_line + 1; k < block_end; ++k) {
      if (!text.empty()) text += '\n';
      text += lines[k];
    }
    transcript.cues.push_back(SubtitleCue{transcript.cues.size() + 1,
                                          interval_from_ms(timing->first, timing->second),
                                          std::move(text)});
  }
  for (const auto& cue : transcript.cues) {
    transcript.video_duration = std::max(transcript.video_duration, cue.interval.end);
  }
  return transcript;
}

std::string serialize_subtitles(const Transcript& transcript, SubtitleFormat format) {
  std::ostringstream out;
  if (format == SubtitleFormat::WebVTT) out << "WEBVTT\n\n";
  std::size_t counter = 1;
  for (const auto& cue : transcript.cues) {
    if (format == SubtitleFormat::SRT) out << counter << '\n';
    out << format_timestamp(to_ms(cue.interval.start), format) << " --> "
        << format_timestamp(to_ms(cue.interval.end), format) << '\n';
    out << cue.text << "\n\n";
    ++counter;
  }
  return out.str();
}

void clamp_to_duration(Transcript& transcript, double duration) {
  transcript.video_duration = duration;
  for (auto& cue : transcript.cues) {
    cue.interval.start = std::clamp(cue.interval.start, 0.0, duration);
    cue.interval.end = std::clamp(cue.interval.end, cue.interval.start, duration);
  }
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

double words_per_second(const Transcript& transcript) {
  if (!(transcript.video_duration > 0.0)) {
    throw Error(ErrorCode::ZeroDuration, "video '" + transcript.video_id + "' has no duration");
  }
  std::size_t words = 0;
  for (const auto& cue : transcript.cues) words += count_words(cue.text);
  return static_cast<double>(words) / transcript.video_duration;
}

TranscriptFilterResult filter_transcripts(std::vector<Transcript> transcripts, double min_rate) {
  TranscriptFilterResult result;
  for (auto& t : transcripts) {
    if (!(t.video_duration > 0.0)) {
      result.rejected.push_back({t.video_id, 0.0, "zero video duration"});
      continue;
    }
    const double rate = words_per_second(t);
    if (rate < min_rate) {
      std::ostringstream reason;
      reason << "speech rate " << rate << " words/s below " << min_rate;
      result.rejected.push_back({t.video_id, rate, reason.str()});
    } else {
      result.kept.push_back(std::move(t));
    }
  }
  return result;
}

TimeInterval align_action_to_utterance(const ActionMention& action, const Transcript& transcript) {
  if (action.cue_index >= transcript.cues.size()) {
    throw Error(ErrorCode::UnknownCue, "action '" + action.id + "' references cue " +
                                           std::to_string(action.cue_index) + " of " +
                                           std::to_string(transcript.cues.size()));
  }
  return transcript.cues[action.cue_index].interval;
}

namespace {

// Base-form verbs common in narrated routines. Closed on purpose; tags
// override it when supplied.
const std::set<std::string>& verb_lexicon() {
  static const std::set<std::string> verbs = {
      "add",    "apply",  "bake",   "blend",  "boil",    "brew",   "bring",  "brush",  "check",
      "chill",  "chop",   "clean",  "close",  "comb",    "combine", "cook",  "cover",  "cut",
      "do",     "drink",  "dry",    "dust",   "eat",     "feed",   "fill",   "finish", "fix",
      "fold",   "fry",    "get",    "give",   "go",      "grab",   "hang",   "head",   "heat",
      "lay",    "load",   "make",   "mix",    "mop",     "open",   "organize", "pack", "peel",
      "pick",   "place",  "play",   "pour",   "prep",    "prepare", "put",   "read",   "remove",
      "rinse",  "scoop",  "scrub",  "serve",  "set",     "shave",  "shower", "slice",  "spray",
      "start",  "stick",  "stir",   "store",  "sweep",   "take",   "throw",  "toss",   "turn",
      "unpack", "use",    "vacuum", "walk",   "wash",    "watch",  "water",  "wear",   "whisk",
      "wind",   "wipe",   "work",   "wrap",   "write"};
  return verbs;
}

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {
      "and", "but", "or", "so", "then", "because", "while", "when", "if", "which",
      "i",   "you", "we", "he", "she",  "they",    "i'm",   "we're", "you're", "they're"};
  return words;
}

std::string strip_punct(std::string_view token, bool& ends_clause) {
  ends_clause = false;
  while (!token.empty() && std::ispunct(static_cast<unsigned char>(token.back())) &&
         token.back() != '\'') {
    if (std::string_view(".,!?;:").find(token.back()) != std::string_view::npos) ends_clause = true;
    token.remove_suffix(1);
  }
  return std::string(token);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

constexpr std::size_t kMaxMentionTokens = 7;

}  // namespace

std::vector<ActionMention> extract_candidate_actions(const Transcript& transcript,
                                                     const std::optional<std::vector<CueTags>>& pos_tags) {
  std::vector<ActionMention> mentions;
  for (std::size_t c = 0; c < transcript.cues.size(); ++c) {
    const auto tokens = tokenize(transcript.cues[c].text);
    const CueTags* tags = nullptr;
    if (pos_tags && c < pos_tags->size() && (*pos_tags)[c].size() == tokens.size()) tags = &(*pos_tags)[c];

    auto is_verb = [&](std::size_t k, const std::string& lower) {
      if (tags) return (*tags)[k].starts_with("VB");
      return verb_lexicon().contains(lower);
    };
    auto is_stop = [&](std::size_t k, const std::string& lower) {
      if (tags) {
        const auto& tag = (*tags)[k];
        if (tag == "CC" || tag == "WDT" || tag == "WP" || tag == "WRB") return true;
      }
      return stop_words().contains(lower);
    };

    std::vector<std::string> current;
    auto flush = [&] {
      if (current.empty()) return;
      std::string text;
      for (const auto& w : current) {
        if (!text.empty()) text += ' ';
        text += w;
      }
      mentions.push_back(ActionMention{transcript.video_id + "_a" + std::to_string(mentions.size()),
                                       std::move(text), c, std::nullopt, std::nullopt});
      current.clear();
    };

    for (std::size_t k = 0; k < tokens.size(); ++k) {
      bool ends_clause = false;
      const auto word = strip_punct(tokens[k], ends_clause);
      const auto lower = to_lower(word);
      if (word.empty()) {
        if (ends_clause) flush();
        continue;
      }
      if (is_stop(k, lower)) {
        flush();
        continue;
      }
      if (is_verb(k, lower)) {
        flush();
        current.push_back(word);
      } else if (!current.empty()) {
        current.push_back(word);
      }
      if (ends_clause || current.size() >= kMaxMentionTokens) flush();
    }
    flush();
  }
  return mentions;
}

TimeInterval ManifestRecord::cue() const { return interval_from_ms(cue_start_ms, cue_end_ms); }

std::optional<TimeInterval> ManifestRecord::gold() const {
  if (!gold_start_ms || !gold_end_ms) return std::nullopt;
  return interval_from_ms(*gold_start_ms, *gold_end_ms);
}

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

ManifestRecord parse_manifest_line(std::string_view line, std::size_t line_number) {
  try {
    const auto j = json::parse(line);
    ManifestRecord r;
    r.action_id = j.at("action_id").get<std::string>();
    r.video_id = j.at("video_id").get<std::string>();
    r.clip_id = j.value("clip_id", std::string{});
    r.text = j.value("text", std::string{});
    r.cue_start_ms = j.at("cue_start_ms").get<std::int64_t>();
    r.cue_end_ms = j.at("cue_end_ms").get<std::int64_t>();
    r.gold_visible = optional_field<bool>(j, "gold_visible");
    r.gold_start_ms = optional_field<std::int64_t>(j, "gold_start_ms");
    r.gold_end_ms = optional_field<std::int64_t>(j, "gold_end_ms");
    r.channel_id = optional_field<std::string>(j, "channel_id");
    r.video_duration_ms = optional_field<std::int64_t>(j, "video_duration_ms");
    if (r.cue_start_ms < 0 || r.cue_end_ms < r.cue_start_ms) {
      throw Error(ErrorCode::MalformedTimestamp, "invalid cue interval");
    }
    if (r.gold_start_ms.has_value() != r.gold_end_ms.has_value()) {
      throw Error(ErrorCode::MalformedTimestamp, "gold interval needs both start and end");
    }
    if (r.gold_start_ms) {
      if (*r.gold_start_ms < 0 || *r.gold_end_ms < *r.gold_start_ms) {
        throw Error(ErrorCode::MalformedTimestamp, "invalid gold interval");
      }
      if (r.gold_visible == false) {
        throw Error(ErrorCode::Config, "gold interval given for a non-visible action");
      }
      r.gold_visible = true;
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, "manifest line " + std::to_string(line_number) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), "manifest line " + std::to_string(line_number) + ": " + e.what());
  }
}

std::string format_manifest_line(const ManifestRecord& r) {
  json j;
  j["action_id"] = r.action_id;
  j["video_id"] = r.video_id;
  j["clip_id"] = r.clip_id;
  j["text"] = r.text;
  j["cue_start_ms"] = r.cue_start_ms;
  j["cue_end_ms"] = r.cue_end_ms;
  if (r.gold_visible) j["gold_visible"] = *r.gold_visible;
  if (r.gold_start_ms) j["gold_start_ms"] = *r.gold_start_ms;
  if (r.gold_end_ms) j["gold_end_ms"] = *r.gold_end_ms;
  if (r.channel_id) j["channel_id"] = *r.channel_id;
  if (r.video_duration_ms) j["video_duration_ms"] = *r.video_duration_ms;
  return j.dump();
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::vector<ManifestRecord> records;
  const auto lines = io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    records.push_back(parse_manifest_line(lines[i], i + 1));
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += format_manifest_line(r);
    out += '\n';
  }
  io::write_file(path, out);
}

std::vector<VideoActions> group_by_video(const std::vector<ManifestRecord>& records) {
  std::map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < records.size(); ++i) by_video[records[i].video_id].push_back(i);

  std::vector<VideoActions> videos;
  for (const auto& [video_id, indices] : by_video) {
    VideoActions va;
    va.transcript.video_id = video_id;
    std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> cue_of;
    std::int64_t duration_ms = 0;
    for (auto i : indices) {
      cue_of.emplace(std::make_pair(records[i].cue_start_ms, records[i].cue_end_ms), 0);
      duration_ms = std::max({duration_ms, records[i].cue_end_ms, records[i].video_duration_ms.value_or(0)});
    }
    for (auto& [key, pos] : cue_of) {
      pos = va.transcript.cues.size();
      va.transcript.cues.push_back(
          SubtitleCue{pos + 1, interval_from_ms(key.first, key.second), std::string{}});
    }
    va.transcript.video_duration = from_ms(duration_ms);
    for (auto i : indices) {
      const auto& r = records[i];
      auto& cue = va.transcript.cues[cue_of.at({r.cue_start_ms, r.cue_end_ms})];
      if (cue.text.empty()) cue.text = r.text;
      ActionMention mention{r.action_id, r.text, cue.index - 1, r.gold_visible, r.gold()};
      va.actions.push_back(std::move(mention));
      va.record_indices.push_back(i);
    }
    videos.push_back(std::move(va));
  }
  return videos;
}

}  // namespace vlogloc
