#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vlogloc/chrono.hpp"

namespace vlogloc {

struct SubtitleCue {
  std::size_t index = 0;  // 1-based position in document order
  TimeInterval interval;
  std::string text;

  friend bool operator==(const SubtitleCue&, const SubtitleCue&) = default;
};

struct Transcript {
  std::string video_id;
  double video_duration = 0.0;  // seconds; taken from the manifest, not the last cue
  std::vector<SubtitleCue> cues;
};

struct ActionMention {
  std::string id;
  std::string text;
  std::size_t cue_index = 0;  // position in Transcript::cues
  std::optional<bool> gold_visible;
  std::optional<TimeInterval> gold_interval;
};

enum class SubtitleFormat { WebVTT, SRT };

// Guesses the format from a file extension (".vtt" / ".srt"), case-insensitive.
std::optional<SubtitleFormat> subtitle_format_for(const std::filesystem::path& path);

// Parses WebVTT or SRT text. Errors carry the 1-based line number:
// MalformedTimestamp for bad timing lines, UnorderedCues when a cue starts
// before its predecessor.
Transcript parse_subtitles(std::string_view raw, SubtitleFormat format);

std::string serialize_subtitles(const Transcript& transcript, SubtitleFormat format);

// "HH:MM:SS.mmm" (WebVTT) or "HH:MM:SS,mmm" (SRT).
std::string format_timestamp(std::int64_t ms, SubtitleFormat format);
std::optional<std::int64_t> parse_timestamp(std::string_view text);

// Clamps every cue into [0, duration] and records the duration.
void clamp_to_duration(Transcript& transcript, double duration);

std::size_t count_words(std::string_view text);

// Total whitespace-delimited words over video duration. Throws ZeroDuration.
double words_per_second(const Transcript& transcript);

inline constexpr double kDefaultMinWordRate = 0.5;

struct TranscriptRejection {
  std::string video_id;
  double rate = 0.0;
  std::string reason;
};

struct TranscriptFilterResult {
  std::vector<Transcript> kept;
  std::vector<TranscriptRejection> rejected;
};

// Keeps transcripts with rate >= min_rate; everything else is logged.
TranscriptFilterResult filter_transcripts(std::vector<Transcript> transcripts,
                                          double min_rate = kDefaultMinWordRate);

// The action is assumed visible during the utterance it was extracted from.
TimeInterval align_action_to_utterance(const ActionMention& action, const Transcript& transcript);

// Penn-style tags for one cue's whitespace tokens.
using CueTags = std::vector<std::string>;

// Rule-based verb-phrase chunker. Without tags a closed verb lexicon decides
// where mentions start. Output is noisy by construction.
std::vector<ActionMention> extract_candidate_actions(
    const Transcript& transcript, const std::optional<std::vector<CueTags>>& pos_tags = std::nullopt);

// One JSON Lines manifest record per action.
struct ManifestRecord {
  std::string action_id;
  std::string video_id;
  std::string clip_id;
  std::string text;
  std::int64_t cue_start_ms = 0;
  std::int64_t cue_end_ms = 0;
  std::optional<bool> gold_visible;
  std::optional<std::int64_t> gold_start_ms;
  std::optional<std::int64_t> gold_end_ms;
  // Optional extensions: the channel drives data splits, the duration drives
  // clip clamping and the speech-rate filter.
  std::optional<std::string> channel_id;
  std::optional<std::int64_t> video_duration_ms;

  TimeInterval cue() const;
  std::optional<TimeInterval> gold() const;
  std::string channel() const { return channel_id.value_or(video_id); }
};

ManifestRecord parse_manifest_line(std::string_view line, std::size_t line_number = 0);
std::string format_manifest_line(const ManifestRecord& record);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

struct VideoActions {
  Transcript transcript;
  std::vector<ActionMention> actions;
  std::vector<std::size_t> record_indices;  // parallel to actions
};

// Rebuilds per-video transcripts (one cue per distinct cue interval) from
// manifest records. Videos come out sorted by id.
std::vector<VideoActions> group_by_video(const std::vector<ManifestRecord>& records);

}  // namespace vlogloc
