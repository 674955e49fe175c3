#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "vlogloc/error.hpp"
#include "vlogloc/transcript.hpp"

using namespace vlogloc;

namespace {

Transcript with_words(const std::string& id, std::size_t words, double duration) {
  Transcript t;
  t.video_id = id;
  t.video_duration = duration;
  std::string text;
  for (std::size_t i = 0; i < words; ++i) text += (i ? " w" : "w") + std::to_string(i);
  t.cues.push_back({1, {0.0, duration}, text});
  return t;
}

std::vector<std::string> mention_texts(const std::vector<ActionMention>& m) {
  std::vector<std::string> out;
  for (const auto& a : m) out.push_back(a.text);
  return out;
}

}  // namespace

TEST(ParseSubtitles, SingleWebVttCue) {
  const auto t = parse_subtitles("WEBVTT\n\n00:00:01.000 --> 00:00:04.000\nhello world\n", SubtitleFormat::WebVTT);
  ASSERT_EQ(t.cues.size(), 1u);
  EXPECT_EQ(t.cues[0].interval, (TimeInterval{1.0, 4.0}));
  EXPECT_EQ(t.cues[0].text, "hello world");
  EXPECT_EQ(t.cues[0].index, 1u);
}

TEST(ParseSubtitles, EmptyFile) {
  EXPECT_TRUE(parse_subtitles("", SubtitleFormat::WebVTT).cues.empty());
  EXPECT_TRUE(parse_subtitles("", SubtitleFormat::SRT).cues.empty());
}

TEST(ParseSubtitles, SrtCommaMilliseconds) {
  const auto t = parse_subtitles("1\n00:00:01,500 --> 00:00:02,250\nhi\n", SubtitleFormat::SRT);
  ASSERT_EQ(t.cues.size(), 1u);
  // 1 s + 500 ms, 2 s + 250 ms
  EXPECT_DOUBLE_EQ(t.cues[0].interval.start, 1.0 + 500.0 / 1000.0);
  EXPECT_DOUBLE_EQ(t.cues[0].interval.end, 2.0 + 250.0 / 1000.0);
}

TEST(ParseSubtitles, WebVttExtras) {
  const std::string raw =
      "WEBVTT - title\n\nNOTE a comment\nspanning lines\n\nSTYLE\n::cue { color: red }\n\n"
      "intro\n00:01.000 --> 00:02.000 align:start\nfirst\nline two\n\n"
      "01:00:00.000 --> 01:00:01.500\nsecond\n";
  const auto t = parse_subtitles(raw, SubtitleFormat::WebVTT);
  ASSERT_EQ(t.cues.size(), 2u);
  EXPECT_EQ(t.cues[0].text, "first\nline two");
  EXPECT_DOUBLE_EQ(t.cues[1].interval.start, 3600.0);
  EXPECT_DOUBLE_EQ(t.cues[1].interval.end, 3601.5);
}

TEST(ParseSubtitles, MalformedTimestampNamesLine) {
  try {
    parse_subtitles("WEBVTT\n\n00:00:01.000 --> 00:00:0x.000\nhi\n", SubtitleFormat::WebVTT);
    FAIL() << "expected MalformedTimestamp";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedTimestamp);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseSubtitles, UnorderedCues) {
  const std::string raw = "1\n00:00:05,000 --> 00:00:06,000\na\n\n2\n00:00:01,000 --> 00:00:02,000\nb\n";
  try {
    parse_subtitles(raw, SubtitleFormat::SRT);
    FAIL() << "expected UnorderedCues";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnorderedCues);
  }
}

TEST(ParseSubtitles, CrLfInput) {
  const auto t = parse_subtitles("1\r\n00:00:01,000 --> 00:00:02,000\r\nhi\r\n", SubtitleFormat::SRT);
  ASSERT_EQ(t.cues.size(), 1u);
  EXPECT_EQ(t.cues[0].text, "hi");
}

TEST(Timestamp, FormatAndParse) {
  EXPECT_EQ(format_timestamp(3723004, SubtitleFormat::WebVTT), "01:02:03.004");
  EXPECT_EQ(format_timestamp(3723004, SubtitleFormat::SRT), "01:02:03,004");
  EXPECT_EQ(parse_timestamp("01:02:03.004"), 3723004);
  EXPECT_EQ(parse_timestamp("02:03,004"), 123004);
  EXPECT_FALSE(parse_timestamp("1:2:3"));
  EXPECT_FALSE(parse_timestamp("00:61:00.000"));
}

TEST(ParseSubtitlesProperty, RoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> gap(0, 5000), len(1, 8000), words(1, 6);
  for (auto format : {SubtitleFormat::WebVTT, SubtitleFormat::SRT}) {
    for (int f = 0; f < 20; ++f) {
      Transcript t;
      std::int64_t now = 0;
      for (int c = 0; c < 10; ++c) {
        now += gap(rng);
        const std::int64_t end = now + len(rng);
        std::string text;
        for (int w = words(rng); w > 0; --w) text += "word" + std::to_string(w) + (w > 1 ? " " : "");
        t.cues.push_back({static_cast<std::size_t>(c + 1), interval_from_ms(now, end), text});
      }
      const auto once = parse_subtitles(serialize_subtitles(t, format), format);
      const auto twice = parse_subtitles(serialize_subtitles(once, format), format);
      ASSERT_EQ(once.cues.size(), t.cues.size());
      for (std::size_t i = 0; i < t.cues.size(); ++i) {
        EXPECT_EQ(to_ms(once.cues[i].interval.start), to_ms(t.cues[i].interval.start));
        EXPECT_EQ(to_ms(once.cues[i].interval.end), to_ms(t.cues[i].interval.end));
        EXPECT_EQ(once.cues[i].text, t.cues[i].text);
        EXPECT_EQ(twice.cues[i], once.cues[i]);
      }
    }
  }
}

TEST(WordsPerSecond, Ratios) {
  EXPECT_DOUBLE_EQ(words_per_second(with_words("a", 30, 60.0)), 0.5);
  EXPECT_DOUBLE_EQ(words_per_second(with_words("a", 0, 60.0)), 0.0);
  EXPECT_NEAR(words_per_second(with_words("a", 29, 60.0)), 29.0 / 60.0, 1e-15);
  EXPECT_THROW(words_per_second(with_words("a", 3, 0.0)), Error);
}

TEST(WordsPerSecond, CountWords) {
  EXPECT_EQ(count_words("  hello,   world!\n again "), 3u);
  EXPECT_EQ(count_words(""), 0u);
}

TEST(FilterTranscripts, StrictLessThanIsRejected) {
  std::vector<Transcript> ts{with_words("a", 36, 60.0), with_words("b", 30, 60.0), with_words("c", 29, 60.0)};
  const auto r = filter_transcripts(ts, 0.5);
  ASSERT_EQ(r.kept.size(), 2u);
  EXPECT_EQ(r.kept[0].video_id, "a");
  EXPECT_EQ(r.kept[1].video_id, "b");
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].video_id, "c");
  EXPECT_NEAR(r.rejected[0].rate, 29.0 / 60.0, 1e-12);
  EXPECT_FALSE(r.rejected[0].reason.empty());
}

TEST(FilterTranscripts, EmptyInput) {
  const auto r = filter_transcripts({}, 0.5);
  EXPECT_TRUE(r.kept.empty());
  EXPECT_TRUE(r.rejected.empty());
}

TEST(FilterTranscriptsProperty, RaisingMinRateNeverAddsTranscripts) {
  std::vector<Transcript> ts;
  for (std::size_t i = 0; i < 20; ++i) ts.push_back(with_words("v" + std::to_string(i), i * 3, 60.0));
  std::size_t previous = ts.size() + 1;
  for (double rate = 0.0; rate <= 1.2; rate += 0.05) {
    const auto kept = filter_transcripts(ts, rate).kept.size();
    EXPECT_LE(kept, previous);
    previous = kept;
  }
}

TEST(AlignAction, ReturnsCueInterval) {
  Transcript t;
  t.cues = {{1, {0, 3}, "a"}, {2, {12.0, 17.5}, "b"}};
  ActionMention first{"x", "a", 0, {}, {}};
  ActionMention second{"y", "b", 1, {}, {}};
  ActionMention other{"z", "b", 1, {}, {}};
  EXPECT_EQ(align_action_to_utterance(first, t), (TimeInterval{0, 3}));
  EXPECT_EQ(align_action_to_utterance(second, t), (TimeInterval{12.0, 17.5}));
  EXPECT_EQ(align_action_to_utterance(other, t), align_action_to_utterance(second, t));
  ActionMention bad{"w", "", 5, {}, {}};
  EXPECT_THROW(align_action_to_utterance(bad, t), Error);
}

TEST(Chunker, KindleExample) {
  Transcript t;
  t.video_id = "v";
  t.cues = {{1, {0, 4}, "I grab my Kindle and do some reading"}};
  const auto m = extract_candidate_actions(t);
  EXPECT_EQ(mention_texts(m), (std::vector<std::string>{"grab my Kindle", "do some reading"}));
  for (const auto& a : m) EXPECT_EQ(a.cue_index, 0u);
}

TEST(Chunker, BerriesExample) {
  Transcript t;
  t.cues = {{1, {0, 4}, "add half cup of berries"}};
  EXPECT_EQ(mention_texts(extract_candidate_actions(t)), (std::vector<std::string>{"add half cup of berries"}));
}

TEST(Chunker, NoVerbNoMentions) {
  Transcript t;
  t.cues = {{1, {0, 4}, "the blue sky over the hills"}};
  EXPECT_TRUE(extract_candidate_actions(t).empty());
}

TEST(Chunker, PosTagsOverrideLexicon) {
  Transcript t;
  t.cues = {{1, {0, 4}, "blender the smoothie"}};
  const std::vector<CueTags> tags{{"VB", "DT", "NN"}};
  EXPECT_EQ(mention_texts(extract_candidate_actions(t, tags)),
            (std::vector<std::string>{"blender the smoothie"}));
}

TEST(Manifest, LineRoundTrip) {
  ManifestRecord r;
  r.action_id = "v1_a0";
  r.video_id = "v1";
  r.clip_id = "v1_c0";
  r.text = "wash the dishes";
  r.cue_start_ms = 1000;
  r.cue_end_ms = 4000;
  r.gold_start_ms = 1500;
  r.gold_end_ms = 9000;
  r.gold_visible = true;
  r.channel_id = "ch1";
  const auto back = parse_manifest_line(format_manifest_line(r));
  EXPECT_EQ(back.action_id, r.action_id);
  EXPECT_EQ(back.gold(), r.gold());
  EXPECT_EQ(back.cue(), r.cue());
  EXPECT_EQ(back.channel(), "ch1");
}

TEST(Manifest, GoldIntervalImpliesVisible) {
  const auto r = parse_manifest_line(
      R"({"action_id":"a","video_id":"v","clip_id":"c","text":"t","cue_start_ms":0,"cue_end_ms":10,"gold_start_ms":1,"gold_end_ms":2})");
  EXPECT_EQ(r.gold_visible, true);
  EXPECT_EQ(r.channel(), "v");
  EXPECT_THROW(parse_manifest_line(R"({"action_id":"a","video_id":"v","cue_start_ms":5,"cue_end_ms":1})"), Error);
  EXPECT_THROW(parse_manifest_line("{not json"), Error);
}

TEST(Manifest, GroupByVideoSharesCues) {
  std::vector<ManifestRecord> records(3);
  records[0] = {"b_a0", "b", "", "x", 0, 1000, {}, {}, {}, {}, {}};
  records[1] = {"a_a0", "a", "", "y", 5000, 6000, {}, {}, {}, {}, {}};
  records[2] = {"a_a1", "a", "", "z", 5000, 6000, {}, {}, {}, {}, {}};
  const auto videos = group_by_video(records);
  ASSERT_EQ(videos.size(), 2u);
  EXPECT_EQ(videos[0].transcript.video_id, "a");
  EXPECT_EQ(videos[0].transcript.cues.size(), 1u);
  EXPECT_EQ(videos[0].actions.size(), 2u);
  EXPECT_EQ(align_action_to_utterance(videos[0].actions[1], videos[0].transcript), (TimeInterval{5, 6}));
  EXPECT_EQ(videos[0].record_indices, (std::vector<std::size_t>{1, 2}));
}

TEST(SubtitleFormat, FromExtension) {
  EXPECT_EQ(subtitle_format_for("a/b.VTT"), SubtitleFormat::WebVTT);
  EXPECT_EQ(subtitle_format_for("x.srt"), SubtitleFormat::SRT);
  EXPECT_FALSE(subtitle_format_for("x.txt"));
}
