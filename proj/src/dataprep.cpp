#include "vlogloc/dataprep.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <regex>

#include "json.hpp"
#include "vlogloc/binary_io.hpp"
#include "vlogloc/error.hpp"

namespace vlogloc {

namespace {

struct CueSpan {
  TimeInterval cue;
  std::string action_id;
};

void split_groups(const std::vector<CueSpan>& items, std::size_t lo, std::size_t hi, double max_len,
                  std::vector<std::pair<std::size_t, std::size_t>>& out) {
  double first = items[lo].cue.start;
  double last = items[lo].cue.end;
  for (std::size_t k = lo; k < hi; ++k) last = std::max(last, items[k].cue.end);
  if (hi - lo == 1 || last - first <= max_len) {
    out.emplace_back(lo, hi);
    return;
  }
  std::size_t split = lo + 1;
  double best_gap = -std::numeric_limits<double>::infinity();
  double running_end = items[lo].cue.end;
  for (std::size_t k = lo + 1; k < hi; ++k) {
    const double gap = items[k].cue.start - running_end;
    if (gap > best_gap) {
      best_gap = gap;
      split = k;
    }
    running_end = std::max(running_end, items[k].cue.end);
  }
  split_groups(items, lo, split, max_len, out);
  split_groups(items, split, hi, max_len, out);
}

}  // namespace

std::vector<ClipSpec> segment_video(const Transcript& transcript, const std::vector<ActionMention>& actions,
                                    const SegmentOptions& options) {
  std::vector<CueSpan> items;
  items.reserve(actions.size());
  for (const auto& a : actions) items.push_back({align_action_to_utterance(a, transcript), a.id});
  std::stable_sort(items.begin(), items.end(), [](const CueSpan& x, const CueSpan& y) {
    return std::tie(x.cue.start, x.cue.end) < std::tie(y.cue.start, y.cue.end);
  });
  if (items.empty()) return {};

  std::vector<std::pair<std::size_t, std::size_t>> groups;
  split_groups(items, 0, items.size(), options.max_len, groups);

  std::vector<ClipSpec> clips;
  for (const auto& [lo, hi] : groups) {
    ClipSpec clip;
    clip.clip_id = transcript.video_id + "_c" + std::to_string(clips.size());
    clip.video_id = transcript.video_id;
    double start = items[lo].cue.start;
    double end = items[lo].cue.end;
    for (std::size_t k = lo; k < hi; ++k) {
      start = std::min(start, items[k].cue.start);
      end = std::max(end, items[k].cue.end);
      clip.action_ids.push_back(items[k].action_id);
    }
    start = std::max(0.0, start - options.pad);
    end += options.pad;
    if (transcript.video_duration > 0.0) end = std::min(end, transcript.video_duration);
    clip.interval = {start, std::max(start, end)};
    clips.push_back(std::move(clip));
  }
  return clips;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "correlation needs equal, non-empty samples");
  }
  const double n = static_cast<double>(a.size());
  const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) throw Error(ErrorCode::ConstantFrame, "frame has zero variance");
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

double corr2d(const GrayFrame& a, const GrayFrame& b) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(ErrorCode::DimensionMismatch, "frames differ in size");
  }
  std::vector<double> xa(a.pixels.begin(), a.pixels.end());
  std::vector<double> xb(b.pixels.begin(), b.pixels.end());
  return pearson(xa, xb);
}

MotionResult motion_filter(const FrameSequence& sequence, const MotionFilterOptions& options) {
  const std::size_t step = std::max<std::size_t>(1, options.sample_every);
  std::vector<const GrayFrame*> sampled;
  for (std::size_t i = 0; i < sequence.frames.size(); i += step) sampled.push_back(&sequence.frames[i]);
  if (sampled.size() < 2) {
    throw Error(ErrorCode::TooFewFrames, "clip '" + sequence.clip_id + "' yields " +
                                             std::to_string(sampled.size()) + " sampled frames");
  }

  MotionResult result;
  for (std::size_t i = 0; i + 1 < sampled.size(); ++i) {
    result.coefficients.push_back(corr2d(*sampled[i], *sampled[i + 1]));
  }
  auto sorted = result.coefficients;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  result.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  result.decision = result.median > options.threshold ? MotionDecision::Drop : MotionDecision::Keep;
  return result;
}

namespace {

// Reads the next PGM header token, skipping whitespace and '#' comments.
std::string pgm_token(const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t begin = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
  return data.substr(begin, pos - begin);
}

std::size_t parse_size(const std::string& token, const std::string& what) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw Error(ErrorCode::BadMagic, "bad PGM " + what + " '" + token + "'");
  }
  return value;
}

}  // namespace

GrayFrame read_pgm(const std::filesystem::path& path) {
  const auto data = io::read_file(path);
  std::size_t pos = 0;
  if (pgm_token(data, pos) != "P5") throw Error(ErrorCode::BadMagic, path.string() + " is not a binary PGM");
  GrayFrame frame;
  frame.width = parse_size(pgm_token(data, pos), "width");
  frame.height = parse_size(pgm_token(data, pos), "height");
  const auto maxval = parse_size(pgm_token(data, pos), "maxval");
  if (maxval == 0 || maxval > 255) throw Error(ErrorCode::BadMagic, "16-bit PGM not supported");
  ++pos;  // single whitespace before the raster
  const std::size_t n = frame.width * frame.height;
  if (data.size() < pos + n) throw Error(ErrorCode::TruncatedFile, path.string());
  frame.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                      data.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return frame;
}

void write_pgm(const std::filesystem::path& path, const GrayFrame& frame) {
  std::string out = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  out.append(frame.pixels.begin(), frame.pixels.end());
  io::write_file(path, out);
}

std::map<std::string, FrameSequence> load_frame_directory(const std::filesystem::path& dir) {
  static const std::regex name_re(R"((.+)_(\d+)\.pgm)");
  std::map<std::string, std::map<std::size_t, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, name_re)) continue;
    files[m[1].str()][std::stoull(m[2].str())] = entry.path();
  }
  std::map<std::string, FrameSequence> sequences;
  for (const auto& [clip_id, frames] : files) {
    FrameSequence seq;
    seq.clip_id = clip_id;
    for (const auto& [index, path] : frames) {
      seq.frames.push_back(read_pgm(path));
      if (seq.frames.back().height != seq.frames.front().height ||
          seq.frames.back().width != seq.frames.front().width) {
        throw Error(ErrorCode::DimensionMismatch, path.string() + " differs in size from its clip");
      }
    }
    sequences.emplace(clip_id, std::move(seq));
  }
  return sequences;
}

FrameSequence read_frame_pack(const std::filesystem::path& path, std::string clip_id) {
  io::ByteReader in(io::read_file(path));
  if (in.bytes(4) != "FRM1") throw Error(ErrorCode::BadMagic, path.string() + " is not an FRM1 file");
  const auto count = in.u32();
  const auto height = in.u32();
  const auto width = in.u32();
  FrameSequence seq;
  seq.clip_id = std::move(clip_id);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto raw = in.bytes(n);
    seq.frames.push_back(GrayFrame{height, width, std::vector<std::uint8_t>(raw.begin(), raw.end())});
  }
  return seq;
}

std::string encode_frame_pack(const std::vector<GrayFrame>& frames) {
  io::ByteWriter out;
  out.bytes("FRM1");
  out.u32(static_cast<std::uint32_t>(frames.size()));
  out.u32(frames.empty() ? 0 : static_cast<std::uint32_t>(frames.front().height));
  out.u32(frames.empty() ? 0 : static_cast<std::uint32_t>(frames.front().width));
  for (const auto& f : frames) {
    if (!frames.empty() && (f.height != frames.front().height || f.width != frames.front().width)) {
      throw Error(ErrorCode::DimensionMismatch, "frames in a pack must share dimensions");
    }
    out.bytes(std::string_view(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size()));
  }
  return out.data();
}

std::string format_clip_line(const ClipSpec& clip) {
  nlohmann::json j;
  j["clip_id"] = clip.clip_id;
  j["video_id"] = clip.video_id;
  j["start_ms"] = to_ms(clip.interval.start);
  j["end_ms"] = to_ms(clip.interval.end);
  j["action_ids"] = clip.action_ids;
  return j.dump();
}

ClipSpec parse_clip_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ClipSpec clip;
    clip.clip_id = j.at("clip_id").get<std::string>();
    clip.video_id = j.value("video_id", std::string{});
    clip.interval = interval_from_ms(j.at("start_ms").get<std::int64_t>(), j.at("end_ms").get<std::int64_t>());
    clip.action_ids = j.value("action_ids", std::vector<std::string>{});
    return clip;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("clip record: ") + e.what());
  }
}

std::vector<ClipSpec> read_clips(const std::filesystem::path& path) {
  std::vector<ClipSpec> clips;
  for (const auto& line : io::read_lines(path)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    clips.push_back(parse_clip_line(line));
  }
  return clips;
}

void write_clips(const std::filesystem::path& path, const std::vector<ClipSpec>& clips) {
  std::string out;
  for (const auto& c : clips) out += format_clip_line(c) + "\n";
  io::write_file(path, out);
}

}  // namespace vlogloc
