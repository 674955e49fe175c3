#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vlogloc/chrono.hpp"
#include "vlogloc/transcript.hpp"

namespace vlogloc {

// 8-bit grayscale image, row-major.
struct GrayFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  friend bool operator==(const GrayFrame&, const GrayFrame&) = default;
};

struct FrameSequence {
  std::string clip_id;
  double fps = 30.0;
  std::vector<GrayFrame> frames;
};

struct ClipSpec {
  std::string clip_id;
  std::string video_id;
  TimeInterval interval;
  std::vector<std::string> action_ids;
};

struct SegmentOptions {
  double max_len = 60.0;  // longest cue span grouped into one clip
  double pad = 15.0;      // expansion before the first and after the last action
};

// Groups a video's actions into clips. A group whose cue span exceeds max_len
// is split at its largest inter-cue gap, recursively; each group is then
// padded and clamped to the video. Clip ids are "<video_id>_c<k>".
std::vector<ClipSpec> segment_video(const Transcript& transcript,
                                    const std::vector<ActionMention>& actions,
                                    const SegmentOptions& options = {});

// Pearson correlation of two equally sized samples. Throws ConstantFrame when
// either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// 2-D correlation coefficient over all pixels.
double corr2d(const GrayFrame& a, const GrayFrame& b);

enum class MotionDecision { Keep, Drop };

struct MotionResult {
  MotionDecision decision = MotionDecision::Keep;
  double median = 0.0;
  std::vector<double> coefficients;  // consecutive sampled-frame pairs
};

struct MotionFilterOptions {
  std::size_t sample_every = 100;
  double threshold = 0.8;  // Drop iff median > threshold
};

MotionResult motion_filter(const FrameSequence& frames, const MotionFilterOptions& options = {});

// Binary PGM (P5, maxval <= 255).
GrayFrame read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayFrame& frame);

// Loads "<clip_id>_<frame_index>.pgm" files, grouped by clip and ordered by index.
std::map<std::string, FrameSequence> load_frame_directory(const std::filesystem::path& dir);

// Packed "FRM1" file: magic, u32 count, u32 height, u32 width, then pixels.
FrameSequence read_frame_pack(const std::filesystem::path& path, std::string clip_id);
std::string encode_frame_pack(const std::vector<GrayFrame>& frames);

std::string format_clip_line(const ClipSpec& clip);
ClipSpec parse_clip_line(std::string_view line);
std::vector<ClipSpec> read_clips(const std::filesystem::path& path);
void write_clips(const std::filesystem::path& path, const std::vector<ClipSpec>& clips);

}  // namespace vlogloc
