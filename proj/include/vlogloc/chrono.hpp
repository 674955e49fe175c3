#pragma once

#include <cstdint>
#include <string_view>

namespace vlogloc {

// Closed interval [start, end] in seconds.
struct TimeInterval {
  double start = 0.0;
  double end = 0.0;

  double duration() const noexcept { return end - start; }
  bool valid() const noexcept { return start >= 0.0 && start <= end; }
  bool contains(const TimeInterval& other) const noexcept {
    return start <= other.start && other.end <= end;
  }

  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

// Throws Error(Config) for start < 0 or end < start.
TimeInterval make_interval(double start, double end);

// Integer-millisecond conversions used by every file format.
std::int64_t to_ms(double seconds);
double from_ms(std::int64_t ms);
TimeInterval interval_from_ms(std::int64_t start_ms, std::int64_t end_ms);

double intersection_length(const TimeInterval& a, const TimeInterval& b);

// Intersection over union. A zero-length union gives 1 for identical points
// and 0 otherwise.
double iou(const TimeInterval& a, const TimeInterval& b);

inline constexpr double kDefaultDurationThreshold = 15.0;

enum class DurationClass { Short, Long };

std::string_view to_string(DurationClass c);

// Short iff duration <= threshold.
DurationClass classify_duration(const TimeInterval& interval,
                                double threshold = kDefaultDurationThreshold);

}  // namespace vlogloc
