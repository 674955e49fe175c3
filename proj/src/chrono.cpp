#include "vlogloc/chrono.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vlogloc/error.hpp"

namespace vlogloc {

TimeInterval make_interval(double start, double end) {
  if (!(start >= 0.0) || !(end >= start)) {
    throw Error(ErrorCode::Config,
                "invalid interval [" + std::to_string(start) + ", " + std::to_string(end) + "]");
  }
  return {start, end};
}

std::int64_t to_ms(double seconds) { return std::llround(seconds * 1000.0); }

double from_ms(std::int64_t ms) { return static_cast<double>(ms) / 1000.0; }

TimeInterval interval_from_ms(std::int64_t start_ms, std::int64_t end_ms) {
  return make_interval(from_ms(start_ms), from_ms(end_ms));
}

double intersection_length(const TimeInterval& a, const TimeInterval& b) {
  return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

double iou(const TimeInterval& a, const TimeInterval& b) {
  const double inter = intersection_length(a, b);
  const double uni = a.duration() + b.duration() - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::string_view to_string(DurationClass c) { return c == DurationClass::Short ? "short" : "long"; }

DurationClass classify_duration(const TimeInterval& interval, double threshold) {
  return interval.duration() <= threshold ? DurationClass::Short : DurationClass::Long;
}

}  // namespace vlogloc
