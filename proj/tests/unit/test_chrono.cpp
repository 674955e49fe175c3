#include <gtest/gtest.h>

#include <random>

#include "vlogloc/chrono.hpp"
#include "vlogloc/error.hpp"

using namespace vlogloc;

namespace {

// Brute force over 1 ms ticks: tick k covers [k, k+1) ms.
double tick_iou(std::int64_t a0, std::int64_t a1, std::int64_t b0, std::int64_t b1) {
  std::int64_t inter = 0, uni = 0;
  const auto lo = std::min(a0, b0), hi = std::max(a1, b1);
  for (auto k = lo; k < hi; ++k) {
    const bool in_a = k >= a0 && k < a1;
    const bool in_b = k >= b0 && k < b1;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST(Iou, IdenticalIntervals) { EXPECT_DOUBLE_EQ(iou({5, 15}, {5, 15}), 1.0); }

TEST(Iou, DisjointIntervals) { EXPECT_DOUBLE_EQ(iou({0, 10}, {20, 30}), 0.0); }

TEST(Iou, HalfOverlapMatchesTickCount) {
  EXPECT_NEAR(iou({0, 10}, {5, 15}), tick_iou(0, 10000, 5000, 15000), 1e-12);
  EXPECT_NEAR(iou({0, 10}, {5, 15}), 1.0 / 3.0, 1e-12);
}

TEST(Iou, ZeroLengthUnion) {
  EXPECT_DOUBLE_EQ(iou({3, 3}, {3, 3}), 1.0);
  EXPECT_DOUBLE_EQ(iou({3, 3}, {4, 4}), 0.0);
}

TEST(Iou, TouchingIntervalsHaveNoOverlap) { EXPECT_DOUBLE_EQ(iou({0, 5}, {5, 10}), 0.0); }

TEST(IouProperty, SymmetricAndMatchesTicks) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> ms(0, 3000);
  for (int i = 0; i < 300; ++i) {
    auto a0 = ms(rng), a1 = ms(rng), b0 = ms(rng), b1 = ms(rng);
    if (a0 > a1) std::swap(a0, a1);
    if (b0 > b1) std::swap(b0, b1);
    const auto a = interval_from_ms(a0, a1), b = interval_from_ms(b0, b1);
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
    if (a1 > a0 || b1 > b0) EXPECT_NEAR(iou(a, b), tick_iou(a0, a1, b0, b1), 1e-9);
  }
}

TEST(IouProperty, MonotoneShrink) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const TimeInterval a{10.0 * u(rng), 10.0 + 10.0 * u(rng)};
    const TimeInterval b{a.start + u(rng) * a.duration() * 0.4, a.end - u(rng) * a.duration() * 0.4};
    const TimeInterval c{b.start + u(rng) * b.duration() * 0.4, b.end - u(rng) * b.duration() * 0.4};
    EXPECT_LE(iou(a, c), iou(a, b) + 1e-15);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  }
}

TEST(Interval, MakeIntervalRejectsInvalid) {
  EXPECT_THROW(make_interval(-1.0, 2.0), Error);
  EXPECT_THROW(make_interval(3.0, 2.0), Error);
  EXPECT_NO_THROW(make_interval(2.0, 2.0));
}

TEST(Interval, MillisecondRoundTrip) {
  EXPECT_EQ(to_ms(1.5), 1500);
  EXPECT_EQ(to_ms(2.2505), 2251);
  EXPECT_DOUBLE_EQ(from_ms(2250), 2.25);
  const auto i = interval_from_ms(1500, 2250);
  EXPECT_DOUBLE_EQ(i.start, 1.5);
  EXPECT_DOUBLE_EQ(i.end, 2.25);
}

TEST(Interval, IntersectionLength) {
  EXPECT_DOUBLE_EQ(intersection_length({0, 10}, {5, 15}), 5.0);
  EXPECT_DOUBLE_EQ(intersection_length({0, 1}, {5, 15}), 0.0);
}

TEST(DurationClass, BoundaryIsShort) {
  EXPECT_EQ(classify_duration({0, 15}, 15), DurationClass::Short);
  EXPECT_EQ(classify_duration({0, 15.001}, 15), DurationClass::Long);
  EXPECT_EQ(classify_duration({3, 10}, 15), DurationClass::Short);
  EXPECT_EQ(to_string(DurationClass::Long), "long");
}

TEST(ErrorCodes, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorCode::Config), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::MalformedTimestamp), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::NumericFailure), 4);
  EXPECT_EQ(exit_code_for(ErrorCode::DegenerateChance), 4);
  const Error e(ErrorCode::UnknownCue, "x");
  EXPECT_EQ(e.code(), ErrorCode::UnknownCue);
  EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
}
