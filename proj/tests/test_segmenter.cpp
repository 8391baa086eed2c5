#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dstc/segmenter.hpp"
#include "dstc/wav.hpp"

using namespace dstc;

TEST(PlanSegments, WorkedExample) {
  const auto plan = plan_segments(25.0, 10.0, 0.10);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_DOUBLE_EQ(plan[0].start_s, 0.0);
  EXPECT_DOUBLE_EQ(plan[0].end_s, 10.0);
  EXPECT_DOUBLE_EQ(plan[1].start_s, 9.0);
  EXPECT_DOUBLE_EQ(plan[1].end_s, 19.0);
  EXPECT_DOUBLE_EQ(plan[2].start_s, 18.0);
  EXPECT_DOUBLE_EQ(plan[2].end_s, 25.0);
  EXPECT_DOUBLE_EQ(plan[2].pad_s, 3.0);
  EXPECT_DOUBLE_EQ(plan[0].pad_s, 0.0);
}

TEST(PlanSegments, ShortRecordingIsOnePaddedSegment) {
  const auto plan = plan_segments(4.0, 10.0);
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_DOUBLE_EQ(plan[0].end_s, 4.0);
  EXPECT_DOUBLE_EQ(plan[0].pad_s, 6.0);
}

TEST(PlanSegments, ExactFitHasNoTrailingSliver) {
  // 10 + 9 = 19 s covers exactly two segments.
  const auto plan = plan_segments(19.0, 10.0);
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_DOUBLE_EQ(plan.back().pad_s, 0.0);
}

TEST(PlanSegments, RejectsBadArguments) {
  EXPECT_THROW(plan_segments(0.0, 10.0), ContractError);
  EXPECT_THROW(plan_segments(10.0, -1.0), ContractError);
  EXPECT_THROW(plan_segments(10.0, 5.0, 0.5), ContractError);
  EXPECT_THROW(plan_segments(std::nan(""), 5.0), ContractError);
}

TEST(SliceSegment, PadsTailWithZeros) {
  const int rate = 16000;
  std::vector<float> audio(25 * rate);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = 1.0f + static_cast<float>(i % 7);
  const auto plan = plan_segments(25.0, 10.0, 0.10, rate);
  const SegmentSamples last = slice_segment(audio, rate, plan[2]);
  EXPECT_EQ(last.samples.size(), 160000u);
  EXPECT_EQ(last.valid, 112000u);
  EXPECT_EQ(last.samples[0], audio[18 * rate]);
  EXPECT_EQ(last.samples[111999], audio.back());
  EXPECT_EQ(last.samples[112000], 0.0f);
  EXPECT_EQ(last.samples.back(), 0.0f);
}

TEST(SliceSegment, OutOfRangeSpecIsRejected) {
  std::vector<float> audio(100);
  const auto plan = plan_segments(1.0, 0.5, 0.1, 16000);
  EXPECT_THROW(slice_segment(audio, 16000, plan[0]), RangeError);
}

TEST(FrameMask, SevenOfTenSeconds) {
  const auto plan = plan_segments(25.0, 10.0);
  const auto mask = frame_mask(plan[2], 50.0, 500);
  EXPECT_EQ(std::count(mask.begin(), mask.end(), true), 350);
  EXPECT_TRUE(mask[349]);
  EXPECT_FALSE(mask[350]);
}

TEST(FrameMask, InconsistentFrameCountIsRejected) {
  const auto plan = plan_segments(25.0, 10.0);
  EXPECT_THROW(frame_mask(plan[0], 50.0, 400), ContractError);
  EXPECT_NO_THROW(frame_mask(plan[0], 50.0, 499));  // encoders may drop one frame
}

class WavRoundTrip : public ::testing::TestWithParam<WavEncoding> {};

TEST_P(WavRoundTrip, PreservesSamplesAndRate) {
  const auto path = std::filesystem::temp_directory_path() / "dstc_test_roundtrip.wav";
  Wav w;
  w.rate_hz = 16000;
  for (int i = 0; i < 1000; ++i) w.samples.push_back(0.5f * std::sin(0.01f * static_cast<float>(i)));
  write_wav(path, w, GetParam());
  const Wav back = read_wav(path);
  EXPECT_EQ(back.rate_hz, 16000);
  ASSERT_EQ(back.samples.size(), w.samples.size());
  const double tol = GetParam() == WavEncoding::pcm16 ? 1.0 / 32767 : 0.0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], tol);
  std::filesystem::remove(path);
}

INSTANTIATE_TEST_SUITE_P(Encodings, WavRoundTrip,
                         ::testing::Values(WavEncoding::pcm16, WavEncoding::float32));

TEST(Wav, GarbageIsAFormatError) {
  const auto path = std::filesystem::temp_directory_path() / "dstc_test_garbage.wav";
  std::ofstream(path) << "definitely not a wav file";
  EXPECT_THROW(read_wav(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Wav, MissingFileIsAnIoError) {
  EXPECT_THROW(read_wav("/nonexistent/x.wav"), IoError);
}
