#pragma once

// Fixed-length, partially overlapping segmentation of long recordings.
//
// Boundaries are computed in integer sample counts at a reference rate and
// converted back to seconds, so consecutive segments never drift.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dstc/error.hpp"

namespace dstc {

inline constexpr double kDefaultOverlap = 0.10;
inline constexpr int kPlanRateHz = 16000;

struct SegmentSpec {
  std::size_t index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double pad_s = 0.0;
  double nominal_len_s = 0.0;

  double valid_s() const { return end_s - start_s; }
  friend bool operator==(const SegmentSpec&, const SegmentSpec&) = default;
};

/// Round half up to an integer count.
inline std::int64_t round_half_up(double x) {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

/// Plan segments starting at 0, hop, 2*hop, ... with hop = seg_len * (1 - overlap).
/// The last segment is the first one reaching total_len_s; it is clipped there
/// and padded back to seg_len_s.
inline std::vector<SegmentSpec> plan_segments(double total_len_s, double seg_len_s,
                                              double overlap_frac = kDefaultOverlap,
                                              int rate_hz = kPlanRateHz) {
  if (!(total_len_s > 0.0) || !std::isfinite(total_len_s)) {
    throw ContractError("plan_segments: total length must be positive, got " +
                        std::to_string(total_len_s));
  }
  if (!(seg_len_s > 0.0) || !std::isfinite(seg_len_s)) {
    throw ContractError("plan_segments: segment length must be positive, got " +
                        std::to_string(seg_len_s));
  }
  if (!(overlap_frac >= 0.0 && overlap_frac < 0.5)) {
    throw ContractError("plan_segments: overlap fraction must lie in [0, 0.5), got " +
                        std::to_string(overlap_frac));
  }
  if (rate_hz <= 0) throw ContractError("plan_segments: rate must be positive");

  const std::int64_t total = round_half_up(total_len_s * rate_hz);
  const std::int64_t seg = round_half_up(seg_len_s * rate_hz);
  const std::int64_t hop = round_half_up(static_cast<double>(seg) * (1.0 - overlap_frac));
  if (total <= 0 || seg <= 0 || hop <= 0) {
    throw ContractError("plan_segments: lengths shorter than one sample at " +
                        std::to_string(rate_hz) + " Hz");
  }

  const double rate = rate_hz;
  std::vector<SegmentSpec> out;
  for (std::int64_t start = 0; start < total; start += hop) {
    const std::int64_t end = std::min(start + seg, total);
    SegmentSpec spec;
    spec.index = out.size();
    spec.start_s = static_cast<double>(start) / rate;
    spec.end_s = static_cast<double>(end) / rate;
    spec.pad_s = static_cast<double>(seg - (end - start)) / rate;
    spec.nominal_len_s = static_cast<double>(seg) / rate;
    out.push_back(spec);
    if (start + seg >= total) break;
  }
  return out;
}

struct SegmentSamples {
  std::vector<float> samples;
  std::size_t valid = 0;
};

/// Cut `spec` out of `samples` and zero-pad to the nominal segment length.
inline SegmentSamples slice_segment(std::span<const float> samples, int rate_hz,
                                    const SegmentSpec& spec) {
  if (rate_hz <= 0) throw ContractError("slice_segment: rate must be positive");
  const std::int64_t start = round_half_up(spec.start_s * rate_hz);
  const std::int64_t end = round_half_up(spec.end_s * rate_hz);
  const std::int64_t length = round_half_up(spec.nominal_len_s * rate_hz);
  if (start < 0 || end <= start || end > static_cast<std::int64_t>(samples.size()) ||
      end - start > length) {
    throw RangeError("slice_segment: segment [" + std::to_string(spec.start_s) + ", " +
                     std::to_string(spec.end_s) + "] s lies outside the " +
                     std::to_string(static_cast<double>(samples.size()) / rate_hz) +
                     " s recording");
  }
  SegmentSamples out;
  out.samples.assign(static_cast<std::size_t>(length), 0.0f);
  std::copy(samples.begin() + start, samples.begin() + end, out.samples.begin());
  out.valid = static_cast<std::size_t>(end - start);
  return out;
}

/// Frame-level validity mask for a segment whose features have `total_frames`
/// frames at `frames_per_second`.
inline std::vector<bool> frame_mask(const SegmentSpec& spec, double frames_per_second,
                                    std::size_t total_frames) {
  if (!(frames_per_second > 0.0) || total_frames == 0) {
    throw ContractError("frame_mask: frame rate and frame count must be positive");
  }
  const double expected = spec.nominal_len_s * frames_per_second;
  if (std::abs(static_cast<double>(total_frames) - expected) > 1.0) {
    throw ContractError("frame_mask: " + std::to_string(total_frames) +
                        " frames inconsistent with " + std::to_string(expected) +
                        " expected for a " + std::to_string(spec.nominal_len_s) + " s segment");
  }
  const std::int64_t valid = round_half_up(spec.valid_s() * frames_per_second);
  if (valid <= 0) {
    throw DegenerateInputError("frame_mask: segment " + std::to_string(spec.index) +
                               " has no valid frame");
  }
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(valid), total_frames);
  std::vector<bool> mask(total_frames, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n), true);
  return mask;
}

}  // namespace dstc
