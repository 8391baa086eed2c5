#pragma once

// Synthetic feature datasets with a planted, time-local class signal.
//
// Every value is N(0,1) noise. An AD (label 1) recording additionally carries
// a half-period sine bump of amplitude `pattern_strength` on feature channels
// 0..7, inside one randomly chosen segment and over a random contiguous
// quarter of that segment's valid frames. Detecting it needs frame selection
// within a segment and segment selection within a recording.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dstc/error.hpp"
#include "dstc/feature_store.hpp"
#include "dstc/segmenter.hpp"

namespace dstc {

inline constexpr std::uint32_t kPatternChannels = 8;

struct SynthConfig {
  std::size_t n_recordings = 200;
  std::uint32_t min_segments = 2;
  std::uint32_t max_segments = 4;
  std::uint32_t frames = 16;
  std::uint32_t features = 16;
  std::uint32_t layers = 1;
  /// 1-based layer carrying the pattern; 0 plants it in every layer.
  std::uint32_t signal_layer = 0;
  double pattern_strength = 2.0;
  std::uint64_t seed = 0;
  double seg_len_s = 10.0;
  double overlap_frac = kDefaultOverlap;
  std::string encoder_name = "synthetic";
};

struct SynthDataset {
  std::vector<FeatureTensor> tensors;
  Manifest manifest;
};

inline void check_synth_config(const SynthConfig& c) {
  if (c.n_recordings < 2 || c.n_recordings % 2 != 0) {
    throw ContractError("synth: n_recordings must be even and >= 2, got " +
                        std::to_string(c.n_recordings));
  }
  if (!(c.pattern_strength >= 0.0)) {
    throw ContractError("synth: pattern_strength must be non-negative");
  }
  if (c.min_segments < 1 || c.max_segments < c.min_segments) {
    throw ContractError("synth: need 1 <= min_segments <= max_segments");
  }
  if (c.frames < 2) throw ContractError("synth: need at least 2 frames per segment");
  if (c.features < kPatternChannels) {
    throw ContractError("synth: need at least " + std::to_string(kPatternChannels) +
                        " feature channels");
  }
  if (c.layers < 1 || c.signal_layer > c.layers) {
    throw ContractError("synth: signal_layer " + std::to_string(c.signal_layer) +
                        " outside 0.." + std::to_string(c.layers));
  }
}

/// In-memory generation; a pure function of the config.
inline SynthDataset generate_synthetic(const SynthConfig& c) {
  check_synth_config(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<int> labels(c.n_recordings);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  std::shuffle(labels.begin(), labels.end(), rng);

  const double hop_s = c.seg_len_s * (1.0 - c.overlap_frac);
  SynthDataset out;
  for (std::size_t r = 0; r < c.n_recordings; ++r) {
    const auto segments = std::uniform_int_distribution<std::uint32_t>(
        c.min_segments, c.max_segments)(rng);
    FeatureTensor t = FeatureTensor::zeros(c.layers, segments, c.frames, c.features);
    t.recording_id = "synth" + std::to_string(c.seed) + "_" + std::to_string(r);
    t.label = static_cast<Label>(labels[r]);
    t.valid_frames.back() =
        std::uniform_int_distribution<std::uint32_t>((c.frames + 1) / 2, c.frames)(rng);
    for (float& v : t.values) v = static_cast<float>(noise(rng));

    if (labels[r] == 1 && c.pattern_strength > 0.0) {
      const auto seg = std::uniform_int_distribution<std::uint32_t>(0, segments - 1)(rng);
      const std::uint32_t valid = t.valid_frames[seg];
      const std::uint32_t width = std::max<std::uint32_t>(1, valid / 4);
      const auto start = std::uniform_int_distribution<std::uint32_t>(0, valid - width)(rng);
      for (std::uint32_t l = 0; l < c.layers; ++l) {
        if (c.signal_layer != 0 && l + 1 != c.signal_layer) continue;
        for (std::uint32_t j = 0; j < width; ++j) {
          const double bump =
              c.pattern_strength * std::sin(std::numbers::pi * (j + 0.5) / width);
          for (std::uint32_t ch = 0; ch < kPatternChannels; ++ch) {
            t.at(l, seg, start + j, ch) += static_cast<float>(bump);
          }
        }
      }
    }

    ManifestEntry e;
    e.recording_id = t.recording_id;
    e.path = t.recording_id + ".dstc";
    e.label = t.label;
    e.duration_s = (segments - 1) * hop_s +
                   c.seg_len_s * static_cast<double>(t.valid_frames.back()) / c.frames;
    e.seg_len_s = c.seg_len_s;
    e.overlap_frac = c.overlap_frac;
    e.encoder_name = c.encoder_name;
    e.encoder_width = c.features;
    out.manifest.entries.push_back(std::move(e));
    out.tensors.push_back(std::move(t));
  }
  return out;
}

/// Writes one DSTC file per recording plus `manifest.json` into `dir`.
/// Returns the manifest path.
inline std::filesystem::path synth_dataset(const SynthConfig& c,
                                           const std::filesystem::path& dir) {
  SynthDataset ds = generate_synthetic(c);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& t : ds.tensors) write_features(t, dir / (t.recording_id + ".dstc"));
  const auto manifest_path = dir / "manifest.json";
  save_manifest(ds.manifest, manifest_path);
  return manifest_path;
}

/// Layer-selected recordings straight from the generator, skipping disk.
inline std::vector<Recording> synth_recordings(const SynthConfig& c, std::size_t layer = 1) {
  SynthDataset ds = generate_synthetic(c);
  std::vector<Recording> out;
  for (const auto& t : ds.tensors) {
    out.push_back(Recording{t.recording_id, static_cast<int>(*t.label), select_layer(t, layer)});
  }
  return out;
}

}  // namespace dstc
