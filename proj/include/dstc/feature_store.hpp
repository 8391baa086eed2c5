#pragma once

// Per-recording feature tensors and their "DSTC" interchange format.
//
// Layout (little-endian):
//   "DSTC" | u8 version=1 | i8 label (-1 absent) | u32 L | u32 N | u32 T | u32 F
//   | u16 id_len | id bytes (UTF-8) | N x u32 valid_frames | L*N*T*F x f32 row-major
//
// Values are stored as 32-bit floats and widened to doubles by select_layer.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dstc/error.hpp"
#include "dstc/tensor.hpp"

namespace dstc {

static_assert(std::endian::native == std::endian::little,
              "feature file I/O assumes a little-endian host");

enum class Label : int { hc = 0, ad = 1 };

inline constexpr std::uint8_t kFeatureFormatVersion = 1;
inline constexpr char kFeatureMagic[4] = {'D', 'S', 'T', 'C'};

struct FeatureTensor {
  std::uint32_t layers = 0;
  std::uint32_t segments = 0;
  std::uint32_t frames = 0;
  std::uint32_t features = 0;
  std::vector<float> values;
  std::vector<std::uint32_t> valid_frames;
  std::string recording_id;
  std::optional<Label> label;

  static FeatureTensor zeros(std::uint32_t l, std::uint32_t n, std::uint32_t t,
                             std::uint32_t f) {
    FeatureTensor ft;
    ft.layers = l;
    ft.segments = n;
    ft.frames = t;
    ft.features = f;
    ft.values.assign(std::size_t{l} * n * t * f, 0.0f);
    ft.valid_frames.assign(n, t);
    return ft;
  }

  /// Flat offset of (layer, segment, frame, feature), all 0-based.
  std::size_t offset(std::size_t l, std::size_t n, std::size_t t, std::size_t f) const {
    return ((l * segments + n) * frames + t) * features + f;
  }
  float& at(std::size_t l, std::size_t n, std::size_t t, std::size_t f) {
    return values[offset(l, n, t, f)];
  }
  float at(std::size_t l, std::size_t n, std::size_t t, std::size_t f) const {
    return values[offset(l, n, t, f)];
  }

  /// Throws ContractError if any invariant is broken.
  void check() const {
    if (layers == 0 || segments == 0 || frames == 0 || features == 0) {
      throw ContractError("feature tensor '" + recording_id + "' has a zero extent");
    }
    if (values.size() != std::size_t{layers} * segments * frames * features) {
      throw ContractError("feature tensor '" + recording_id + "' holds " +
                          std::to_string(values.size()) + " values, shape needs " +
                          std::to_string(std::size_t{layers} * segments * frames * features));
    }
    if (valid_frames.size() != segments) {
      throw ContractError("feature tensor '" + recording_id + "' has " +
                          std::to_string(valid_frames.size()) + " valid-frame counts for " +
                          std::to_string(segments) + " segments");
    }
    for (std::uint32_t v : valid_frames) {
      if (v < 1 || v > frames) {
        throw ContractError("feature tensor '" + recording_id + "' valid-frame count " +
                            std::to_string(v) + " outside [1, " + std::to_string(frames) + "]");
      }
    }
    for (float v : values) {
      if (!std::isfinite(v)) {
        throw ContractError("feature tensor '" + recording_id + "' contains non-finite values");
      }
    }
    if (recording_id.size() > 0xFFFF) {
      throw ContractError("recording id longer than 65535 bytes");
    }
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string where)
      : bytes_(bytes), where_(std::move(where)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(where_ + ": truncated payload, expected at least " +
                        std::to_string(pos_ + n) + " bytes, file has " +
                        std::to_string(bytes_.size()));
    }
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_features(const FeatureTensor& t) {
  t.check();
  detail::ByteWriter w;
  w.put_bytes(kFeatureMagic, 4);
  w.put<std::uint8_t>(kFeatureFormatVersion);
  w.put<std::int8_t>(t.label ? static_cast<std::int8_t>(*t.label) : std::int8_t{-1});
  w.put<std::uint32_t>(t.layers);
  w.put<std::uint32_t>(t.segments);
  w.put<std::uint32_t>(t.frames);
  w.put<std::uint32_t>(t.features);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(t.recording_id.size()));
  w.put_bytes(t.recording_id.data(), t.recording_id.size());
  w.put_bytes(t.valid_frames.data(), t.valid_frames.size() * sizeof(std::uint32_t));
  w.put_bytes(t.values.data(), t.values.size() * sizeof(float));
  return w.bytes();
}

inline FeatureTensor decode_features(const std::vector<unsigned char>& bytes,
                                     const std::string& where) {
  detail::ByteReader r(bytes, where);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw FormatError(where + ": bad magic, not a DSTC feature file");
  }
  const auto version = r.get<std::uint8_t>();
  if (version != kFeatureFormatVersion) {
    throw FormatError(where + ": unsupported format version " + std::to_string(version));
  }
  FeatureTensor t;
  const auto label = r.get<std::int8_t>();
  if (label == 0 || label == 1) {
    t.label = static_cast<Label>(label);
  } else if (label != -1) {
    throw FormatError(where + ": invalid label byte " + std::to_string(label));
  }
  t.layers = r.get<std::uint32_t>();
  t.segments = r.get<std::uint32_t>();
  t.frames = r.get<std::uint32_t>();
  t.features = r.get<std::uint32_t>();
  if (t.layers == 0 || t.segments == 0 || t.frames == 0 || t.features == 0) {
    throw FormatError(where + ": zero extent in header");
  }
  const auto id_len = r.get<std::uint16_t>();
  t.recording_id.resize(id_len);
  r.get_bytes(t.recording_id.data(), id_len);

  const std::uint64_t count = std::uint64_t{t.layers} * t.segments * t.frames * t.features;
  const std::uint64_t expected = r.pos() + std::uint64_t{t.segments} * 4 + count * 4;
  if (expected != r.size()) {
    throw FormatError(where + ": expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(r.size()));
  }
  t.valid_frames.resize(t.segments);
  r.get_bytes(t.valid_frames.data(), t.valid_frames.size() * 4);
  t.values.resize(count);
  r.get_bytes(t.values.data(), t.values.size() * 4);
  try {
    t.check();
  } catch (const ContractError& e) {
    throw FormatError(where + ": " + e.what());
  }
  return t;
}

inline void write_features(const FeatureTensor& t, const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = encode_features(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline FeatureTensor read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return decode_features(bytes, path.string());
}

/// One segment's frames for a chosen layer. Only the first `valid` rows are
/// real audio; the rest are padding.
struct SegmentSequence {
  Tensor frames;  // T x F
  std::size_t valid = 0;

  std::vector<bool> mask() const {
    std::vector<bool> m(frames.rows(), false);
    std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(valid), true);
    return m;
  }
};

/// Slices out one encoder layer (1-based) as N sequences of T x F doubles.
inline std::vector<SegmentSequence> select_layer(const FeatureTensor& t, std::size_t layer) {
  if (layer < 1 || layer > t.layers) {
    throw RangeError("layer " + std::to_string(layer) + " out of range; '" + t.recording_id +
                     "' has layers 1.." + std::to_string(t.layers));
  }
  std::vector<SegmentSequence> out;
  out.reserve(t.segments);
  for (std::size_t n = 0; n < t.segments; ++n) {
    SegmentSequence seq{Tensor::matrix(t.frames, t.features), t.valid_frames[n]};
    const float* src = t.values.data() + t.offset(layer - 1, n, 0, 0);
    for (std::size_t i = 0; i < seq.frames.size(); ++i) seq.frames[i] = src[i];
    out.push_back(std::move(seq));
  }
  return out;
}

/// A labelled recording reduced to one layer, as consumed by the model.
struct Recording {
  std::string id;
  int label = -1;
  std::vector<SegmentSequence> segments;

  std::size_t feature_dim() const { return segments.front().frames.cols(); }
};

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::string recording_id;
  std::string path;
  std::optional<Label> label;
  double duration_s = 0.0;
  double seg_len_s = 0.0;
  double overlap_frac = 0.0;
  std::string encoder_name;
  std::uint32_t encoder_width = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& e) const {
    std::filesystem::path p(e.path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline nlohmann::json to_json(const ManifestEntry& e) {
  nlohmann::json j;
  j["recording_id"] = e.recording_id;
  j["path"] = e.path;
  j["label"] = e.label ? nlohmann::json(static_cast<int>(*e.label)) : nlohmann::json(nullptr);
  j["duration_s"] = e.duration_s;
  j["seg_len_s"] = e.seg_len_s;
  j["overlap_frac"] = e.overlap_frac;
  j["encoder_name"] = e.encoder_name;
  j["encoder_width"] = e.encoder_width;
  return j;
}

inline Manifest parse_manifest(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": manifest must be a JSON array");
  Manifest m;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    const std::string at = where + "[" + std::to_string(i) + "]";
    try {
      ManifestEntry e;
      e.recording_id = o.at("recording_id").get<std::string>();
      e.path = o.at("path").get<std::string>();
      const auto& label = o.at("label");
      if (!label.is_null()) {
        const int v = label.get<int>();
        if (v != 0 && v != 1) throw FormatError(at + ": label must be 0, 1 or null");
        e.label = static_cast<Label>(v);
      }
      e.duration_s = o.at("duration_s").get<double>();
      e.seg_len_s = o.at("seg_len_s").get<double>();
      e.overlap_frac = o.at("overlap_frac").get<double>();
      e.encoder_name = o.at("encoder_name").get<std::string>();
      e.encoder_width = o.at("encoder_width").get<std::uint32_t>();
      if (!seen.insert(e.recording_id).second) {
        throw FormatError(at + ": duplicate recording_id '" + e.recording_id + "'");
      }
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(at + ": " + ex.what());
    }
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  Manifest m = parse_manifest(j, path.string());
  m.base_dir = path.parent_path();
  return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : m.entries) j.push_back(to_json(e));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

using WarningSink = std::function<void(const std::string&)>;

inline void warn_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

/// Reads the entry's file, checks it against the manifest and applies the
/// manifest label (which wins over the embedded one).
inline FeatureTensor load_entry(const Manifest& m, const ManifestEntry& e,
                                const WarningSink& warn = warn_stderr) {
  const auto path = m.resolve(e);
  FeatureTensor t = read_features(path);
  if (t.recording_id != e.recording_id) {
    throw FormatError(path.string() + ": file recording_id '" + t.recording_id +
                      "' differs from manifest '" + e.recording_id + "'");
  }
  if (t.features != e.encoder_width) {
    throw FormatError(path.string() + ": feature width " + std::to_string(t.features) +
                      " differs from manifest encoder_width " + std::to_string(e.encoder_width));
  }
  if (e.label && t.label && *e.label != *t.label && warn) {
    warn(path.string() + ": embedded label " + std::to_string(static_cast<int>(*t.label)) +
         " overridden by manifest label " + std::to_string(static_cast<int>(*e.label)));
  }
  if (e.label) t.label = e.label;
  return t;
}

/// Loads every manifest entry at one layer. Unlabelled entries are rejected.
inline std::vector<Recording> load_dataset(const Manifest& m, std::size_t layer,
                                           const WarningSink& warn = warn_stderr) {
  std::vector<Recording> out;
  out.reserve(m.entries.size());
  std::optional<std::uint32_t> width;
  for (const auto& e : m.entries) {
    FeatureTensor t = load_entry(m, e, warn);
    if (!t.label) throw ContractError("recording '" + e.recording_id + "' has no label");
    if (width && *width != t.features) {
      throw FormatError(m.resolve(e).string() + ": feature width " + std::to_string(t.features) +
                        " differs from earlier recordings (" + std::to_string(*width) + ")");
    }
    width = t.features;
    out.push_back(Recording{t.recording_id, static_cast<int>(*t.label), select_layer(t, layer)});
  }
  return out;
}

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

/// Checks every referenced file without stopping at the first failure.
inline ValidationReport validate_manifest(const Manifest& m) {
  ValidationReport report;
  for (const auto& e : m.entries) {
    try {
      FeatureTensor t = load_entry(m, e, [&](const std::string& w) { report.warnings.push_back(w); });
      if (!e.label && !t.label) {
        report.warnings.push_back(m.resolve(e).string() + ": no label (inference only)");
      }
    } catch (const Error& ex) {
      report.errors.emplace_back(ex.what());
    }
  }
  return report;
}

}  // namespace dstc
