#pragma once

// Encoder-layer x segment-length grid of cross-validated accuracies.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dstc/error.hpp"
#include "dstc/feature_store.hpp"
#include "dstc/trainer.hpp"

namespace dstc {

/// One manifest contributing a column of the grid.
struct SweepSource {
  std::string encoder;
  double seg_len_s = 0.0;
  std::filesystem::path manifest;
};

struct SweepGrid {
  std::string encoder;
  std::vector<double> seg_lens;      // columns, ascending
  std::vector<std::size_t> layers;   // rows
  /// cells[row][col]; nullopt marks an absent cell.
  std::vector<std::vector<std::optional<double>>> cells;
};

/// Parses "1..12", "3" or "1,4,8" into a list of 1-based layers.
inline std::vector<std::size_t> parse_layers(const std::string& spec) {
  std::vector<std::size_t> out;
  auto number = [&](const std::string& s) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty() || v == 0) {
      throw ContractError("bad layer list '" + spec + "': expected e.g. 1..12 or 2,5,8");
    }
    return static_cast<std::size_t>(v);
  };
  if (const auto dots = spec.find(".."); dots != std::string::npos) {
    const std::size_t lo = number(spec.substr(0, dots));
    const std::size_t hi = number(spec.substr(dots + 2));
    if (hi < lo) throw ContractError("bad layer range '" + spec + "'");
    for (std::size_t l = lo; l <= hi; ++l) out.push_back(l);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number(item));
  if (out.empty()) throw ContractError("empty layer list");
  return out;
}

/// Reads the encoder and segment length shared by all entries of a manifest.
inline SweepSource describe_manifest(const std::filesystem::path& path) {
  const Manifest m = load_manifest(path);
  if (m.entries.empty()) throw FormatError(path.string() + ": manifest is empty");
  SweepSource s{m.entries.front().encoder_name, m.entries.front().seg_len_s, path};
  for (const auto& e : m.entries) {
    if (e.encoder_name != s.encoder || e.seg_len_s != s.seg_len_s) {
      throw FormatError(path.string() + ": mixes encoders or segment lengths");
    }
  }
  return s;
}

/// Every *.json manifest directly inside `dir`, sorted by file name.
inline std::vector<SweepSource> discover_manifests(const std::filesystem::path& dir) {
  std::error_code ec;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  std::vector<SweepSource> out;
  for (const auto& f : files) out.push_back(describe_manifest(f));
  return out;
}

/// Mean CV accuracy for one (manifest, layer) cell, or nullopt when the
/// manifest does not provide that layer.
inline std::optional<double> sweep_cell(const SweepSource& src, std::size_t layer,
                                        const TrainConfig& config, const WarningSink& warn) {
  std::vector<Recording> data;
  try {
    data = load_dataset(load_manifest(src.manifest), layer, warn);
  } catch (const RangeError& e) {
    if (warn) warn(std::string("absent cell: ") + e.what());
    return std::nullopt;
  }
  TrainConfig c = config;
  c.layer = layer;
  return cross_validate(data, c).accuracy.mean;
}

inline std::vector<SweepGrid> sweep(const std::vector<SweepSource>& sources,
                                    const std::vector<std::size_t>& layers,
                                    const TrainConfig& config,
                                    const WarningSink& warn = warn_stderr) {
  std::map<std::string, std::map<double, const SweepSource*>> by_encoder;
  for (const SweepSource& s : sources) {
    if (!by_encoder[s.encoder].emplace(s.seg_len_s, &s).second) {
      throw FormatError("two manifests for encoder '" + s.encoder + "' at " +
                        std::to_string(s.seg_len_s) + " s: " + s.manifest.string());
    }
  }
  std::vector<double> all_lens;
  for (const auto& [enc, cols] : by_encoder)
    for (const auto& [len, src] : cols) all_lens.push_back(len);
  std::sort(all_lens.begin(), all_lens.end());
  all_lens.erase(std::unique(all_lens.begin(), all_lens.end()), all_lens.end());

  std::vector<SweepGrid> grids;
  for (const auto& [enc, cols] : by_encoder) {
    SweepGrid g{enc, all_lens, layers, {}};
    for (std::size_t layer : layers) {
      std::vector<std::optional<double>> row;
      for (double len : all_lens) {
        auto it = cols.find(len);
        row.push_back(it == cols.end() ? std::nullopt : sweep_cell(*it->second, layer, config, warn));
      }
      g.cells.push_back(std::move(row));
    }
    grids.push_back(std::move(g));
  }
  return grids;
}

/// CSV with a header of segment lengths and one row per layer. Absent cells
/// are empty fields.
inline std::string to_csv(const SweepGrid& g) {
  std::ostringstream os;
  char buf[64];
  os << "layer";
  for (double len : g.seg_lens) {
    std::snprintf(buf, sizeof buf, "%g", len);
    os << ',' << buf;
  }
  os << '\n';
  for (std::size_t r = 0; r < g.layers.size(); ++r) {
    os << g.layers[r];
    for (const auto& cell : g.cells[r]) {
      os << ',';
      if (cell) {
        std::snprintf(buf, sizeof buf, "%.6f", *cell);
        os << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace dstc
