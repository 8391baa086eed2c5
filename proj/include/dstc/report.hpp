#pragma once

// JSON encodings of training configurations, fold reports and models, and
// the human-readable report table.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dstc/error.hpp"
#include "dstc/model.hpp"
#include "dstc/trainer.hpp"

namespace dstc {

using nlohmann::json;

inline std::string to_string(ScoringLayout l) {
  return l == ScoringLayout::scoring_head ? "scoring_head" : "post_aggregation";
}

inline ScoringLayout parse_layout(const std::string& s) {
  if (s == "scoring_head") return ScoringLayout::scoring_head;
  if (s == "post_aggregation") return ScoringLayout::post_aggregation;
  throw ContractError("unknown scoring layout '" + s + "'");
}

inline json to_json(const ModelDims& d) {
  return {{"input_dim", d.input_dim},         {"lstm_hidden", d.lstm_hidden},
          {"segment_dim", d.segment_dim},     {"score_hidden1", d.score_hidden1},
          {"score_hidden2", d.score_hidden2}, {"layout", to_string(d.layout)}};
}

inline ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.input_dim = j.at("input_dim").get<std::size_t>();
  d.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  d.segment_dim = j.at("segment_dim").get<std::size_t>();
  d.score_hidden1 = j.at("score_hidden1").get<std::size_t>();
  d.score_hidden2 = j.at("score_hidden2").get<std::size_t>();
  d.layout = parse_layout(j.at("layout").get<std::string>());
  return d;
}

inline json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.adam.learning_rate},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"folds", c.folds},
          {"seed", c.seed},
          {"ablation", to_string(c.ablation)},
          {"layer", c.layer},
          {"dropout", c.dropout},
          {"standardize", c.standardize},
          {"dims", to_json(c.dims)}};
}

inline json to_json(const Confusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

inline json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

inline json to_json(const FoldReport& r) {
  const Metrics& m = r.test.metrics;
  return {{"fold", r.fold},
          {"test_size", r.test_size},
          {"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"macro_f1", m.macro_f1},
          {"test_loss", r.test.mean_loss},
          {"confusion", to_json(r.test.confusion)},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run},
          {"history",
           {{"train_loss", r.history.train_loss},
            {"val_accuracy", r.history.val_accuracy},
            {"val_loss", r.history.val_loss}}}};
}

inline json to_json(const CvReport& r) {
  json folds = json::array();
  for (const FoldReport& f : r.folds) folds.push_back(to_json(f));
  return {{"config", to_json(r.config)},
          {"folds", folds},
          {"aggregate",
           {{"accuracy", to_json(r.accuracy)},
            {"f1", to_json(r.f1)},
            {"macro_f1", to_json(r.macro_f1)}}}};
}

inline json to_json(const std::vector<AblationReport>& reports) {
  json out = json::object();
  for (const AblationReport& r : reports) out[to_string(r.ablation)] = to_json(r.cv);
  return out;
}

inline json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

/// A trained model together with everything needed to run it on new files.
struct SavedModel {
  ModelParams params;
  Ablation ablation = Ablation::full;
  std::size_t layer = 1;
  Standardizer standardizer;
};

inline json to_json(SavedModel& m) {
  json tensors = json::object();
  for (auto& [name, t] : m.params.named()) tensors[name] = tensor_to_json(*t);
  return {{"format", "dstc-model"},
          {"version", 1},
          {"dims", to_json(m.params.dims)},
          {"ablation", to_string(m.ablation)},
          {"layer", m.layer},
          {"standardizer", {{"mean", m.standardizer.mean}, {"scale", m.standardizer.scale}}},
          {"tensors", tensors}};
}

inline SavedModel saved_model_from_json(const json& j, const std::string& where) {
  try {
    if (j.at("format").get<std::string>() != "dstc-model" || j.at("version").get<int>() != 1) {
      throw FormatError(where + ": not a version-1 dstc model file");
    }
    SavedModel m;
    m.params = init_model(dims_from_json(j.at("dims")), 0);
    m.ablation = parse_ablation(j.at("ablation").get<std::string>());
    m.layer = j.at("layer").get<std::size_t>();
    m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    m.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    const json& tensors = j.at("tensors");
    for (auto& [name, t] : m.params.named()) {
      Tensor loaded = tensor_from_json(tensors.at(name));
      if (loaded.shape() != t->shape()) {
        throw FormatError(where + ": tensor " + name + " has shape " +
                          shape_str(loaded.shape()) + ", expected " + shape_str(t->shape()));
      }
      *t = std::move(loaded);
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const ContractError& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {

inline std::string pct(const json& stat) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%6.2f +- %5.2f", 100.0 * stat.at("mean").get<double>(),
                100.0 * stat.at("std").get<double>());
  return buf;
}

inline void render_cv(std::ostringstream& os, const std::string& name, const json& cv) {
  const json& agg = cv.at("aggregate");
  os << std::left << std::setw(28) << name << std::setw(18) << pct(agg.at("accuracy"))
     << std::setw(18) << pct(agg.at("f1")) << pct(agg.at("macro_f1")) << '\n';
}

}  // namespace detail

/// Renders CV or ablation report JSON as a table of mean +- std (percent).
inline std::string render_report(const json& report, const std::string& label) {
  std::ostringstream os;
  try {
    if (report.contains("folds")) {
      detail::render_cv(os, label, report);
    } else {
      for (const auto& [name, cv] : report.items()) detail::render_cv(os, label + ":" + name, cv);
    }
  } catch (const json::exception& e) {
    throw FormatError(label + ": not a dstc report (" + e.what() + ")");
  }
  return os.str();
}

inline std::string report_header() {
  std::ostringstream os;
  os << std::left << std::setw(28) << "report" << std::setw(18) << "accuracy %" << std::setw(18)
     << "F1 (AD) %" << "macro-F1 %" << '\n';
  return os.str();
}

}  // namespace dstc
