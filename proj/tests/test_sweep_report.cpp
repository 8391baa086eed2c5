#include <gtest/gtest.h>

#include <filesystem>

#include "dstc/report.hpp"
#include "dstc/sweep.hpp"
#include "dstc/synth.hpp"

using namespace dstc;
namespace fs = std::filesystem;

namespace {

TrainConfig fast_config() {
  TrainConfig c;
  c.dims.lstm_hidden = 8;
  c.dims.segment_dim = 8;
  c.dims.score_hidden1 = 8;
  c.dims.score_hidden2 = 4;
  c.adam.learning_rate = 1e-2;
  c.batch_size = 8;
  c.max_epochs = 25;
  c.patience = 8;
  c.folds = 4;
  c.dropout = 0.0;
  c.seed = 1;
  return c;
}

}  // namespace

TEST(ParseLayers, RangesAndLists) {
  EXPECT_EQ(parse_layers("1..4"), (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(parse_layers("2,7"), (std::vector<std::size_t>{2, 7}));
  EXPECT_EQ(parse_layers("5"), (std::vector<std::size_t>{5}));
  EXPECT_THROW(parse_layers("0..3"), ContractError);
  EXPECT_THROW(parse_layers("4..2"), ContractError);
  EXPECT_THROW(parse_layers("a,b"), ContractError);
}

TEST(SweepCsv, AbsentCellsAreEmptyFields) {
  SweepGrid g{"enc", {5.0, 10.0}, {1, 2}, {{0.5, std::nullopt}, {0.75, 1.0}}};
  EXPECT_EQ(to_csv(g), "layer,5,10\n1,0.500000,\n2,0.750000,1.000000\n");
}

TEST(Sweep, FindsTheLayerThatCarriesTheSignal) {
  const fs::path dir = fs::temp_directory_path() / "dstc_sweep_signal";
  fs::remove_all(dir);
  SynthConfig s;
  s.n_recordings = 48;
  s.layers = 3;
  s.signal_layer = 3;
  s.pattern_strength = 3.0;
  s.frames = 8;
  s.features = 8;
  s.seed = 4;
  s.seg_len_s = 10.0;
  synth_dataset(s, dir / "seg10");
  s.seg_len_s = 5.0;
  s.layers = 2;  // no layer 3 here: that cell is absent
  s.signal_layer = 2;
  synth_dataset(s, dir / "seg5");
  // Manifests live in `dir`; their paths point into the subdirectories.
  for (const char* sub : {"seg10", "seg5"}) {
    Manifest m = load_manifest(dir / sub / "manifest.json");
    for (auto& e : m.entries) e.path = std::string(sub) + "/" + e.path;
    save_manifest(m, dir / (std::string(sub) + ".json"));
  }
  const auto sources = discover_manifests(dir);
  ASSERT_EQ(sources.size(), 2u);

  std::vector<std::string> warnings;
  const auto grids = sweep(sources, {1, 3}, fast_config(),
                           [&](const std::string& w) { warnings.push_back(w); });
  ASSERT_EQ(grids.size(), 1u);  // one encoder
  const SweepGrid& g = grids[0];
  ASSERT_EQ(g.seg_lens, (std::vector<double>{5.0, 10.0}));
  // Column 10 s: only layer 3 carries the pattern.
  ASSERT_TRUE(g.cells[0][1] && g.cells[1][1]);
  EXPECT_GT(*g.cells[1][1], 0.85);
  EXPECT_LT(*g.cells[0][1], 0.75);
  // Column 5 s has two layers, so layer 3 is absent.
  EXPECT_TRUE(g.cells[0][0].has_value());
  EXPECT_FALSE(g.cells[1][0].has_value());
  EXPECT_FALSE(warnings.empty());
  EXPECT_NE(to_csv(g).find("\n3,,"), std::string::npos) << to_csv(g);
  fs::remove_all(dir);
}

TEST(Report, RendersCvAndAblationJson) {
  CvReport cv;
  cv.accuracy = {0.8, 0.05};
  cv.f1 = {0.75, 0.1};
  cv.macro_f1 = {0.79, 0.04};
  const std::string row = render_report(to_json(cv), "run");
  EXPECT_NE(row.find("80.00 +-  5.00"), std::string::npos) << row;
  std::vector<AblationReport> abl{{Ablation::baseline, cv}, {Ablation::full, cv}};
  const std::string rows = render_report(to_json(abl), "abl");
  EXPECT_NE(rows.find("abl:baseline"), std::string::npos);
  EXPECT_NE(rows.find("abl:full"), std::string::npos);
  EXPECT_THROW(render_report(nlohmann::json{{"x", 1}}, "bad"), FormatError);
}

TEST(SavedModel, WrongShapeIsAFormatError) {
  ModelDims d;
  d.input_dim = 4;
  d.lstm_hidden = 2;
  d.segment_dim = 3;
  SavedModel m{init_model(d, 1), Ablation::full, 1, {}};
  nlohmann::json j = to_json(m);
  j["tensors"]["ista.attention"]["shape"] = {3, 3};
  j["tensors"]["ista.attention"]["data"] = std::vector<double>(9, 0.0);
  EXPECT_THROW(saved_model_from_json(j, "m.json"), FormatError);
  j = to_json(m);
  j["format"] = "other";
  EXPECT_THROW(saved_model_from_json(j, "m.json"), FormatError);
}
