#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dstc/adam.hpp"
#include "dstc/kfold.hpp"
#include "dstc/metrics.hpp"
#include "dstc/report.hpp"
#include "dstc/synth.hpp"
#include "dstc/trainer.hpp"

using namespace dstc;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.dims.lstm_hidden = 4;
  c.dims.segment_dim = 4;
  c.dims.score_hidden1 = 4;
  c.dims.score_hidden2 = 3;
  c.adam.learning_rate = 3e-3;
  c.batch_size = 8;
  c.max_epochs = 3;
  c.patience = 3;
  c.folds = 3;
  c.seed = 9;
  return c;
}

std::vector<Recording> tiny_data(std::size_t n, std::uint64_t seed = 1) {
  SynthConfig s;
  s.n_recordings = n;
  s.frames = 6;
  s.features = 8;
  s.seed = seed;
  return synth_recordings(s);
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is -lr * g / (|g| + eps).
  Tensor p = Tensor::row({1.0, -2.0});
  std::vector<Tensor*> params{&p};
  std::vector<Tensor> grads{Tensor::row({0.5, -3.0})};
  AdamState st = AdamState::zeros_like(params);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step(params, grads, st, 1, cfg);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
}

TEST(Adam, SecondStepMatchesReference) {
  Tensor p = Tensor::row({0.0});
  std::vector<Tensor*> params{&p};
  AdamState st = AdamState::zeros_like(params);
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<Tensor> g1{Tensor::row({1.0})}, g2{Tensor::row({-2.0})};
  adam_step(params, g1, st, 1, cfg);
  adam_step(params, g2, st, 2, cfg);
  double m = 0.0, v = 0.0, x = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : -2.0;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p[0], x, 1e-14);
}

TEST(Adam, RejectsMismatchedState) {
  Tensor p = Tensor::row({0.0});
  std::vector<Tensor*> params{&p};
  AdamState st;
  std::vector<Tensor> g{Tensor::row({1.0})};
  EXPECT_THROW(adam_step(params, g, st, 1, {}), DimensionError);
  st = AdamState::zeros_like(params);
  EXPECT_THROW(adam_step(params, g, st, 0, {}), ContractError);
}

TEST(Metrics, WorkedF1Example) {
  Confusion c;
  c.tp = 3;
  c.fp = 1;
  c.fn = 2;
  c.tn = 4;
  const Metrics m = compute_metrics(c);
  EXPECT_NEAR(m.precision, 0.75, 1e-12);
  EXPECT_NEAR(m.recall, 0.6, 1e-12);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.accuracy, 0.7, 1e-12);
  // HC side: precision 4/6, recall 4/5.
  const double f1_hc = 2 * (4.0 / 6) * 0.8 / (4.0 / 6 + 0.8);
  EXPECT_NEAR(m.macro_f1, 0.5 * (2.0 / 3.0 + f1_hc), 1e-12);
}

TEST(Metrics, NoPositivePredictionsGivesZeroF1) {
  Confusion c;
  c.fn = 2;
  c.tn = 3;
  const Metrics m = compute_metrics(c);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_THROW(compute_metrics(Confusion{}), ContractError);
}

TEST(Metrics, SampleStandardDeviation) {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const MeanStd s = mean_std(xs);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-12);
}

TEST(KFold, StratifiedDisjointExhaustive) {
  std::vector<int> labels;
  for (int i = 0; i < 53; ++i) labels.push_back(i % 3 == 0 ? 1 : 0);
  const FoldAssignment f = kfold_split(labels, 5, 7);
  std::set<std::size_t> seen;
  for (std::size_t k = 0; k < 5; ++k) {
    const auto members = f.members(k);
    for (std::size_t i : members) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), labels.size());
  for (int cls = 0; cls < 2; ++cls) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      std::size_t n = 0;
      for (std::size_t i : f.members(k)) n += labels[i] == cls;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    EXPECT_LE(hi - lo, 1u) << "class " << cls;
  }
}

TEST(KFold, SeedChangesAssignmentButIsReproducible) {
  std::vector<int> labels(40);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  EXPECT_EQ(kfold_split(labels, 4, 1).fold_of, kfold_split(labels, 4, 1).fold_of);
  EXPECT_NE(kfold_split(labels, 4, 1).fold_of, kfold_split(labels, 4, 2).fold_of);
}

TEST(KFold, TooFewMembersIsAnError) {
  EXPECT_THROW(kfold_split({0, 1, 0, 1}, 3, 0), ContractError);
  EXPECT_THROW(kfold_split({0, 1}, 1, 0), ContractError);
}

TEST(Standardizer, UsesOnlyValidFrames) {
  SegmentSequence s{Tensor::matrix({{1.0}, {3.0}, {1000.0}}), 2};
  const std::vector<Recording> data{{"a", 0, {s}}};
  const Standardizer st = Standardizer::fit(data);
  EXPECT_DOUBLE_EQ(st.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(st.scale[0], 1.0);
  const auto out = st.apply(data);
  EXPECT_DOUBLE_EQ(out[0].segments[0].frames(0, 0), -1.0);
}

TEST(Standardizer, ConstantFeatureIsLeftUnscaled) {
  SegmentSequence s{Tensor::matrix({{5.0, 1.0}, {5.0, 2.0}}), 2};
  const Standardizer st = Standardizer::fit({{"a", 0, {s}}});
  EXPECT_DOUBLE_EQ(st.scale[0], 1.0);
}

TEST(Train, ZeroLearningRateStopsAfterPatience) {
  // Nothing changes, so epoch 1 stays best and patience 1 stops at epoch 2.
  TrainConfig c = tiny_config();
  c.adam.learning_rate = 0.0;
  c.max_epochs = 10;
  c.patience = 1;
  const auto data = tiny_data(12);
  const std::vector<Recording> fit(data.begin(), data.begin() + 8), val(data.begin() + 8, data.end());
  const TrainResult r = train(fit, val, c);
  EXPECT_EQ(r.epochs_run, 2u);
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_EQ(r.history.val_accuracy.size(), 2u);
}

TEST(Train, SingleClassTrainingSetIsRejected) {
  auto data = tiny_data(12);
  for (auto& r : data) r.label = 0;
  EXPECT_THROW(train(data, data, tiny_config()), ContractError);
}

TEST(Train, LossDecreasesOnEasyData) {
  TrainConfig c = tiny_config();
  c.max_epochs = 15;
  c.patience = 15;
  c.dropout = 0.0;
  const auto data = tiny_data(16, 3);
  const TrainResult r = train(data, data, c);
  EXPECT_LT(r.history.train_loss.back(), r.history.train_loss.front());
}

TEST(CrossValidate, DeterministicReportsAndParallelMatchesSerial) {
  TrainConfig c = tiny_config();
  const auto data = tiny_data(24);
  const std::string a = to_json(cross_validate(data, c)).dump();
  const std::string b = to_json(cross_validate(data, c)).dump();
  EXPECT_EQ(a, b);
  c.jobs = 3;
  EXPECT_EQ(to_json(cross_validate(data, c)).dump(), a);
}

TEST(CrossValidate, EveryRecordingIsTestedOnce) {
  TrainConfig c = tiny_config();
  const auto data = tiny_data(24);
  const CvReport r = cross_validate(data, c);
  std::size_t tested = 0;
  for (const FoldReport& f : r.folds) tested += f.test.confusion.total();
  EXPECT_EQ(tested, data.size());
  EXPECT_EQ(r.folds.size(), 3u);
}

TEST(CrossValidate, NeedsThreeFolds) {
  TrainConfig c = tiny_config();
  c.folds = 2;
  EXPECT_THROW(cross_validate(tiny_data(12), c), ContractError);
}

TEST(TrainAndTest, SavedModelReproducesEvaluation) {
  TrainConfig c = tiny_config();
  const auto train_set = tiny_data(24, 1), test_set = tiny_data(10, 2);
  HeldOutResult held = train_and_test(train_set, test_set, c);
  SavedModel sm{held.trained.params, c.ablation, c.layer, held.standardizer};
  SavedModel back = saved_model_from_json(nlohmann::json::parse(to_json(sm).dump()), "mem");
  const Evaluation ev = evaluate(back.params, back.standardizer.apply(test_set), back.ablation);
  EXPECT_EQ(ev.confusion, held.report.test.confusion);
  EXPECT_NEAR(ev.mean_loss, held.report.test.mean_loss, 1e-12);
}

TEST(Config, RejectsNonsense) {
  TrainConfig c = tiny_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.check(), ContractError);
  c = tiny_config();
  c.batch_size = 0;
  EXPECT_THROW(c.check(), ContractError);
  c = tiny_config();
  c.adam.learning_rate = -1.0;
  EXPECT_THROW(c.check(), ContractError);
}
