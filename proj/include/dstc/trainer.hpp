#pragma once

// Training and evaluation harness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dstc/adam.hpp"
#include "dstc/autodiff.hpp"
#include "dstc/error.hpp"
#include "dstc/feature_store.hpp"
#include "dstc/kfold.hpp"
#include "dstc/metrics.hpp"
#include "dstc/model.hpp"

namespace dstc {

struct TrainConfig {
  AdamConfig adam{};
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 50;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::full;
  std::size_t layer = 1;
  double dropout = 0.3;
  bool standardize = true;
  /// input_dim is taken from the data at training time.
  ModelDims dims{};
  /// Upper bound on folds trained concurrently.
  std::size_t jobs = 1;

  void check() const {
    if (!(adam.learning_rate >= 0.0)) throw ContractError("learning rate must be >= 0");
    if (batch_size == 0 || max_epochs == 0 || patience == 0 || folds == 0 || layer == 0) {
      throw ContractError("batch size, epochs, patience, folds and layer must be positive");
    }
    if (patience > max_epochs) {
      throw ContractError("patience (" + std::to_string(patience) + ") exceeds max epochs (" +
                          std::to_string(max_epochs) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
    if (jobs == 0) throw ContractError("jobs must be positive");
  }
};

/// Per-feature z-scoring fitted on valid training frames.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / std

  bool empty() const { return mean.empty(); }

  static Standardizer fit(const std::vector<Recording>& data) {
    if (data.empty()) throw ContractError("standardizer: no data");
    const std::size_t f = data.front().feature_dim();
    std::vector<double> sum(f, 0.0), sq(f, 0.0);
    double n = 0.0;
    for (const Recording& r : data) {
      for (const SegmentSequence& s : r.segments) {
        for (std::size_t t = 0; t < s.valid; ++t) {
          auto row = s.frames.row_span(t);
          for (std::size_t j = 0; j < f; ++j) {
            sum[j] += row[j];
            sq[j] += row[j] * row[j];
          }
          n += 1.0;
        }
      }
    }
    Standardizer st{std::vector<double>(f), std::vector<double>(f)};
    for (std::size_t j = 0; j < f; ++j) {
      st.mean[j] = sum[j] / n;
      const double var = std::max(0.0, sq[j] / n - st.mean[j] * st.mean[j]);
      const double sd = std::sqrt(var);
      st.scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return st;
  }

  std::vector<Recording> apply(std::vector<Recording> data) const {
    if (empty()) return data;
    for (Recording& r : data) {
      for (SegmentSequence& s : r.segments) {
        if (s.frames.cols() != mean.size()) {
          throw DimensionError("standardizer fitted on " + std::to_string(mean.size()) +
                               " features, recording '" + r.id + "' has " +
                               std::to_string(s.frames.cols()));
        }
        for (std::size_t t = 0; t < s.frames.rows(); ++t) {
          auto row = s.frames.row_span(t);
          for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) * scale[j];
        }
      }
    }
    return data;
  }
};

struct History {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  std::vector<double> val_loss;
};

struct TrainResult {
  ModelParams params;  // restored from the best validation epoch
  History history;
  std::size_t best_epoch = 0;  // 1-based
  std::size_t epochs_run = 0;
};

struct Evaluation {
  Confusion confusion;
  Metrics metrics;
  double mean_loss = 0.0;
};

inline void require_two_classes(const std::vector<Recording>& data, const char* what) {
  std::size_t counts[2] = {0, 0};
  for (const Recording& r : data) {
    if (r.label != 0 && r.label != 1) {
      throw ContractError(std::string(what) + ": recording '" + r.id + "' has no label");
    }
    ++counts[r.label];
  }
  if (counts[0] < 2 || counts[1] < 2) {
    throw ContractError(std::string(what) + " needs at least 2 recordings per class, got " +
                        std::to_string(counts[0]) + " HC and " + std::to_string(counts[1]) +
                        " AD");
  }
}

/// Cross-entropy of one recording, recorded on `tape`.
inline Var recording_loss(const BoundModel& m, const Recording& r, Ablation ablation,
                          const Dropout& dropout = {}) {
  const ForwardPass pass = forward(m, r.segments, ablation, dropout);
  return softmax_cross_entropy(pass.logits, static_cast<std::size_t>(r.label));
}

inline Evaluation evaluate(ModelParams& params, const std::vector<Recording>& data,
                           Ablation ablation) {
  if (data.empty()) throw ContractError("evaluate: empty evaluation set");
  Evaluation ev;
  double loss = 0.0;
  for (const Recording& r : data) {
    Tape tape;
    const BoundModel m = bind(tape, params);
    const ForwardPass pass = forward(m, r.segments, ablation);
    const auto logits = pass.logits.value().data();
    const std::vector<double> probs =
        masked_softmax_values(logits, std::vector<bool>(logits.size(), true));
    ev.confusion.add(r.label, predicted_label(probs));
    loss += -std::log(std::max(probs[static_cast<std::size_t>(r.label)],
                               std::numeric_limits<double>::min()));
  }
  ev.metrics = compute_metrics(ev.confusion);
  ev.mean_loss = loss / static_cast<double>(data.size());
  return ev;
}

/// Mini-batch Adam with early stopping on validation accuracy (ties broken by
/// lower validation loss). Returns the best checkpoint.
inline TrainResult train(const std::vector<Recording>& train_set,
                         const std::vector<Recording>& val_set, const TrainConfig& config) {
  config.check();
  require_two_classes(train_set, "training split");
  if (val_set.empty()) throw ContractError("train: empty validation split");

  ModelDims dims = config.dims;
  dims.input_dim = train_set.front().feature_dim();
  ModelParams params = init_model(dims, config.seed);
  std::vector<Tensor*> tensors = params.tensors();
  AdamState state = AdamState::zeros_like(tensors);
  std::vector<Tensor> grads;
  for (const Tensor* t : tensors) grads.emplace_back(t->shape(), 0.0);

  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  const Dropout dropout{config.dropout, &rng};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{params, {}, 0, 0};
  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      for (Tensor& g : grads) g.fill(0.0);
      for (std::size_t i = begin; i < end; ++i) {
        Tape tape;
        const BoundModel m = bind(tape, params);
        const Var loss = recording_loss(m, train_set[order[i]], config.ablation, dropout);
        epoch_loss += loss.value()[0];
        tape.backward(loss);
        for (std::size_t p = 0; p < grads.size(); ++p) {
          if (tape.has_grad(m.all[p].id)) grads[p] += tape.grad(m.all[p]);
        }
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (Tensor& g : grads) g *= inv;
      adam_step(tensors, grads, state, ++step, config.adam);
    }

    const Evaluation val = evaluate(params, val_set, config.ablation);
    result.history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    result.history.val_accuracy.push_back(val.metrics.accuracy);
    result.history.val_loss.push_back(val.mean_loss);
    result.epochs_run = epoch;

    const double acc = val.metrics.accuracy;
    if (acc > best_acc || (acc == best_acc && val.mean_loss < best_loss)) {
      best_acc = acc;
      best_loss = val.mean_loss;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

struct FoldReport {
  std::size_t fold = 0;
  std::size_t test_size = 0;
  Evaluation test;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  History history;
};

struct CvReport {
  TrainConfig config;
  std::vector<FoldReport> folds;
  MeanStd accuracy, f1, macro_f1;

  void aggregate() {
    std::vector<double> a, f, mf;
    for (const FoldReport& r : folds) {
      a.push_back(r.test.metrics.accuracy);
      f.push_back(r.test.metrics.f1);
      mf.push_back(r.test.metrics.macro_f1);
    }
    accuracy = mean_std(a);
    f1 = mean_std(f);
    macro_f1 = mean_std(mf);
  }
};

inline std::vector<Recording> pick(const std::vector<Recording>& data,
                                   const std::vector<std::size_t>& idx) {
  std::vector<Recording> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

/// Trains on `train_set` (with a stratified 1/folds validation carve-out) and
/// reports on `test_set`. Used for explicit train/test manifests.
struct HeldOutResult {
  FoldReport report;
  TrainResult trained;
  Standardizer standardizer;
};

inline HeldOutResult train_and_test(const std::vector<Recording>& train_set,
                                    const std::vector<Recording>& test_set,
                                    const TrainConfig& config) {
  config.check();
  if (test_set.empty()) throw ContractError("train_and_test: empty test set");
  std::vector<int> labels;
  for (const Recording& r : train_set) labels.push_back(r.label);
  require_two_classes(train_set, "training manifest");
  const std::size_t k = std::max<std::size_t>(2, config.folds);
  const FoldAssignment split = kfold_split(labels, k, config.seed);
  std::vector<Recording> fit = pick(train_set, split.members_except(0, 0));
  std::vector<Recording> val = pick(train_set, split.members(0));

  HeldOutResult out;
  if (config.standardize) out.standardizer = Standardizer::fit(fit);
  fit = out.standardizer.apply(std::move(fit));
  val = out.standardizer.apply(std::move(val));
  const std::vector<Recording> test = out.standardizer.apply(test_set);
  out.trained = train(fit, val, config);
  out.report.fold = 0;
  out.report.test_size = test.size();
  out.report.test = evaluate(out.trained.params, test, config.ablation);
  out.report.best_epoch = out.trained.best_epoch;
  out.report.epochs_run = out.trained.epochs_run;
  out.report.history = out.trained.history;
  return out;
}

/// Runs one fold of k-fold cross-validation: fold i is the test set, fold
/// (i+1) mod k is the early-stopping validation set, the rest is training data.
inline FoldReport run_fold(const std::vector<Recording>& data, const FoldAssignment& split,
                           std::size_t fold, const TrainConfig& config) {
  const std::size_t val_fold = (fold + 1) % split.k;
  std::vector<Recording> fit = pick(data, split.members_except(fold, val_fold));
  std::vector<Recording> val = pick(data, split.members(val_fold));
  std::vector<Recording> test = pick(data, split.members(fold));
  if (config.standardize) {
    const Standardizer st = Standardizer::fit(fit);
    fit = st.apply(std::move(fit));
    val = st.apply(std::move(val));
    test = st.apply(std::move(test));
  }
  TrainConfig fold_config = config;
  fold_config.seed = config.seed + fold;
  TrainResult trained = train(fit, val, fold_config);
  FoldReport report;
  report.fold = fold;
  report.test_size = test.size();
  report.test = evaluate(trained.params, test, config.ablation);
  report.best_epoch = trained.best_epoch;
  report.epochs_run = trained.epochs_run;
  report.history = std::move(trained.history);
  return report;
}

inline CvReport cross_validate(const std::vector<Recording>& data, const TrainConfig& config) {
  config.check();
  if (config.folds < 3) {
    throw ContractError("cross-validation needs at least 3 folds (test, validation, training)");
  }
  std::vector<int> labels;
  for (const Recording& r : data) labels.push_back(r.label);
  const FoldAssignment split = kfold_split(labels, config.folds, config.seed);

  CvReport report;
  report.config = config;
  report.folds.resize(config.folds);
  std::vector<std::exception_ptr> errors(config.folds);
  const std::size_t workers = std::min(config.jobs, config.folds);
  if (workers <= 1) {
    for (std::size_t f = 0; f < config.folds; ++f) report.folds[f] = run_fold(data, split, f, config);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t f;
          {
            std::lock_guard lock(mu);
            if (next >= config.folds) return;
            f = next++;
          }
          try {
            report.folds[f] = run_fold(data, split, f, config);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  report.aggregate();
  return report;
}

struct AblationReport {
  Ablation ablation;
  CvReport cv;
};

/// The four module configurations on identical folds and seeds.
inline std::vector<AblationReport> ablate(const std::vector<Recording>& data,
                                          const TrainConfig& config) {
  std::vector<AblationReport> out;
  for (Ablation a : kAllAblations) {
    TrainConfig c = config;
    c.ablation = a;
    out.push_back({a, cross_validate(data, c)});
  }
  return out;
}

}  // namespace dstc
