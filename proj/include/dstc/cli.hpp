#pragma once

// Command-line front end. Each subcommand parses flags and hands off to the
// library; run_cli() is callable in-process for testing.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dstc/error.hpp"
#include "dstc/feature_store.hpp"
#include "dstc/model.hpp"
#include "dstc/report.hpp"
#include "dstc/segmenter.hpp"
#include "dstc/sweep.hpp"
#include "dstc/synth.hpp"
#include "dstc/trainer.hpp"
#include "dstc/wav.hpp"

namespace dstc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitContract = 1;
inline constexpr int kExitIo = 2;

struct TrainFlags {
  TrainConfig config;
  std::string ablation = "full";
  std::string layout = "scoring_head";
  bool no_standardize = false;
};

inline void add_train_flags(CLI::App* app, TrainFlags& f, bool with_ablation) {
  TrainConfig& c = f.config;
  app->add_option("--layer", c.layer, "Encoder layer to use (1-based)");
  if (with_ablation) {
    app->add_option("--ablation", f.ablation, "full | ista_only | csca_only | baseline");
  }
  app->add_option("--seed", c.seed, "Base seed (overridden by DSTC_SEED)");
  app->add_option("--lr", c.adam.learning_rate, "Adam learning rate");
  app->add_option("--batch-size", c.batch_size, "Recordings per mini-batch");
  app->add_option("--epochs", c.max_epochs, "Maximum training epochs");
  app->add_option("--patience", c.patience, "Early-stopping patience in epochs");
  app->add_option("--folds", c.folds, "Cross-validation folds");
  app->add_option("--dropout", c.dropout, "Dropout rate on BiLSTM outputs");
  app->add_flag("--no-standardize", f.no_standardize,
                "Disable per-feature z-scoring with training statistics");
  app->add_option("--hidden", c.dims.lstm_hidden, "LSTM hidden units per direction");
  app->add_option("--segment-dim", c.dims.segment_dim, "Segment representation width");
  app->add_option("--score-hidden1", c.dims.score_hidden1, "First hidden width of the 64/32 MLP");
  app->add_option("--score-hidden2", c.dims.score_hidden2,
                  "Second hidden width of the 64/32 MLP");
  app->add_option("--layout", f.layout,
                  "scoring_head (canonical) | post_aggregation (non-canonical comparison)");
  app->add_option("--jobs", c.jobs, "Folds trained in parallel");
}

inline TrainConfig finish_train_flags(TrainFlags& f) {
  TrainConfig c = f.config;
  c.ablation = parse_ablation(f.ablation);
  c.dims.layout = parse_layout(f.layout);
  c.standardize = !f.no_standardize;
  if (const char* env = std::getenv("DSTC_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t pos = 0;
      c.seed = std::stoull(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ContractError(std::string("DSTC_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  c.check();
  return c;
}

inline void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_text_file(out_path, text);
  }
}

inline std::string segment_table(const std::vector<SegmentSpec>& specs) {
  std::ostringstream os;
  os << "index\tstart_s\tend_s\tpad_s\n";
  char buf[128];
  for (const SegmentSpec& s : specs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.3f\t%.3f\t%.3f\n", s.index, s.start_s, s.end_s,
                  s.pad_s);
    os << buf;
  }
  return os.str();
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage segment/recording attention network for long speech recordings"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // segment
  std::string audio;
  std::optional<double> duration;
  double seg_len = 10.0, overlap = kDefaultOverlap;
  auto* seg_cmd = app.add_subcommand("segment", "Print the segmentation plan of a recording");
  auto* audio_opt = seg_cmd->add_option("--audio", audio, "Mono WAV (16-bit PCM or 32-bit float)");
  seg_cmd->add_option("--duration", duration, "Recording length in seconds instead of --audio")
      ->excludes(audio_opt);
  seg_cmd->add_option("--seg-len", seg_len, "Segment length in seconds");
  seg_cmd->add_option("--overlap", overlap, "Overlap fraction between adjacent segments");

  // synth
  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic labelled dataset");
  synth_cmd->add_option("--n", synth.n_recordings, "Number of recordings (even)");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed (overridden by DSTC_SEED)");
  synth_cmd->add_option("--strength", synth.pattern_strength, "Amplitude of the planted pattern");
  synth_cmd->add_option("--min-segments", synth.min_segments, "Fewest segments per recording");
  synth_cmd->add_option("--max-segments", synth.max_segments, "Most segments per recording");
  synth_cmd->add_option("--frames", synth.frames, "Frames per segment");
  synth_cmd->add_option("--features", synth.features, "Feature width (>= 8)");
  synth_cmd->add_option("--layers", synth.layers, "Encoder layers per file");
  synth_cmd->add_option("--signal-layer", synth.signal_layer,
                        "Layer carrying the pattern (0 = all layers)");
  synth_cmd->add_option("--seg-len", synth.seg_len_s, "Nominal segment length in seconds");
  synth_cmd->add_option("--overlap", synth.overlap_frac, "Nominal overlap fraction");
  synth_cmd->add_option("--encoder", synth.encoder_name, "Encoder name written to the manifest");

  // validate
  std::string validate_manifest_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a manifest and every feature file");
  validate_cmd->add_option("manifest", validate_manifest_path, "Manifest JSON")->required();

  // train
  TrainFlags train_flags;
  std::string train_manifest, test_manifest, train_out, save_model;
  auto* train_cmd = app.add_subcommand(
      "train", "Cross-validate on a manifest, or train on it and test on --test-manifest");
  train_cmd->add_option("--manifest", train_manifest, "Training manifest")->required();
  train_cmd->add_option("--test-manifest", test_manifest, "Held-out test manifest");
  train_cmd->add_option("--out", train_out, "Report JSON path (stdout if omitted)");
  train_cmd->add_option("--save-model", save_model, "Write the trained model (needs --test-manifest)");
  add_train_flags(train_cmd, train_flags, true);

  // ablate
  TrainFlags ablate_flags;
  std::string ablate_manifest, ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "Cross-validate all four module configurations");
  ablate_cmd->add_option("--manifest", ablate_manifest, "Manifest")->required();
  ablate_cmd->add_option("--out", ablate_out, "Report JSON path (stdout if omitted)");
  add_train_flags(ablate_cmd, ablate_flags, false);

  // eval
  std::string eval_model, eval_manifest, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model on a manifest");
  eval_cmd->add_option("--model", eval_model, "Model JSON from train --save-model")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "Manifest")->required();
  eval_cmd->add_option("--out", eval_out, "Report JSON path (stdout if omitted)");

  // sweep
  TrainFlags sweep_flags;
  std::string sweep_dir, sweep_layers = "1..12", sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Layer x segment-length accuracy grid");
  sweep_cmd->add_option("--manifests", sweep_dir, "Directory of manifests")->required();
  sweep_cmd->add_option("--layers", sweep_layers, "Layers, e.g. 1..12 or 2,6,10");
  sweep_cmd->add_option("--out", sweep_out,
                        "CSV path (stdout if omitted); with several encoders, "
                        "<stem>.<encoder>.csv is written per encoder");
  add_train_flags(sweep_cmd, sweep_flags, true);

  // report
  std::vector<std::string> report_files;
  auto* report_cmd = app.add_subcommand("report", "Summarise report JSON files as a table");
  report_cmd->add_option("reports", report_files, "Report JSON files")->required();

  std::vector<const char*> argv{"dstc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitContract;
  }

  try {
    if (*seg_cmd) {
      std::vector<SegmentSpec> specs;
      if (!audio.empty()) {
        const Wav wav = read_wav(audio);
        if (wav.samples.empty()) throw FormatError(audio + ": no audio samples");
        specs = plan_segments(wav.duration_s(), seg_len, overlap, wav.rate_hz);
      } else if (duration) {
        specs = plan_segments(*duration, seg_len, overlap);
      } else {
        throw ContractError("segment: give --audio or --duration");
      }
      out << segment_table(specs);
    } else if (*synth_cmd) {
      if (const char* env = std::getenv("DSTC_SEED"); env && *env) synth.seed = std::stoull(env);
      const auto path = synth_dataset(synth, synth_out);
      out << "wrote " << synth.n_recordings << " recordings and " << path.string() << '\n';
    } else if (*validate_cmd) {
      const Manifest m = load_manifest(validate_manifest_path);
      const ValidationReport r = validate_manifest(m);
      for (const auto& w : r.warnings) err << "warning: " << w << '\n';
      for (const auto& e : r.errors) err << "error: " << e << '\n';
      if (!r.ok()) {
        err << validate_manifest_path << ": " << r.errors.size() << " of " << m.entries.size()
            << " files failed validation\n";
        return kExitContract;
      }
      out << validate_manifest_path << ": " << m.entries.size() << " files OK\n";
    } else if (*train_cmd) {
      const TrainConfig config = finish_train_flags(train_flags);
      const auto data = load_dataset(load_manifest(train_manifest), config.layer);
      json report;
      if (test_manifest.empty()) {
        if (!save_model.empty()) {
          throw ContractError("--save-model needs --test-manifest (cross-validation trains k models)");
        }
        report = to_json(cross_validate(data, config));
      } else {
        const auto test = load_dataset(load_manifest(test_manifest), config.layer);
        HeldOutResult held = train_and_test(data, test, config);
        CvReport cv;
        cv.config = config;
        cv.folds.push_back(held.report);
        cv.aggregate();
        report = to_json(cv);
        if (!save_model.empty()) {
          SavedModel sm{std::move(held.trained.params), config.ablation, config.layer,
                        held.standardizer};
          write_text_file(save_model, to_json(sm).dump() + "\n");
        }
      }
      emit(report.dump(2) + "\n", train_out, out);
    } else if (*ablate_cmd) {
      const TrainConfig config = finish_train_flags(ablate_flags);
      const auto data = load_dataset(load_manifest(ablate_manifest), config.layer);
      emit(to_json(ablate(data, config)).dump(2) + "\n", ablate_out, out);
    } else if (*eval_cmd) {
      SavedModel sm = saved_model_from_json(read_json_file(eval_model), eval_model);
      const auto data =
          sm.standardizer.apply(load_dataset(load_manifest(eval_manifest), sm.layer));
      const Evaluation ev = evaluate(sm.params, data, sm.ablation);
      json preds = json::array();
      for (const Recording& r : data) {
        const RecordingOutput o = predict(sm.params, r.segments, sm.ablation);
        preds.push_back({{"recording_id", r.id},
                         {"label", r.label},
                         {"predicted", o.predicted},
                         {"prob_ad", o.probs[1]}});
      }
      FoldReport fr;
      fr.test_size = data.size();
      fr.test = ev;
      json report = to_json(fr);
      report.erase("history");
      report.erase("best_epoch");
      report.erase("epochs_run");
      report["predictions"] = preds;
      emit(report.dump(2) + "\n", eval_out, out);
    } else if (*sweep_cmd) {
      const TrainConfig config = finish_train_flags(sweep_flags);
      const auto sources = discover_manifests(sweep_dir);
      if (sources.empty()) throw ContractError(sweep_dir + ": no manifests found");
      const auto grids = sweep(sources, parse_layers(sweep_layers), config,
                               [&](const std::string& w) { err << "warning: " << w << '\n'; });
      if (grids.size() == 1 || sweep_out.empty()) {
        for (const SweepGrid& g : grids) {
          if (grids.size() > 1) out << "# encoder " << g.encoder << '\n';
          emit(to_csv(g), sweep_out, out);
        }
      } else {
        const std::filesystem::path base(sweep_out);
        for (const SweepGrid& g : grids) {
          auto path = base.parent_path() / (base.stem().string() + "." + g.encoder + ".csv");
          write_text_file(path, to_csv(g));
          out << "wrote " << path.string() << '\n';
        }
      }
    } else if (*report_cmd) {
      out << report_header();
      for (const auto& f : report_files) {
        out << render_report(read_json_file(f), std::filesystem::path(f).filename().string());
      }
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitContract;
  }
  return kExitOk;
}

}  // namespace dstc::cli
