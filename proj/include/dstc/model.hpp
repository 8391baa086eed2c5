#pragma once

// The full two-stage network and its ablated variants.
//
//   full       ISTA per segment -> CSCA over segments -> classifier
//   ista_only  ISTA per segment -> mean over segments -> classifier
//   csca_only  frame mean + projection per segment -> CSCA -> classifier
//   baseline   frame mean + projection per segment -> mean over segments -> classifier

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dstc/autodiff.hpp"
#include "dstc/csca.hpp"
#include "dstc/error.hpp"
#include "dstc/feature_store.hpp"
#include "dstc/ista.hpp"
#include "dstc/layers.hpp"

namespace dstc {

enum class Ablation { full, ista_only, csca_only, baseline };

inline constexpr Ablation kAllAblations[] = {Ablation::baseline, Ablation::ista_only,
                                             Ablation::csca_only, Ablation::full};

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::ista_only: return "ista_only";
    case Ablation::csca_only: return "csca_only";
    case Ablation::baseline: return "baseline";
  }
  return "?";
}

inline Ablation parse_ablation(std::string_view s) {
  for (Ablation a : kAllAblations) {
    if (s == to_string(a)) return a;
  }
  throw ContractError("unknown ablation '" + std::string(s) +
                      "' (expected full, ista_only, csca_only or baseline)");
}

inline bool uses_ista(Ablation a) { return a == Ablation::full || a == Ablation::ista_only; }
inline bool uses_csca(Ablation a) { return a == Ablation::full || a == Ablation::csca_only; }

struct ModelDims {
  std::size_t input_dim = 768;
  std::size_t lstm_hidden = 128;
  std::size_t segment_dim = 128;
  std::size_t score_hidden1 = 64;
  std::size_t score_hidden2 = 32;
  ScoringLayout layout = ScoringLayout::scoring_head;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ModelParams {
  ModelDims dims;
  IstaParams ista;
  Affine frame_pool;  // F -> D, used when ISTA is ablated away
  CscaParams csca;

  /// Every learnable tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto dir = [&](const std::string& prefix, LstmDirection& d) {
      out.emplace_back(prefix + ".w_ih", &d.w_ih);
      out.emplace_back(prefix + ".w_hh", &d.w_hh);
      out.emplace_back(prefix + ".b", &d.b);
    };
    dir("ista.forward", ista.forward);
    dir("ista.backward", ista.backward);
    out.emplace_back("ista.attention", &ista.attention);
    out.emplace_back("ista.head.w", &ista.head.w);
    out.emplace_back("ista.head.b", &ista.head.b);
    out.emplace_back("frame_pool.w", &frame_pool.w);
    out.emplace_back("frame_pool.b", &frame_pool.b);
    for (std::size_t k = 0; k < csca.conv.size(); ++k) {
      out.emplace_back("csca.conv." + std::to_string(k), &csca.conv[k]);
    }
    out.emplace_back("csca.conv_b", &csca.conv_b);
    for (std::size_t i = 0; i < csca.scoring.size(); ++i) {
      out.emplace_back("csca.scoring." + std::to_string(i) + ".w", &csca.scoring[i].w);
      out.emplace_back("csca.scoring." + std::to_string(i) + ".b", &csca.scoring[i].b);
    }
    for (std::size_t i = 0; i < csca.classifier.size(); ++i) {
      out.emplace_back("csca.classifier." + std::to_string(i) + ".w", &csca.classifier[i].w);
      out.emplace_back("csca.classifier." + std::to_string(i) + ".b", &csca.classifier[i].b);
    }
    return out;
  }

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Tensor* t : tensors()) n += t->size();
    return n;
  }
};

inline ModelParams init_model(const ModelDims& dims, std::uint64_t seed) {
  if (dims.input_dim == 0 || dims.lstm_hidden == 0 || dims.segment_dim == 0 ||
      dims.score_hidden1 == 0 || dims.score_hidden2 == 0) {
    throw ContractError("model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.dims = dims;
  p.ista = make_ista_params(dims.input_dim, dims.lstm_hidden, dims.segment_dim, rng);
  p.frame_pool = make_affine(dims.input_dim, dims.segment_dim, rng);
  p.csca = make_csca_params(dims.segment_dim, dims.score_hidden1, dims.score_hidden2,
                            dims.layout, rng);
  return p;
}

/// Parameters registered on one tape. `all` follows ModelParams::named() order.
struct BoundModel {
  IstaVars ista;
  AffineVars frame_pool;
  CscaVars csca;
  std::vector<Var> all;
};

inline BoundModel bind(Tape& tape, ModelParams& p) {
  const std::size_t first = tape.size();
  BoundModel m{bind(tape, p.ista), bind(tape, p.frame_pool), bind(tape, p.csca), {}};
  std::unordered_map<const Tensor*, std::size_t> ids;
  for (std::size_t id = first; id < tape.size(); ++id) ids.emplace(tape.borrowed(id), id);
  for (Tensor* t : p.tensors()) m.all.push_back(Var{&tape, ids.at(t)});
  return m;
}

/// Rebuilds a BoundModel from Vars already on a tape, one per tensor in
/// ModelParams::named() order (e.g. the leaves created by grad_check).
inline BoundModel bind_vars(const ModelParams& p, std::span<const Var> v) {
  const std::size_t expected =
      15 + 2 * (p.csca.scoring.size() + p.csca.classifier.size());
  if (v.size() != expected) {
    throw DimensionError("bind_vars: got " + std::to_string(v.size()) + " vars, model has " +
                         std::to_string(expected) + " tensors");
  }
  std::size_t k = 0;
  auto next = [&] { return v[k++]; };
  BoundModel m;
  m.ista.forward = {next(), next(), next()};
  m.ista.backward = {next(), next(), next()};
  m.ista.attention = next();
  m.ista.head = {next(), next()};
  m.frame_pool = {next(), next()};
  for (Var& tap : m.csca.conv) tap = next();
  m.csca.conv_b = next();
  for (std::size_t i = 0; i < p.csca.scoring.size(); ++i) m.csca.scoring.push_back({next(), next()});
  for (std::size_t i = 0; i < p.csca.classifier.size(); ++i) {
    m.csca.classifier.push_back({next(), next()});
  }
  m.all.assign(v.begin(), v.end());
  return m;
}

struct ForwardPass {
  Var logits;                // 1 x 2
  Var global;                // 1 x D
  Var segments;              // M x D, per-segment representations
  std::optional<Var> beta;   // 1 x M when CSCA is active
  std::vector<Var> alphas;   // per segment 1 x T when ISTA is active
};

/// Mean over the valid frames of one segment, 1 x F.
inline Var mean_valid_frames(const Var& frames, std::size_t valid) {
  Tensor w = Tensor::matrix(1, frames.value().rows());
  for (std::size_t t = 0; t < valid; ++t) w[t] = 1.0 / static_cast<double>(valid);
  return matmul(frames.tape->constant(std::move(w)), frames);
}

inline ForwardPass forward(const BoundModel& m, const std::vector<SegmentSequence>& segments,
                           Ablation ablation, const Dropout& dropout = {}) {
  if (segments.empty()) throw ContractError("forward: recording has no segments");
  Tape& tape = *m.csca.conv_b.tape;
  ForwardPass pass;
  std::vector<Var> reprs;
  reprs.reserve(segments.size());
  for (const SegmentSequence& seg : segments) {
    const Var x = tape.constant(seg.frames);
    if (uses_ista(ablation)) {
      IstaOutput out = ista_forward(x, seg.valid, m.ista, dropout);
      reprs.push_back(out.z);
      pass.alphas.push_back(out.alpha);
    } else {
      if (seg.valid == 0) throw DegenerateInputError("forward: segment without valid frames");
      reprs.push_back(tanh(affine_rows(mean_valid_frames(x, seg.valid), m.frame_pool)));
    }
  }
  pass.segments = stack_rows(reprs);
  if (uses_csca(ablation)) {
    const Var context = context_conv(pass.segments, m.csca);
    pass.beta = csca_attention(context, m.csca.scoring);
    pass.global = aggregate(context, *pass.beta);
  } else {
    const std::size_t n = segments.size();
    pass.global = matmul(tape.constant(Tensor::matrix(1, n, 1.0 / static_cast<double>(n))),
                         pass.segments);
  }
  pass.logits = classifier_logits(pass.global, m.csca.classifier);
  return pass;
}

/// Plain-value view of one recording's forward pass.
struct RecordingOutput {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> beta;
  std::vector<double> global;
  std::vector<std::vector<double>> alphas;
  int predicted = 0;
};

inline std::vector<double> to_vector(const Var& v) {
  const auto d = v.value().data();
  return {d.begin(), d.end()};
}

inline RecordingOutput predict(ModelParams& params, const std::vector<SegmentSequence>& segments,
                               Ablation ablation) {
  Tape tape;
  const BoundModel m = bind(tape, params);
  const ForwardPass pass = forward(m, segments, ablation);
  RecordingOutput out;
  out.logits = to_vector(pass.logits);
  out.probs = masked_softmax_values(out.logits, std::vector<bool>(out.logits.size(), true));
  if (pass.beta) out.beta = to_vector(*pass.beta);
  out.global = to_vector(pass.global);
  for (const Var& a : pass.alphas) out.alphas.push_back(to_vector(a));
  out.predicted = predicted_label(out.probs);
  return out;
}

}  // namespace dstc
