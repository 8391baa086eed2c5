#pragma once

// Cross-segment context attention and the recording-level classifier.

#include <array>
#include <string>
#include <vector>

#include "dstc/autodiff.hpp"
#include "dstc/error.hpp"
#include "dstc/layers.hpp"

namespace dstc {

/// Where the (64, 32) hidden layers sit. `scoring_head` is the canonical
/// reading: they form the segment scoring MLP and the classifier is a single
/// affine map. `post_aggregation` puts them in front of the classifier and
/// scores segments with one affine layer; it exists for comparison only.
enum class ScoringLayout { scoring_head, post_aggregation };

struct CscaParams {
  std::array<Tensor, 3> conv;  // D x D taps for segments m-1, m, m+1
  Tensor conv_b;               // 1 x D
  std::vector<Affine> scoring;     // D -> ... -> 1
  std::vector<Affine> classifier;  // D -> ... -> 2
};

struct CscaVars {
  std::array<Var, 3> conv;
  Var conv_b;
  std::vector<AffineVars> scoring;
  std::vector<AffineVars> classifier;
};

inline CscaVars bind(Tape& tape, const CscaParams& p) {
  CscaVars v{{tape.param(p.conv[0]), tape.param(p.conv[1]), tape.param(p.conv[2])},
             tape.param(p.conv_b),
             {},
             {}};
  for (const auto& a : p.scoring) v.scoring.push_back(bind(tape, a));
  for (const auto& a : p.classifier) v.classifier.push_back(bind(tape, a));
  return v;
}

template <typename Rng>
CscaParams make_csca_params(std::size_t dim, std::size_t hidden1, std::size_t hidden2,
                            ScoringLayout layout, Rng& rng, std::size_t classes = 2) {
  CscaParams p;
  for (auto& k : p.conv) k = uniform_init(dim, dim, 3 * dim, rng);
  p.conv_b = Tensor::matrix(1, dim);
  if (layout == ScoringLayout::scoring_head) {
    p.scoring = {make_affine(dim, hidden1, rng), make_affine(hidden1, hidden2, rng),
                 make_affine(hidden2, 1, rng)};
    p.classifier = {make_affine(dim, classes, rng)};
  } else {
    p.scoring = {make_affine(dim, 1, rng)};
    p.classifier = {make_affine(dim, hidden1, rng), make_affine(hidden1, hidden2, rng),
                    make_affine(hidden2, classes, rng)};
  }
  return p;
}

/// Width-3 convolution along the segment axis with one zero segment of
/// padding on each side, followed by tanh. Output keeps M rows.
inline Var context_conv(const Var& segments, const std::array<Var, 3>& taps, const Var& bias) {
  Tape& tape = *segments.tape;
  const std::size_t m = segments.value().rows();
  Tensor prev = Tensor::matrix(m, m), next = Tensor::matrix(m, m);
  for (std::size_t i = 1; i < m; ++i) {
    prev(i, i - 1) = 1.0;
    next(i - 1, i) = 1.0;
  }
  const Var shifted_prev = matmul(tape.constant(std::move(prev)), segments);
  const Var shifted_next = matmul(tape.constant(std::move(next)), segments);
  Var acc = add(matmul(shifted_prev, taps[0]), matmul(segments, taps[1]));
  acc = add(acc, matmul(shifted_next, taps[2]));
  const Var ones = tape.constant(Tensor::matrix(m, 1, 1.0));
  return tanh(add(acc, matmul(ones, bias)));
}

inline Var context_conv(const Var& segments, const CscaVars& p) {
  return context_conv(segments, p.conv, p.conv_b);
}

/// Segment weights beta (1 x M) from an MLP score per row of `context`.
inline Var csca_attention(const Var& context, std::span<const AffineVars> scoring) {
  const Var scores = mlp_rows(context, scoring);  // M x 1
  if (scores.value().cols() != 1) {
    throw DimensionError("csca_attention: scoring head must end in one unit, got " +
                         shape_str(scores.shape()));
  }
  return softmax(transpose(scores));
}

/// G = sum_m beta_m z'_m.
inline Var aggregate(const Var& context, const Var& beta) {
  const Tensor& b = beta.value();
  if (b.rank() != 2 || b.rows() != 1 || b.cols() != context.value().rows()) {
    throw DimensionError("aggregate: beta " + shape_str(b.shape()) + " does not match " +
                         std::to_string(context.value().rows()) + " segments");
  }
  return matmul(beta, context);
}

inline Var classifier_logits(const Var& global, std::span<const AffineVars> classifier) {
  return mlp_rows(global, classifier);
}

/// Arg-max with ties resolved towards the lower label.
inline int predicted_label(std::span<const double> probs) {
  int best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace dstc
