#pragma once

// Intra-segment temporal attention.
//
// A bidirectional LSTM runs over the frames of one segment, a bilinear score
// h_last^T W h_t weights each valid frame, and the weighted context is joined
// with h_last and projected to the segment representation z.

#include <random>
#include <string>
#include <vector>

#include "dstc/autodiff.hpp"
#include "dstc/error.hpp"
#include "dstc/layers.hpp"

namespace dstc {

struct LstmDirection {
  Tensor w_ih;  // F x 4H, gate blocks (input, forget, candidate, output)
  Tensor w_hh;  // H x 4H
  Tensor b;     // 1 x 4H
};

struct IstaParams {
  LstmDirection forward;
  LstmDirection backward;
  Tensor attention;  // 2H x 2H, the bilinear frame-scoring matrix
  Affine head;       // 4H -> D

  std::size_t hidden() const { return forward.w_hh.rows(); }
};

struct LstmDirectionVars {
  Var w_ih, w_hh, b;
};

struct IstaVars {
  LstmDirectionVars forward, backward;
  Var attention;
  AffineVars head;
};

inline IstaVars bind(Tape& tape, const IstaParams& p) {
  auto dir = [&](const LstmDirection& d) {
    return LstmDirectionVars{tape.param(d.w_ih), tape.param(d.w_hh), tape.param(d.b)};
  };
  return IstaVars{dir(p.forward), dir(p.backward), tape.param(p.attention), bind(tape, p.head)};
}

template <typename Rng>
LstmDirection make_lstm_direction(std::size_t input, std::size_t hidden, Rng& rng) {
  LstmDirection d{uniform_init(input, 4 * hidden, input, rng),
                  uniform_init(hidden, 4 * hidden, hidden, rng),
                  Tensor::matrix(1, 4 * hidden)};
  for (std::size_t j = hidden; j < 2 * hidden; ++j) d.b[j] = 1.0;  // forget gate
  return d;
}

template <typename Rng>
IstaParams make_ista_params(std::size_t input, std::size_t hidden, std::size_t out, Rng& rng) {
  IstaParams p;
  p.forward = make_lstm_direction(input, hidden, rng);
  p.backward = make_lstm_direction(input, hidden, rng);
  p.attention = uniform_init(2 * hidden, 2 * hidden, 2 * hidden, rng);
  p.head = make_affine(4 * hidden, out, rng);
  return p;
}

/// Inverted dropout applied during training only.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  Var apply(const Var& x) const {
    if (rate <= 0.0 || rng == nullptr) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    Tensor mask(x.shape());
    const double scale = 1.0 / (1.0 - rate);
    for (double& v : mask.data()) v = keep(*rng) ? scale : 0.0;
    return mul(x, x.tape->constant(std::move(mask)));
  }
};

/// H = [h_fwd | h_bwd], T x 2H. The forward direction scans all T frames; the
/// backward direction starts at the last valid frame so padding never reaches
/// it. Backward rows of padded frames are zero.
inline Var bilstm_forward(const Var& x, std::size_t valid, const IstaVars& p) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() == 0) throw ContractError("bilstm_forward: empty sequence");
  if (valid == 0) throw DegenerateInputError("bilstm_forward: no valid frame");
  if (valid > xv.rows()) {
    throw RangeError("bilstm_forward: " + std::to_string(valid) + " valid frames exceed " +
                     std::to_string(xv.rows()));
  }
  const Var fwd = lstm_scan(x, p.forward.w_ih, p.forward.w_hh, p.forward.b, xv.rows(), false);
  const Var bwd = lstm_scan(x, p.backward.w_ih, p.backward.w_hh, p.backward.b, valid, true);
  return concat(fwd, bwd);
}

struct FrameAttention {
  Var alpha;    // 1 x T, zero on masked frames
  Var context;  // 1 x 2H, sum_t alpha_t h_t
  Var summary;  // 1 x 2H, h at the last valid frame
};

inline FrameAttention ista_attention(const Var& states, const std::vector<bool>& mask,
                                     const Var& w) {
  const std::size_t T = states.value().rows();
  if (mask.size() != T) {
    throw DimensionError("ista_attention: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(T) + " frames");
  }
  std::size_t last = T;
  for (std::size_t t = T; t-- > 0;) {
    if (mask[t]) {
      last = t;
      break;
    }
  }
  if (last == T) throw DegenerateInputError("ista_attention: every frame is masked");
  const Var summary = row(states, last);
  const Var scores = matmul(matmul(summary, w), transpose(states));
  const Var alpha = masked_softmax(scores, mask);
  return FrameAttention{alpha, matmul(alpha, states), summary};
}

/// z = tanh([context | summary] W_head + b_head).
inline Var ista_segment_repr(const Var& context, const Var& summary, const AffineVars& head) {
  return tanh(affine_rows(concat(context, summary), head));
}

struct IstaOutput {
  Var z;      // 1 x D
  Var alpha;  // 1 x T
};

inline IstaOutput ista_forward(const Var& x, std::size_t valid, const IstaVars& p,
                               const Dropout& dropout = {}) {
  Var states = bilstm_forward(x, valid, p);
  states = dropout.apply(states);
  std::vector<bool> mask(x.value().rows(), false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(valid), true);
  const FrameAttention att = ista_attention(states, mask, p.attention);
  return IstaOutput{ista_segment_repr(att.context, att.summary, p.head), att.alpha};
}

}  // namespace dstc
