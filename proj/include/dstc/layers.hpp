#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "dstc/autodiff.hpp"
#include "dstc/tensor.hpp"

namespace dstc {

/// Fully connected layer y = x W + b on row vectors.
struct Affine {
  Tensor w;  // in x out
  Tensor b;  // 1 x out

  std::size_t in() const { return w.rows(); }
  std::size_t out() const { return w.cols(); }
};

struct AffineVars {
  Var w, b;
};

inline AffineVars bind(Tape& tape, const Affine& a) { return {tape.param(a.w), tape.param(a.b)}; }

/// Applies an affine map to every row of `x` [M x in]. The bias is spread over
/// rows with an explicit ones column rather than broadcasting.
inline Var affine_rows(const Var& x, const AffineVars& a) {
  const Var xw = matmul(x, a.w);
  const std::size_t m = x.value().rows();
  if (m == 1) return add(xw, a.b);
  const Var ones = x.tape->constant(Tensor::matrix(m, 1, 1.0));
  return add(xw, matmul(ones, a.b));
}

/// Stack of affine layers with tanh between them and no activation after the last.
inline Var mlp_rows(const Var& x, std::span<const AffineVars> layers) {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = affine_rows(h, layers[i]);
    if (i + 1 < layers.size()) h = tanh(h);
  }
  return h;
}

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
template <typename Rng>
Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

template <typename Rng>
Affine make_affine(std::size_t in, std::size_t out, Rng& rng) {
  return Affine{uniform_init(in, out, in, rng), Tensor::matrix(1, out)};
}

}  // namespace dstc
