#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dstc/autodiff.hpp"

using namespace dstc;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = d(rng);
  return t;
}

// Naive triple loop, independent of the blocked kernels.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out[i * b.cols() + j] = s;
    }
  return out;
}

// Sum of w .* f(params) gives a scalar loss with non-trivial upstream gradient.
Var weighted_sum(Tape& tape, const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w(y.shape());
  std::normal_distribution<double> d(0.0, 1.0);
  for (double& v : w.data()) v = d(rng);
  return sum(mul(y, tape.constant(std::move(w))));
}

}  // namespace

TEST(Tensor, RejectsZeroExtentAndMismatchedData) {
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, MatmulMatchesNaiveLoop) {
  std::mt19937_64 rng(1);
  const Tensor a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng);
  const Tensor got = matmul(a, b), want = naive_matmul(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Tensor, MatmulShapeMismatchNamesShapes) {
  try {
    matmul(Tensor::matrix(2, 3), Tensor::matrix(4, 2));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos) << e.what();
  }
}

TEST(Tensor, StableSigmoid) {
  EXPECT_DOUBLE_EQ(kernels::sigmoid(0.0), 0.5);
  EXPECT_NEAR(kernels::sigmoid(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(kernels::sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(kernels::sigmoid(800.0), 1.0);
}

TEST(Softmax, KnownValues) {
  const std::vector<double> s{1.0, 2.0, 3.0};
  const auto p = masked_softmax_values(s, {true, true, true});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(p[2], std::exp(3.0) / z, 1e-15);
}

TEST(Softmax, MaskedPositionsAreExactlyZero) {
  const std::vector<double> s{5.0, 1.0, 1.0, 100.0};
  const auto p = masked_softmax_values(s, {false, true, true, false});
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[3], 0.0);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
}

TEST(Softmax, AllMaskedIsDegenerate) {
  const std::vector<double> s{1.0, 2.0};
  EXPECT_THROW(masked_softmax_values(s, {false, false}), DegenerateInputError);
}

TEST(Softmax, LargeScoresStayFinite) {
  const std::vector<double> s{1000.0, 999.0};
  const auto p = masked_softmax_values(s, {true, true});
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(CrossEntropy, MatchesLogSoftmax) {
  Tape tape;
  const Var z = tape.variable(Tensor::row({0.3, -1.2}));
  const Var loss = softmax_cross_entropy(z, 1);
  const double want = -(-1.2 - std::log(std::exp(0.3) + std::exp(-1.2)));
  EXPECT_NEAR(loss.value()[0], want, 1e-14);
  tape.backward(loss);
  const double p1 = std::exp(-1.2) / (std::exp(0.3) + std::exp(-1.2));
  EXPECT_NEAR(tape.grad(z)[1], p1 - 1.0, 1e-14);
  EXPECT_NEAR(tape.grad(z)[0], 1.0 - p1, 1e-14);
}

TEST(Tape, BackwardRequiresScalar) {
  Tape tape;
  const Var x = tape.variable(Tensor::matrix(2, 2, 1.0));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Tape, MixingTapesIsRejected) {
  Tape a, b;
  const Var x = a.variable(Tensor::matrix(1, 1, 1.0));
  const Var y = b.variable(Tensor::matrix(1, 1, 1.0));
  EXPECT_THROW(add(x, y), ContractError);
}

TEST(Tape, GradientAccumulatesAcrossUses) {
  Tape tape;
  const Var x = tape.variable(Tensor::row({3.0}));
  const Var y = mul(x, x);  // d/dx x^2 = 2x
  tape.backward(sum(add(y, x)));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 7.0);
}

TEST(GradCheck, RejectsBadEps) {
  std::vector<Tensor> p{Tensor::row({1.0})};
  LossBuilder f = [](Tape&, std::span<const Var> v) { return sum(v[0]); };
  EXPECT_THROW(grad_check(f, p, 0.0), ContractError);
  EXPECT_THROW(grad_check(f, p, 0.1), ContractError);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // An op whose backward is deliberately off by a factor of two.
  LossBuilder broken = [](Tape& tape, std::span<const Var> v) {
    const Var x = v[0];
    Tensor y = x.value();
    for (double& e : y.data()) e = e * e;
    const Var out = tape.record(std::move(y), std::span<const Var>(&x, 1), [x](Tape& t, std::size_t self) {
      const Tensor g = t.grad(self);
      Tensor* gx = t.grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * 4.0 * x.value()[i];
    });
    return sum(out);
  };
  std::vector<Tensor> p{Tensor::row({0.7, -0.4})};
  EXPECT_GT(grad_check(broken, p, 1e-5), 0.1);
}

TEST(GradCheck, ExternalValueDrivesTheDifferences) {
  std::vector<Tensor> p{Tensor::row({0.7, -0.4})};
  std::vector<Tensor*> ptrs{&p[0]};
  LossBuilder f = [](Tape&, std::span<const Var> v) { return sum(mul(v[0], v[0])); };
  const LossValue same = [&] {
    return static_cast<long double>(p[0][0]) * p[0][0] +
           static_cast<long double>(p[0][1]) * p[0][1];
  };
  const LossValue doubled = [&] { return 2.0L * same(); };
  EXPECT_LT(grad_check(f, ptrs, 1e-5, same), 1e-9);
  EXPECT_GT(grad_check(f, ptrs, 1e-5, doubled), 0.3);
}

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  LossBuilder build;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifference) {
  const OpCase& c = GetParam();
  std::mt19937_64 rng(42);
  std::vector<Tensor> params;
  for (const Shape& s : c.shapes) params.push_back(random_matrix(s[0], s[1], rng, 0.7));
  EXPECT_LT(grad_check(c.build, params, 1e-5), 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"matmul", {{3, 4}, {4, 2}},
               [](Tape& t, std::span<const Var> v) { return weighted_sum(t, matmul(v[0], v[1]), 1); }},
        OpCase{"transpose", {{3, 2}},
               [](Tape& t, std::span<const Var> v) { return weighted_sum(t, transpose(v[0]), 2); }},
        OpCase{"add_mul", {{2, 3}, {2, 3}},
               [](Tape& t, std::span<const Var> v) {
                 return weighted_sum(t, mul(add(v[0], v[1]), v[0]), 3);
               }},
        OpCase{"scale_tanh_sigmoid", {{2, 3}},
               [](Tape& t, std::span<const Var> v) {
                 return weighted_sum(t, sigmoid(tanh(scale(v[0], 1.5))), 4);
               }},
        OpCase{"concat_stack_row", {{2, 2}, {2, 3}, {1, 5}},
               [](Tape& t, std::span<const Var> v) {
                 const Var c = concat(v[0], v[1]);
                 const Var rows[] = {row(c, 1), v[2], row(c, 0)};
                 return weighted_sum(t, stack_rows(rows), 5);
               }},
        OpCase{"masked_softmax", {{1, 5}},
               [](Tape& t, std::span<const Var> v) {
                 return weighted_sum(t, masked_softmax(v[0], {true, false, true, true, false}), 6);
               }},
        OpCase{"cross_entropy", {{1, 2}},
               [](Tape&, std::span<const Var> v) { return softmax_cross_entropy(v[0], 0); }},
        OpCase{"lstm_forward", {{5, 3}, {3, 8}, {2, 8}, {1, 8}},
               [](Tape& t, std::span<const Var> v) {
                 return weighted_sum(t, lstm_scan(v[0], v[1], v[2], v[3], 5, false), 7);
               }},
        OpCase{"lstm_reverse_partial", {{6, 3}, {3, 12}, {3, 12}, {1, 12}},
               [](Tape& t, std::span<const Var> v) {
                 return weighted_sum(t, lstm_scan(v[0], v[1], v[2], v[3], 4, true), 8);
               }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(Lstm, ScalarUnitMatchesHandComputation) {
  // H = 1, F = 1: gates from a single pre-activation each.
  Tape tape;
  const Var x = tape.constant(Tensor::matrix({{0.5}, {-1.0}}));
  const Var wi = tape.constant(Tensor::matrix({{0.1, 0.2, 0.3, 0.4}}));
  const Var wh = tape.constant(Tensor::matrix({{-0.5, 0.6, 0.7, -0.8}}));
  const Var b = tape.constant(Tensor::matrix({{0.0, 1.0, 0.0, 0.0}}));
  const Var h = lstm_scan(x, wi, wh, b, 2, false);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double hp = 0.0, cp = 0.0;
  const double xs[] = {0.5, -1.0};
  for (int t = 0; t < 2; ++t) {
    const double i = sig(0.1 * xs[t] - 0.5 * hp);
    const double f = sig(0.2 * xs[t] + 0.6 * hp + 1.0);
    const double g = std::tanh(0.3 * xs[t] + 0.7 * hp);
    const double o = sig(0.4 * xs[t] - 0.8 * hp);
    cp = f * cp + i * g;
    hp = o * std::tanh(cp);
    EXPECT_NEAR(h.value()(t, 0), hp, 1e-14) << "t=" << t;
  }
}

TEST(Lstm, ReverseScanIgnoresRowsBeyondLength) {
  std::mt19937_64 rng(9);
  Tensor xa = random_matrix(5, 2, rng);
  Tensor xb = xa;
  for (std::size_t j = 0; j < 2; ++j) xb[4 * 2 + j] = 123.0;  // change a padded row
  const Tensor wi = random_matrix(2, 8, rng), wh = random_matrix(2, 8, rng), bb = random_matrix(1, 8, rng);
  Tape tape;
  const Var ha = lstm_scan(tape.constant(xa), tape.constant(wi), tape.constant(wh), tape.constant(bb), 4, true);
  const Var hb = lstm_scan(tape.constant(xb), tape.constant(wi), tape.constant(wh), tape.constant(bb), 4, true);
  EXPECT_EQ(ha.value(), hb.value());
  EXPECT_EQ(ha.value()(4, 0), 0.0);
}
