#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dstc/error.hpp"

namespace dstc {

/// Binary confusion counts with AD (label 1) as the positive class.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(int truth, int predicted) {
    if (truth == 1) {
      (predicted == 1 ? tp : fn) += 1;
    } else {
      (predicted == 1 ? fp : tn) += 1;
    }
  }
  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;        // AD class
  double f1_hc = 0.0;     // HC class
  double macro_f1 = 0.0;
};

namespace detail {
inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
inline double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }
}  // namespace detail

inline Metrics compute_metrics(const Confusion& c) {
  if (c.total() == 0) throw ContractError("metrics of an empty evaluation set");
  Metrics m;
  m.accuracy = detail::ratio(c.tp + c.tn, c.total());
  m.precision = detail::ratio(c.tp, c.tp + c.fp);
  m.recall = detail::ratio(c.tp, c.tp + c.fn);
  m.f1 = detail::harmonic(m.precision, m.recall);
  m.f1_hc = detail::harmonic(detail::ratio(c.tn, c.tn + c.fn), detail::ratio(c.tn, c.tn + c.fp));
  m.macro_f1 = 0.5 * (m.f1 + m.f1_hc);
  return m;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

}  // namespace dstc
