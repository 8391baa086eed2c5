#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// Every operation records one node on a Tape. Nodes are appended in execution
// order, so a reverse sweep over node ids is a valid topological order.
// Parameters enter the tape by reference (Tape::param) and are never copied.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dstc/error.hpp"
#include "dstc/tensor.hpp"

namespace dstc {

class Tape;

/// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable leaf (masks, pooling weights, data).
  Var constant(Tensor value) { return push_leaf(std::move(value), nullptr, false); }

  /// Differentiable leaf owning its value.
  Var variable(Tensor value) { return push_leaf(std::move(value), nullptr, true); }

  /// Differentiable leaf borrowing caller storage, which must outlive the tape.
  Var param(const Tensor& value) { return push_leaf(Tensor{}, &value, true); }

  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id].requires_grad;
    }
    Node node;
    node.owned = std::move(value);
    node.requires_grad = needs;
    if (needs) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.owned;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() target with respect to node `id`.
  /// Nodes that did not influence the target report exact zeros.
  const Tensor& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.has_grad) {
      n.grad = Tensor(value(id).shape(), 0.0);
      n.has_grad = true;
    }
    return n.grad;
  }
  const Tensor& grad(Var v) { return grad(v.id); }

  /// Mutable gradient buffer, allocated on first use. Returns nullptr for
  /// nodes that do not require a gradient.
  Tensor* grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor(value(id).shape(), 0.0);
      n.has_grad = true;
    }
    return &n.grad;
  }

  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

  /// Storage borrowed by a Tape::param leaf, nullptr for every other node.
  const Tensor* borrowed(std::size_t id) const { return nodes_.at(id).external; }

  /// Reverse sweep seeded with d(target)/d(target) = 1. The target must hold a
  /// single element. `on_visit` observes every node whose backward runs.
  void backward(Var target, const std::function<void(std::size_t)>& on_visit = {}) {
    check_owner(target);
    if (value(target.id).size() != 1) {
      throw ContractError("backward target must be scalar, got shape " +
                          shape_str(value(target.id).shape()));
    }
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor{};
    }
    if (!nodes_[target.id].requires_grad) return;
    grad_buffer(target.id)->fill(1.0);
    for (std::size_t id = target.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || !n.has_grad) continue;
      if (on_visit) on_visit(id);
      n.backward(*this, id);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  void check_owner(const Var& v) const {
    if (v.tape != this || v.id >= nodes_.size()) {
      throw ContractError("variable does not belong to this tape");
    }
  }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push_leaf(Tensor value, const Tensor* external, bool requires_grad) {
    Node node;
    node.owned = std::move(value);
    node.external = external;
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError("operands recorded on different tapes");
  }
  return *a.tape;
}

template <typename Fwd, typename Bwd>
Var unary_pointwise(const Var& a, Fwd fwd, Bwd dfdx_from_y) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const Var inputs[] = {a};
  return tape.record(std::move(y), inputs, [a, dfdx_from_y](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(a.id);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    const Tensor& yv = t.value(self);
    const Tensor& xv = t.value(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfdx_from_y(xv[i], yv[i]);
  });
}

}  // namespace detail

/// Matrix product [m x k] * [k x n].
inline Var matmul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) +
                         " and " + shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = Tensor::matrix(m, n);
  kernels::gemm_acc(av.data(), bv.data(), out.data(), m, k, n);
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs, [a, b, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.grad_buffer(a.id)) {
      kernels::gemm_nt_acc(g.data(), t.value(b.id).data(), ga->data(), m, k, n);
    }
    if (Tensor* gb = t.grad_buffer(b.id)) {
      kernels::gemm_tn_acc(t.value(a.id).data(), g.data(), gb->data(), m, k, n);
    }
  });
}

inline Var transpose(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs, [a, r, c](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(a.id);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*ga)(i, j) += g(j, i);
  });
}

inline Var add(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  a.value().require_same_shape(b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.grad_buffer(a.id)) *ga += g;
    if (Tensor* gb = t.grad_buffer(b.id)) *gb += g;
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  av.require_same_shape(bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.grad_buffer(a.id)) {
      const Tensor& bv = t.value(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = t.grad_buffer(b.id)) {
      const Tensor& av = t.value(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  return detail::unary_pointwise(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var tanh(const Var& a) {
  return detail::unary_pointwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary_pointwise(
      a, [](double x) { return kernels::sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

/// Concatenation along the last axis. All other extents must agree.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Tape& tape = *parts.front().tape;
  const Shape& s0 = parts.front().shape();
  const std::size_t lead = shape_size(s0) / s0.back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    detail::same_tape(parts.front(), p);
    const Shape& s = p.shape();
    if (s.size() != s0.size() || !std::equal(s.begin(), s.end() - 1, s0.begin())) {
      throw DimensionError("concat: shapes " + shape_str(s0) + " and " + shape_str(s) +
                           " differ outside the last axis");
    }
    widths.push_back(s.back());
    total += s.back();
  }
  Shape out_shape = s0;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < lead; ++r)
      for (std::size_t j = 0; j < widths[p]; ++j)
        out[r * total + offset + j] = v[r * widths[p] + j];
    offset += widths[p];
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return tape.record(std::move(out), ins,
                     [ins, widths, lead, total](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < ins.size(); ++p) {
                         if (Tensor* gp = t.grad_buffer(ins[p].id)) {
                           for (std::size_t r = 0; r < lead; ++r)
                             for (std::size_t j = 0; j < widths[p]; ++j)
                               (*gp)[r * widths[p] + j] += g[r * total + off + j];
                         }
                         off += widths[p];
                       }
                     });
}

inline Var concat(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat(parts);
}

/// Stacks 1xN rows into an MxN matrix.
inline Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("stack_rows: no inputs");
  Tape& tape = *parts.front().tape;
  const std::size_t n = parts.front().value().size();
  Tensor out = Tensor::matrix(parts.size(), n);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    detail::same_tape(parts.front(), parts[i]);
    const Tensor& v = parts[i].value();
    if (v.rank() != 2 || v.rows() != 1 || v.cols() != n) {
      throw DimensionError("stack_rows: expected 1x" + std::to_string(n) + " rows, got " +
                           shape_str(v.shape()));
    }
    std::copy(v.data().begin(), v.data().end(), out.row_span(i).begin());
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return tape.record(std::move(out), ins, [ins, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (Tensor* gi = t.grad_buffer(ins[i].id)) {
        for (std::size_t j = 0; j < n; ++j) (*gi)[j] += g(i, j);
      }
    }
  });
}

/// Row `index` of a matrix, as a 1xN row.
inline Var row(const Var& a, std::size_t index) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  if (index >= r) {
    throw RangeError("row " + std::to_string(index) + " out of range for shape " +
                     shape_str(av.shape()));
  }
  auto src = av.row_span(index);
  Tensor out = Tensor::row(std::vector<double>(src.begin(), src.end()));
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs, [a, index, c](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(a.id);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    for (std::size_t j = 0; j < c; ++j) (*ga)(index, j) += g[j];
  });
}

/// Sum of all elements, as a 1x1 tensor.
inline Var sum(const Var& a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  const Var inputs[] = {a};
  return a.tape->record(Tensor({1, 1}, s), inputs, [a](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(a.id);
    if (!ga) return;
    const double g = t.grad(self)[0];
    for (double& v : ga->data()) v += g;
  });
}

/// Untracked softmax over the valid entries of `scores`. Masked entries come
/// out exactly zero.
inline std::vector<double> masked_softmax_values(std::span<const double> scores,
                                                 const std::vector<bool>& mask) {
  if (mask.size() != scores.size()) {
    throw DimensionError("masked_softmax: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(scores.size()) + " scores");
  }
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  double hi = neg_inf;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = mask[i] ? scores[i] : neg_inf;
    if (s > hi) hi = s;
  }
  if (hi == neg_inf) throw DegenerateInputError("masked_softmax: every position is masked");
  std::vector<double> out(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = mask[i] ? scores[i] : neg_inf;
    out[i] = std::exp(s - hi);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

/// Softmax over all elements of `scores` restricted to positions where `mask`
/// is true. Output has the input's shape.
inline Var masked_softmax(const Var& scores, std::vector<bool> mask) {
  const Tensor& sv = scores.value();
  Tensor out(sv.shape(), masked_softmax_values(sv.data(), mask));
  const Var inputs[] = {scores};
  return scores.tape->record(
      std::move(out), inputs, [scores, mask = std::move(mask)](Tape& t, std::size_t self) {
        Tensor* gs = t.grad_buffer(scores.id);
        if (!gs) return;
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
          if (mask[i]) dot += y[i] * g[i];
        for (std::size_t i = 0; i < y.size(); ++i)
          if (mask[i]) (*gs)[i] += y[i] * (g[i] - dot);
      });
}

inline Var softmax(const Var& scores) {
  return masked_softmax(scores, std::vector<bool>(scores.value().size(), true));
}

/// -log softmax(logits)[label], as a 1x1 tensor.
inline Var softmax_cross_entropy(const Var& logits, std::size_t label) {
  const Tensor& z = logits.value();
  if (label >= z.size()) {
    throw RangeError("cross entropy label " + std::to_string(label) + " out of range for " +
                     std::to_string(z.size()) + " classes");
  }
  const std::vector<double> p =
      masked_softmax_values(z.data(), std::vector<bool>(z.size(), true));
  const double loss = -std::log(p[label]);
  const Var inputs[] = {logits};
  return logits.tape->record(Tensor({1, 1}, loss), inputs,
                             [logits, label, p](Tape& t, std::size_t self) {
                               Tensor* gz = t.grad_buffer(logits.id);
                               if (!gz) return;
                               const double g = t.grad(self)[0];
                               for (std::size_t i = 0; i < p.size(); ++i)
                                 (*gz)[i] += g * (p[i] - (i == label ? 1.0 : 0.0));
                             });
}

/// One direction of an LSTM over the rows of `x` [T x F].
///
/// Gate layout along the 4H axis is (input, forget, candidate, output);
/// weights multiply row vectors from the right: a_t = x_t W_ih + h_{t-1} W_hh + b.
/// A forward scan visits rows 0..T-1. A reverse scan starts at row `length-1`
/// and walks down to 0; rows at or beyond `length` are left as zeros.
inline Var lstm_scan(const Var& x, const Var& w_ih, const Var& w_hh, const Var& bias,
                     std::size_t length, bool reverse) {
  Tape& tape = detail::same_tape(x, w_ih);
  detail::same_tape(x, w_hh);
  detail::same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wi = w_ih.value();
  const Tensor& wh = w_hh.value();
  const Tensor& bv = bias.value();
  const std::size_t T = xv.rows(), F = xv.cols();
  const std::size_t H = wh.rows();
  if (wi.rows() != F || wi.cols() != 4 * H || wh.cols() != 4 * H || bv.size() != 4 * H) {
    throw DimensionError("lstm_scan: x " + shape_str(xv.shape()) + ", W_ih " +
                         shape_str(wi.shape()) + ", W_hh " + shape_str(wh.shape()) +
                         ", b " + shape_str(bv.shape()) + " are inconsistent");
  }
  if (length == 0 || length > T) {
    throw ContractError("lstm_scan: length " + std::to_string(length) + " outside [1, " +
                        std::to_string(T) + "]");
  }

  std::vector<std::size_t> order;
  if (reverse) {
    for (std::size_t t = length; t-- > 0;) order.push_back(t);
  } else {
    for (std::size_t t = 0; t < T; ++t) order.push_back(t);
  }

  // Per-step cache: activated gates (4H), cell state (H), tanh(cell) (H).
  struct Cache {
    std::vector<double> gates, cell, cell_tanh;
  };
  auto cache = std::make_shared<Cache>();
  const std::size_t S = order.size();
  cache->gates.assign(S * 4 * H, 0.0);
  cache->cell.assign(S * H, 0.0);
  cache->cell_tanh.assign(S * H, 0.0);

  Tensor out = Tensor::matrix(T, H);
  std::vector<double> pre(4 * H);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t t = order[s];
    std::copy(bv.data().begin(), bv.data().end(), pre.begin());
    kernels::gemm_acc(xv.row_span(t), wi.data(), pre, 1, F, 4 * H);
    if (s > 0) kernels::gemm_acc(out.row_span(order[s - 1]), wh.data(), pre, 1, H, 4 * H);
    double* gate = cache->gates.data() + s * 4 * H;
    double* cell = cache->cell.data() + s * H;
    double* ctanh = cache->cell_tanh.data() + s * H;
    const double* cell_prev = s > 0 ? cache->cell.data() + (s - 1) * H : nullptr;
    auto h = out.row_span(t);
    for (std::size_t j = 0; j < H; ++j) {
      const double ig = kernels::sigmoid(pre[j]);
      const double fg = kernels::sigmoid(pre[H + j]);
      const double gg = std::tanh(pre[2 * H + j]);
      const double og = kernels::sigmoid(pre[3 * H + j]);
      gate[j] = ig;
      gate[H + j] = fg;
      gate[2 * H + j] = gg;
      gate[3 * H + j] = og;
      cell[j] = ig * gg + (cell_prev ? fg * cell_prev[j] : 0.0);
      ctanh[j] = std::tanh(cell[j]);
      h[j] = og * ctanh[j];
    }
  }

  const Var inputs[] = {x, w_ih, w_hh, bias};
  return tape.record(
      std::move(out), inputs,
      [x, w_ih, w_hh, bias, order = std::move(order), cache, T, F, H](Tape& tp,
                                                                    std::size_t self) {
        const Tensor& g_out = tp.grad(self);
        const Tensor& hs = tp.value(self);
        const Tensor& xv = tp.value(x.id);
        const Tensor& wi = tp.value(w_ih.id);
        const Tensor& wh = tp.value(w_hh.id);
        Tensor* gx = tp.grad_buffer(x.id);
        Tensor* gwi = tp.grad_buffer(w_ih.id);
        Tensor* gwh = tp.grad_buffer(w_hh.id);
        Tensor* gb = tp.grad_buffer(bias.id);
        const std::size_t S = order.size();
        std::vector<double> dh(H, 0.0), dc(H, 0.0), da(4 * H), dh_prev(H);
        for (std::size_t s = S; s-- > 0;) {
          const std::size_t t = order[s];
          const double* gate = cache->gates.data() + s * 4 * H;
          const double* ctanh = cache->cell_tanh.data() + s * H;
          const double* cell_prev = s > 0 ? cache->cell.data() + (s - 1) * H : nullptr;
          auto go = g_out.row_span(t);
          for (std::size_t j = 0; j < H; ++j) {
            const double ig = gate[j], fg = gate[H + j], gg = gate[2 * H + j],
                         og = gate[3 * H + j];
            const double dhj = dh[j] + go[j];
            const double dcj = dc[j] + dhj * og * (1.0 - ctanh[j] * ctanh[j]);
            da[j] = dcj * gg * ig * (1.0 - ig);
            da[H + j] = cell_prev ? dcj * cell_prev[j] * fg * (1.0 - fg) : 0.0;
            da[2 * H + j] = dcj * ig * (1.0 - gg * gg);
            da[3 * H + j] = dhj * ctanh[j] * og * (1.0 - og);
            dc[j] = dcj * fg;
          }
          if (gb) {
            for (std::size_t j = 0; j < 4 * H; ++j) (*gb)[j] += da[j];
          }
          if (gwi) kernels::gemm_tn_acc(xv.row_span(t), da, gwi->data(), 1, F, 4 * H);
          if (gx) kernels::gemm_nt_acc(da, wi.data(), gx->row_span(t), 1, F, 4 * H);
          if (s > 0) {
            if (gwh) kernels::gemm_tn_acc(hs.row_span(order[s - 1]), da, gwh->data(), 1, H, 4 * H);
            std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
            kernels::gemm_nt_acc(da, wh.data(), dh_prev, 1, H, 4 * H);
            dh.swap(dh_prev);
          }
        }
      });
}

/// Central-difference gradient check.
///
/// `loss` builds a scalar on the given tape from one Var per parameter. Returns
/// max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Evaluates the same scalar as a LossBuilder from the current parameter
/// values, in any precision of the caller's choosing.
using LossValue = std::function<long double()>;

namespace detail {

inline double grad_check_core(const LossBuilder& loss, std::span<Tensor* const> params, double eps,
                              const LossValue* value) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw ContractError("grad_check: eps must lie in (0, 1e-2], got " + std::to_string(eps));
  }
  auto evaluate = [&](Tape& tape) {
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (Tensor* p : params) vars.push_back(tape.param(*p));
    Var out = loss(tape, vars);
    if (out.value().size() != 1) {
      throw ContractError("grad_check: loss must be scalar, got shape " +
                          shape_str(out.shape()));
    }
    return std::pair{out, std::move(vars)};
  };
  auto value_at = [&]() -> long double {
    if (value) return (*value)();
    Tape tape;
    return evaluate(tape).first.value()[0];
  };

  std::vector<Tensor> analytic;
  {
    Tape tape;
    auto [out, vars] = evaluate(tape);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + eps;
      const long double f_plus = value_at();
      theta[i] = saved - eps;
      const long double f_minus = value_at();
      theta[i] = saved;
      const double numeric = static_cast<double>((f_plus - f_minus) / (2.0L * eps));
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace detail

inline double grad_check(const LossBuilder& loss, std::span<Tensor* const> params, double eps) {
  return detail::grad_check_core(loss, params, eps, nullptr);
}

/// As above, but the central differences use `value`, which must compute the
/// same function as `loss`. A wider-precision `value` removes the round-off
/// floor of double differences for coordinates with very small gradients.
inline double grad_check(const LossBuilder& loss, std::span<Tensor* const> params, double eps,
                         const LossValue& value) {
  return detail::grad_check_core(loss, params, eps, &value);
}

inline double grad_check(const LossBuilder& loss, std::vector<Tensor>& params, double eps) {
  std::vector<Tensor*> ptrs;
  for (Tensor& t : params) ptrs.push_back(&t);
  return grad_check(loss, ptrs, eps);
}

}  // namespace dstc
