#pragma once

#include "cmg/errors.hpp"
#include "cmg/numerics/tape.hpp"
#include "cmg/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cmg::numerics {

namespace detail {

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// Only scalar (1x1) and row (1xn) broadcasting are supported.
inline bool broadcasts_to(Index r, Index c, Index rows, Index cols) {
  return (r == rows && c == cols) || (r == 1 && c == 1) || (r == 1 && c == cols);
}

template <typename Scalar>
std::pair<Index, Index> broadcast_shape(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                                        const char* op) {
  if (broadcasts_to(b.rows(), b.cols(), a.rows(), a.cols())) return {a.rows(), a.cols()};
  if (broadcasts_to(a.rows(), a.cols(), b.rows(), b.cols())) return {b.rows(), b.cols()};
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a.rows(), a.cols()) + " and " + shape_str(b.rows(), b.cols()));
}

template <typename Scalar>
Matrix<Scalar> expand(const Matrix<Scalar>& x, Index rows, Index cols) {
  if (x.rows() == rows && x.cols() == cols) return x;
  if (x.rows() == 1 && x.cols() == 1) return Matrix<Scalar>::Constant(rows, cols, x(0, 0));
  return x.replicate(rows, 1);
}

// Sums a full-shape adjoint back down to the operand's broadcast shape.
template <typename Scalar>
Matrix<Scalar> reduce_to(const Matrix<Scalar>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix<Scalar>::Constant(1, 1, g.sum());
  return g.colwise().sum();
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         detail::shape_str(a.rows(), a.cols()) + " * " +
                         detail::shape_str(b.rows(), b.cols()));
  }
  Tape<Scalar>& t = *a.tape();
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), {a, b}, [ia, ib](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.needs_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& t = *a.tape();
  const auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "add");
  Matrix<Scalar> out = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(ia)) tp.accumulate(ia, detail::reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    if (tp.needs_grad(ib)) tp.accumulate(ib, detail::reduce_to(g, tp.value(ib).rows(), tp.value(ib).cols()));
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& t = *a.tape();
  const auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "sub");
  Matrix<Scalar> out = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(ia)) tp.accumulate(ia, detail::reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    if (tp.needs_grad(ib)) {
      Matrix<Scalar> neg = -g;
      tp.accumulate(ib, detail::reduce_to(neg, tp.value(ib).rows(), tp.value(ib).cols()));
    }
  });
}

// Elementwise (Hadamard) product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& t = *a.tape();
  const auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "mul");
  Matrix<Scalar> out =
      detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, r, c](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& av = tp.value(ia);
    const auto& bv = tp.value(ib);
    if (tp.needs_grad(ia)) {
      Matrix<Scalar> ga = g.cwiseProduct(detail::expand(bv, r, c));
      tp.accumulate(ia, detail::reduce_to(ga, av.rows(), av.cols()));
    }
    if (tp.needs_grad(ib)) {
      Matrix<Scalar> gb = g.cwiseProduct(detail::expand(av, r, c));
      tp.accumulate(ib, detail::reduce_to(gb, bv.rows(), bv.cols()));
    }
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar s) {
  const auto ix = x.id();
  return x.tape()->record(x.value() * s, {x}, [ix, s](Tape<Scalar>& tp, std::size_t self) {
    tp.accumulate(ix, tp.grad(self) * s);
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  const auto ix = x.id();
  Matrix<Scalar> y = x.value().array().tanh().matrix();
  return x.tape()->record(std::move(y), {x}, [ix](Tape<Scalar>& tp, std::size_t self) {
    const auto& yv = tp.value(self);
    tp.accumulate(ix, (tp.grad(self).array() * (Scalar(1) - yv.array().square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  const auto ix = x.id();
  Matrix<Scalar> y = x.value().unaryExpr([](Scalar v) { return detail::stable_sigmoid(v); });
  return x.tape()->record(std::move(y), {x}, [ix](Tape<Scalar>& tp, std::size_t self) {
    const auto& yv = tp.value(self).array();
    tp.accumulate(ix, (tp.grad(self).array() * yv * (Scalar(1) - yv)).matrix());
  });
}

// Sum of all entries, as a 1x1 value.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  const auto ix = x.id();
  const Index r = x.rows(), c = x.cols();
  return x.tape()->record(Matrix<Scalar>::Constant(1, 1, x.value().sum()), {x},
                          [ix, r, c](Tape<Scalar>& tp, std::size_t self) {
                            tp.accumulate(ix, Matrix<Scalar>::Constant(r, c, tp.grad(self)(0, 0)));
                          });
}

// Column-wise concatenation of blocks with equal row counts.
template <typename Scalar>
Var<Scalar> hcat(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("hcat: no operands");
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<std::pair<std::size_t, Index>> layout;
  layout.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("hcat: row counts differ (" + std::to_string(rows) + " vs " +
                           std::to_string(p.rows()) + ")");
    }
    layout.emplace_back(p.id(), cols);
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    out.middleCols(layout[k].second, parts[k].cols()) = parts[k].value();
  }
  return parts.front().tape()->record(
      std::move(out), parts, [layout = std::move(layout)](Tape<Scalar>& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        for (const auto& [id, offset] : layout) {
          if (tp.needs_grad(id)) tp.accumulate(id, g.middleCols(offset, tp.value(id).cols()));
        }
      });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         std::to_string(x.cols()) + " columns");
  }
  const auto ix = x.id();
  return x.tape()->record(x.value().middleCols(start, count), {x},
                          [ix, start, count](Tape<Scalar>& tp, std::size_t self) {
                            Matrix<Scalar>* gx = tp.grad_buffer(ix);
                            if (gx) gx->middleCols(start, count) += tp.grad(self);
                          });
}

// Embedding lookup: row ids[i] of `table` becomes row i of the result.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& table, std::span<const int> ids) {
  const Index vocab = table.rows();
  Matrix<Scalar> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw RangeError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  const auto it = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {table},
                              [it, rows = std::move(rows)](Tape<Scalar>& tp, std::size_t self) {
                                Matrix<Scalar>* gt = tp.grad_buffer(it);
                                if (!gt) return;
                                const auto& g = tp.grad(self);
                                for (std::size_t i = 0; i < rows.size(); ++i) {
                                  gt->row(rows[i]) += g.row(static_cast<Index>(i));
                                }
                              });
}

// Row i comes from `a` where keep[i] is set, otherwise from `b`. Used to carry
// recurrent state unchanged across padding.
template <typename Scalar>
Var<Scalar> select_rows(std::span<const std::uint8_t> keep, const Var<Scalar>& a,
                        const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() ||
      static_cast<Index>(keep.size()) != a.rows()) {
    throw DimensionError("select_rows: operand shapes " + detail::shape_str(a.rows(), a.cols()) +
                         ", " + detail::shape_str(b.rows(), b.cols()) + " with " +
                         std::to_string(keep.size()) + " flags");
  }
  Matrix<Scalar> out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    out.row(i) = keep[static_cast<std::size_t>(i)] ? a.value().row(i) : b.value().row(i);
  }
  const auto ia = a.id(), ib = b.id();
  std::vector<std::uint8_t> flags(keep.begin(), keep.end());
  return a.tape()->record(std::move(out), {a, b},
                          [ia, ib, flags = std::move(flags)](Tape<Scalar>& tp, std::size_t self) {
                            const auto& g = tp.grad(self);
                            Matrix<Scalar>* ga = tp.grad_buffer(ia);
                            Matrix<Scalar>* gb = tp.grad_buffer(ib);
                            for (Index i = 0; i < g.rows(); ++i) {
                              Matrix<Scalar>* dst = flags[static_cast<std::size_t>(i)] ? ga : gb;
                              if (dst) dst->row(i) += g.row(i);
                            }
                          });
}

// Scales row i of `m` by weights(i, 0).
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& weights, const Var<Scalar>& m) {
  if (weights.cols() != 1 || weights.rows() != m.rows()) {
    throw DimensionError("scale_rows: weights " + detail::shape_str(weights.rows(), weights.cols()) +
                         " for matrix " + detail::shape_str(m.rows(), m.cols()));
  }
  const auto iw = weights.id(), im = m.id();
  Matrix<Scalar> out = weights.value().col(0).asDiagonal() * m.value();
  return m.tape()->record(std::move(out), {weights, m}, [iw, im](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(iw)) tp.accumulate(iw, g.cwiseProduct(tp.value(im)).rowwise().sum());
    if (tp.needs_grad(im)) tp.accumulate(im, tp.value(iw).col(0).asDiagonal() * g);
  });
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> masked_softmax_rows(const Matrix<Scalar>& x, const Mask* mask) {
  Matrix<Scalar> y = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    bool live = false;
    for (Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) {
        hi = std::max(hi, x(i, j));
        live = true;
      }
    }
    if (!live) {
      throw DomainError("softmax: row " + std::to_string(i) + " has no unmasked entry");
    }
    Scalar total = 0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) {
        y(i, j) = std::exp(x(i, j) - hi);
        total += y(i, j);
      }
    }
    y.row(i) /= total;
  }
  return y;
}

}  // namespace detail

// Row-wise softmax. Masked entries are exactly zero; each row needs at least
// one live entry.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, const Mask* mask = nullptr) {
  if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    throw DimensionError("softmax: mask " + detail::shape_str(mask->rows(), mask->cols()) +
                         " for input " + detail::shape_str(x.rows(), x.cols()));
  }
  const auto ix = x.id();
  return x.tape()->record(detail::masked_softmax_rows(x.value(), mask), {x},
                          [ix](Tape<Scalar>& tp, std::size_t self) {
                            const auto& y = tp.value(self);
                            const auto& g = tp.grad(self);
                            const Matrix<Scalar> dot = g.cwiseProduct(y).rowwise().sum();
                            tp.accumulate(ix, (y.array() * (g.colwise() - dot.col(0)).array()).matrix());
                          });
}

// Sum over live rows of -log softmax(logits)[target]. Rows with row_mask 0
// contribute nothing; an all-masked input yields 0.
template <typename Scalar>
Var<Scalar> cross_entropy_sum(const Var<Scalar>& logits, std::span<const int> targets,
                              std::span<const std::uint8_t> row_mask) {
  const Index rows = logits.rows(), vocab = logits.cols();
  if (static_cast<Index>(targets.size()) != rows || static_cast<Index>(row_mask.size()) != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                         std::to_string(row_mask.size()) + " mask flags for " +
                         std::to_string(rows) + " rows");
  }
  const auto& z = logits.value();
  Matrix<Scalar> probs = Matrix<Scalar>::Zero(rows, vocab);
  Scalar loss = 0;
  for (Index i = 0; i < rows; ++i) {
    if (!row_mask[static_cast<std::size_t>(i)]) continue;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= vocab) {
      throw RangeError("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    const Scalar hi = z.row(i).maxCoeff();
    const auto shifted = (z.row(i).array() - hi).exp();
    const Scalar total = shifted.sum();
    probs.row(i) = shifted / total;
    loss -= z(i, t) - hi - std::log(total);
  }
  const auto il = logits.id();
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> live(row_mask.begin(), row_mask.end());
  return logits.tape()->record(
      Matrix<Scalar>::Constant(1, 1, loss), {logits},
      [il, probs = std::move(probs), tgt = std::move(tgt), live = std::move(live)](
          Tape<Scalar>& tp, std::size_t self) {
        const Scalar g = tp.grad(self)(0, 0);
        Matrix<Scalar> d = probs;
        for (std::size_t i = 0; i < tgt.size(); ++i) {
          if (live[i]) d(static_cast<Index>(i), tgt[i]) -= Scalar(1);
        }
        tp.accumulate(il, d * g);
      });
}

// Mean over live rows of -log softmax(logits)[target].
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, std::span<const int> targets,
                          std::span<const std::uint8_t> row_mask) {
  const auto live = std::count_if(row_mask.begin(), row_mask.end(), [](auto m) { return m != 0; });
  if (live == 0) throw DomainError("cross_entropy: every position is masked");
  return scale(cross_entropy_sum(logits, targets, row_mask), Scalar(1) / static_cast<Scalar>(live));
}

// Inverted dropout: zeroes entries with probability p and scales survivors by
// 1/(1-p). Identity outside training.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw DomainError("dropout: probability must be below 1");
  const Scalar keep_scale = Scalar(1) / static_cast<Scalar>(1.0 - p);
  Matrix<Scalar> mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = bernoulli(rng, p) ? Scalar(0) : keep_scale;
  }
  const auto ix = x.id();
  Matrix<Scalar> out = x.value().cwiseProduct(mask);
  return x.tape()->record(std::move(out), {x},
                          [ix, mask = std::move(mask)](Tape<Scalar>& tp, std::size_t self) {
                            tp.accumulate(ix, tp.grad(self).cwiseProduct(mask));
                          });
}

// Index of the largest entry per row; ties go to the lowest index.
template <typename Derived>
std::vector<int> argmax_rows(const Eigen::MatrixBase<Derived>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < m.cols(); ++j) {
      if (m(i, j) > m(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace cmg::numerics
