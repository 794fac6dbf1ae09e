#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "herln/autograd.hpp"

// Differentiable operators used by the model. Every operator validates its
// shapes, checks its forward output for non-finite values, and registers a
// backward closure on the tape.

namespace herln {

using Index = std::uint32_t;

enum class Activation { Identity, Relu, Sigmoid, Tanh };

Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k] x [n,k]^T

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Adds a length-n bias to every row of an [m,n] matrix.
Var add_row(const Var& a, const Var& bias);
/// Multiplies row i of `x` by g[i], or every row by g[0] when g has one element.
Var mul_rows(const Var& x, const Var& g);
/// Elementwise product with a constant vector of the same size.
Var mul_const(const Var& x, std::span<const double> c);
/// s * x + c elementwise.
Var affine(const Var& x, double s, double c);

Var activate(const Var& x, Activation kind);
inline Var relu(const Var& x) { return activate(x, Activation::Relu); }
inline Var sigmoid(const Var& x) { return activate(x, Activation::Sigmoid); }
inline Var tanh(const Var& x) { return activate(x, Activation::Tanh); }
Var softplus(const Var& x);

Var reshape(const Var& x, Shape shape);
Var gather_rows(const Var& x, std::span<const Index> idx);
Var scatter_add_rows(const Var& x, std::span<const Index> dst,
                     std::size_t num_rows);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var mean_rows(const Var& x);
Var sum(const Var& x);

/// Row-sparse constant matrix: row r holds (column, coefficient) pairs.
struct SparseRows {
  std::size_t cols = 0;
  std::vector<std::vector<std::pair<Index, double>>> rows;
};
Var spmm(std::shared_ptr<const SparseRows> a, const Var& x);

/// out[e] = sum_b coef[e,b] * ys[b][e]  (per-edge mixture of basis outputs).
Var basis_mix(const std::vector<Var>& ys, const Var& coef);

/// Exponential decay kernel normalized within groups:
///   w[e] = exp(-delta * dt[e]) / sum_{e' in group(e)} exp(-delta * dt[e']).
/// `delta` is a one-element Var.
Var normalized_decay(const Var& delta, std::span<const double> dt,
                     std::span<const Index> group, std::size_t num_groups);

/// Width-preserving 1-D convolution over the stacked rows (a[b], c[b]).
/// kernels: [1 or B, channels*2*3] laid out [channel][row][tap];
/// bias: [1 or B, channels]. Output: [B, channels*d], laid out [channel][j].
Var conv1d_transe(const Var& a, const Var& c, const Var& kernels,
                  const Var& bias, std::size_t channels);

/// Per-row feature-wise modulation: out[b] = (alpha[b] + 1) * theta + beta[b].
Var film_modulate(const Var& theta, const Var& alpha, const Var& beta);

/// out[b] = x[b] (1 x k) times w[b] viewed as (k x n).
Var batched_vecmat(const Var& x, const Var& w, std::size_t n);

/// Inverted dropout. Identity when `training` is false or rate is zero.
Var dropout(const Var& x, double rate, bool training, std::mt19937_64& rng);
Var dropout(const Var& x, double rate, bool training, std::uint64_t seed);

/// Sum over rows of -log softmax(logits[b])[targets[b]].
Var softmax_cross_entropy(const Var& logits, std::span<const Index> targets);

/// Numerically stable softmax of one score vector.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace herln
