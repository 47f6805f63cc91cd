#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rbw/num/tape.hpp"

// Differentiable operations over tape nodes. Unless stated otherwise the
// operands are matrices (rank 2); a gradient rule is recorded whenever any
// operand requires a gradient.
namespace rbw::num {

/// c[i][j] = sum_t a[i][t] * b[t][j]
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Hadamard product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Adds a 1 x n row to every row of an m x n matrix (leading-axis broadcast).
Var add_row(Var a, Var row);
/// Multiplies every entry of `a` by the 1 x 1 node `s`.
Var mul_scalar(Var a, Var s);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);

/// Normalized exp(x / temperature) along `axis` (any rank), max-subtracted.
Var softmax(Var x, std::size_t axis, double temperature = 1.0);

/// Normalizes the last axis to zero mean / unit variance, then applies
/// gain and bias (both 1 x n).
Var layer_norm(Var x, Var gain, Var bias, double epsilon = 1e-5);

/// Rows divided by sqrt(|row|^2 + epsilon).
Var l2_normalize_rows(Var x, double epsilon = 1e-12);

Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
/// Half-open range [begin, end) along `axis` of a matrix.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var transpose(Var x);
Var reshape(Var x, Shape shape);

/// 1 x 1 sum of all entries.
Var sum(Var x);
Var mean(Var x);
/// 1 x n column sums of an m x n matrix.
Var sum_rows(Var x);

/// Mean over the batch of -log softmax(logits[b])[targets[b]].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

}  // namespace rbw::num
