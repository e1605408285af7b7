#pragma once

// Differentiable operations. Rank-1 tensors are [n]; rank-2 tensors are
// [rows×cols] row-major. "Row-wise" ops act along the last axis. Shape
// violations raise DimensionError naming the op; bad indices raise BoundsError.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mtnas/autodiff/tensor.hpp"

namespace mtnas::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a[m×n] + bias[n] broadcast over rows.
Var add_bias(Var a, Var bias);
/// a[m×k] · b[k×n]
Var matmul(Var a, Var b);

/// Concatenation along the last axis; all operands share rank and leading dim.
Var concat(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Rows [begin, end) of a rank-2 tensor.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Row r of a rank-2 tensor as a rank-1 tensor.
Var row(Var a, std::size_t r);

/// Mean of a rank-2 tensor over axis 0 (result [cols]) or axis 1 (result [rows]).
Var mean(Var a, std::size_t axis);
/// Sum of all entries, shape [1].
Var sum(Var a);

Var sigmoid(Var a);
Var tanh(Var a);
/// Row-wise log-softmax.
Var log_softmax(Var a);
/// Row-wise log-sum-exp; [n] -> [1], [m×n] -> [m].
Var logsumexp(Var a);

/// Rows of table[V×D] at the given indices -> [indices×D].
Var embedding_gather(Var table, std::span<const int> indices);
/// a[m×n] -> [m] with entry i = a[i, index[i]].
Var pick(Var a, std::span<const int> index);

/// Row i taken from on_true when mask[i] != 0, else from on_false.
Var select_rows(std::span<const std::uint8_t> mask, Var on_true, Var on_false);
/// Per-row mean over the first lengths[b] steps of a sequence of [B×d] tensors.
Var masked_time_mean(std::span<const Var> steps, std::span<const std::size_t> lengths);
/// Σ_j coeffs[j] · terms[j]; coeffs has shape [terms.size()].
Var linear_combination(std::span<const Var> terms, Var coeffs);

/// LSTM state update from pre-activations [B×4h] (gate order i, f, g, o) and
/// previous cell [B×h]. Returns [B×2h] holding (h', c').
Var lstm_cell(Var gates, Var cell);

}  // namespace mtnas::ad
