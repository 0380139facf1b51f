#pragma once

#include <span>
#include <vector>

#include "vitlp/tensor.hpp"

// Differentiable operations. Shapes are checked explicitly; the only implicit
// broadcast is a bias over the last axis (add_bias).
namespace vitlp::ops {

// a[m×k] · b[k×n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m×k] · b[n×k]ᵀ, the layout of a Linear weight.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Adds a constant (non-differentiable) array of the same size.
Tensor add_constant(const Tensor& x, std::span<const double> constant);
Tensor reshape(const Tensor& x, Shape shape);

Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// rows of table[V×d] selected by ids → [n×d]
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor select_cols(const Tensor& x, std::span<const std::size_t> cols);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// −log softmax(logits)[target] for a single logit vector.
Tensor cross_entropy(const Tensor& logits, int target);
// Σ over rows with target ≥ 0 of −log softmax(row)[target]; rows with a
// negative target are ignored.
Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> targets);

}  // namespace vitlp::ops
