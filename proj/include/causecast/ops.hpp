#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "causecast/random.hpp"
#include "causecast/tensor.hpp"

// Differentiable primitives. Binary elementwise ops accept `b` with the same
// shape as `a` or with a shape equal to a trailing suffix of `a`'s shape (the
// operand is then repeated over the leading axes).
namespace causecast::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// a: [..., m, k]. b: [k, n] (shared across leading axes) or [..., k, n] with
// identical leading axes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);

Tensor softmax_lastdim(const Tensor& x);

struct AttentionMask {
  bool causal = false;
  // Per leading-index valid key count; empty means all keys valid.
  std::vector<std::size_t> key_lengths;
};
// x: [B, ..., T, S]. Masked keys receive exactly zero weight; causal masking
// aligns the last query with the last key (query t sees keys s <= t + S - T).
Tensor masked_softmax_lastdim(const Tensor& x, const AttentionMask& mask);

// Normalizes over the last axis; zero-variance rows map to zero before the affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_axis(const Tensor& x, std::size_t axis);

// mean((a - b)^2)
Tensor mse_reduce(const Tensor& a, const Tensor& b);
// sum(((pred - target) * mask)^2); mask is treated as a constant.
Tensor masked_squared_error(const Tensor& pred, const Tensor& target, const Tensor& mask);

// table: [V, m]; result: [prefix..., m] with prefix numel == indices.size().
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices, Shape prefix);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// [shape...] -> [count, shape...]
Tensor expand_leading(const Tensor& x, std::size_t count);

Tensor dropout(const Tensor& x, double p, Rng& rng);

}  // namespace causecast::ops
