#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "tgfuse/tensor.hpp"

// Differentiable tensor operations. Every op accepts constants or tensors
// recorded on a Tape; the result is recorded on the operands' tape if any
// operand is tracked.
namespace tgfuse {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// x[r, c] + bias[c] for every row r of the matrix view of x.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes each row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Scaled dot-product attention over already projected q [Lq x d], k, v
/// [Lk x d], split into `heads` column groups. With `causal`, query i only sees
/// keys j <= i (requires Lq == Lk).
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            bool causal);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// [H, W, C] image -> [(H/p)*(W/p), p*p*C] patch rows, row-major patch order.
Tensor patchify(const Tensor& image, std::size_t patch);
/// [H*W, 4*C] -> [2H*2W, C]; column block (dy*2+dx) of input row (y, x) lands at
/// output pixel (2y+dy, 2x+dx).
Tensor depth_to_space(const Tensor& x, std::size_t height, std::size_t width);

namespace debug {

/// Test hook: scales the input gradients produced by the backward rule of `op`
/// (one of "matmul", "softmax", "layer_norm", "attention", "gelu") by
/// `factor`. An empty name clears the fault.
void inject_backward_fault(const std::string& op, double factor);
double backward_fault(std::string_view op);

}  // namespace debug

}  // namespace tgfuse
