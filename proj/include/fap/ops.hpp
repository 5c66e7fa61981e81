#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fap/tensor.hpp"

// Differentiable primitives. Every op validates shapes (ShapeError), refuses
// non-finite results (NumericError), and records history when an input tracks
// gradients. There is no broadcasting except the explicit bias adds.
namespace fap::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// relu'(0) is taken as 0.
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);

Tensor reshape(const Tensor& a, Shape shape);
// [B, ...] -> [B, prod(...)]
Tensor flatten(const Tensor& a);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Rows [begin, end) along axis 0.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
// Gathers rows along axis 0; repeated indices accumulate in the backward pass.
Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[B,in] * w[in,out] + bias[out]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias);
// x[B,C,...] + bias[C] broadcast over batch and trailing axes.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// Along the last axis.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
// -mean_i logp[i, labels[i]] for logp[Q,N].
Tensor nll_loss(const Tensor& logp, std::span<const int> labels);

// Cross-correlation. input[B,C,H,W], kernel[F,C,k,k] with k odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
// 2x2 window, stride 2; ties go to the first element in row-major order.
Tensor max_pool2d(const Tensor& input);

// out[i,j] = |a_i - b_j|^2 for a[Q,D], b[N,D].
Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b);

// Scaled dot-product attention over spatial tokens of channel-first maps.
// q, k, v are [B,C,H,W]; each of the H*W positions is a C-dimensional token.
// out[b,:,t] = sum_s softmax_s(q_t . k_s / sqrt(C)) v_s.
// The backward pass recomputes the attention weights instead of storing them.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace fap::ops
