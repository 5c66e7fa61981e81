#pragma once

#include <cstddef>

#include "fap/rng.hpp"
#include "fap/tensor.hpp"

namespace fap {

// Square channel projections shared by both attention directions.
struct MutualAttentionParams {
  Tensor w_q;  // [C,C]
  Tensor w_k;
  Tensor w_v;
};

// Xavier-normal projections (std = sqrt(2 / (C + C))), tracking gradients.
MutualAttentionParams init_mutual_attention(std::size_t channels, Rng& rng);

// Bidirectional cross-attention between an anchor and a variant of equal shape
// [B,C,H,W], treating the H*W positions of each item as C-dimensional tokens:
//
//   a1  = attend(query = P_q anchor,  key = P_k variant, value = P_v variant)
//   a2  = attend(query = P_q variant, key = P_k anchor,  value = P_v anchor)
//   out = (a1 + a2) / 2 + variant
//
// with attend(q, k, v) = softmax(q k^T / sqrt(C)) v. Output shape equals input
// shape; with all projections zero the output is the variant itself.
Tensor mutual_attention(const Tensor& anchor, const Tensor& variant, const MutualAttentionParams& params);

}  // namespace fap
