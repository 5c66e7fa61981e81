#pragma once

#include <cstddef>

#include "fap/tensor.hpp"

// Single-level orthonormal 2D Haar transform.
//
// For each 2x2 block (a b / c d) of the source plane:
//   LL = (a + b + c + d) / 2   low rows, low columns
//   LH = (a + b - c - d) / 2   low rows, high columns (vertical detail)
//   HL = (a - b + c - d) / 2   high rows, low columns (horizontal detail)
//   HH = (a - b - c + d) / 2
// which is the separable 1D pair low = (a+b)/sqrt2, high = (a-b)/sqrt2 applied
// along rows and then along columns.
namespace fap::wavelet {

struct SubbandSet {
  Tensor ll, lh, hl, hh;  // each [H/2, W/2]
  std::size_t source_height = 0;
  std::size_t source_width = 0;
};

// Same four bands for a whole [B,C,H,W] batch; each band is [B,C,H/2,W/2].
struct SubbandBatch {
  Tensor ll, lh, hl, hh;
};

// plane: [H,W] with H, W even. Odd sizes are rejected; pad before calling.
SubbandSet dwt2(const Tensor& plane);
Tensor idwt2(const SubbandSet& bands);

SubbandBatch dwt2_batch(const Tensor& images);
Tensor idwt2_batch(const SubbandBatch& bands);

}  // namespace fap::wavelet
