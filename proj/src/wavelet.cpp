#include "fap/wavelet.hpp"

#include <string>
#include <vector>

#include "fap/error.hpp"

namespace fap::wavelet {

namespace {

void require_even(std::size_t h, std::size_t w) {
  if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("dwt2: plane " + std::to_string(h) + "x" + std::to_string(w) +
                     " must have even extents >= 2; pad the image before transforming");
  }
}

// Sums are grouped as (a+b)+(c+d) so that a block-constant plane maps to
// exactly-zero detail bands and back without rounding.
void analyze(const double* x, std::size_t h, std::size_t w, double* ll, double* lh, double* hl, double* hh) {
  const std::size_t hw = w / 2;
  for (std::size_t i = 0; i < h / 2; ++i)
    for (std::size_t j = 0; j < hw; ++j) {
      const double a = x[(2 * i) * w + 2 * j];
      const double b = x[(2 * i) * w + 2 * j + 1];
      const double c = x[(2 * i + 1) * w + 2 * j];
      const double d = x[(2 * i + 1) * w + 2 * j + 1];
      const std::size_t o = i * hw + j;
      ll[o] = ((a + b) + (c + d)) * 0.5;
      lh[o] = ((a + b) - (c + d)) * 0.5;
      hl[o] = ((a - b) + (c - d)) * 0.5;
      hh[o] = ((a - b) - (c - d)) * 0.5;
    }
}

void synthesize(const double* ll, const double* lh, const double* hl, const double* hh, std::size_t h, std::size_t w,
                double* x) {
  const std::size_t hw = w / 2;
  for (std::size_t i = 0; i < h / 2; ++i)
    for (std::size_t j = 0; j < hw; ++j) {
      const std::size_t o = i * hw + j;
      const double s = ll[o], v = lh[o], z = hl[o], g = hh[o];
      x[(2 * i) * w + 2 * j] = ((s + v) + (z + g)) * 0.5;
      x[(2 * i) * w + 2 * j + 1] = ((s + v) - (z + g)) * 0.5;
      x[(2 * i + 1) * w + 2 * j] = ((s - v) + (z - g)) * 0.5;
      x[(2 * i + 1) * w + 2 * j + 1] = ((s - v) - (z - g)) * 0.5;
    }
}

}  // namespace

SubbandSet dwt2(const Tensor& plane) {
  if (plane.rank() != 2) throw ShapeError("dwt2: expected a [H,W] plane, got " + shape_str(plane.shape()));
  const std::size_t h = plane.dim(0), w = plane.dim(1);
  require_even(h, w);
  const std::size_t n = (h / 2) * (w / 2);
  std::vector<double> ll(n), lh(n), hl(n), hh(n);
  analyze(plane.values().data(), h, w, ll.data(), lh.data(), hl.data(), hh.data());
  const Shape half{h / 2, w / 2};
  return {Tensor(half, std::move(ll)), Tensor(half, std::move(lh)), Tensor(half, std::move(hl)),
          Tensor(half, std::move(hh)), h, w};
}

Tensor idwt2(const SubbandSet& bands) {
  const std::size_t h = bands.source_height, w = bands.source_width;
  require_even(h, w);
  const Shape half{h / 2, w / 2};
  for (const Tensor* t : {&bands.ll, &bands.lh, &bands.hl, &bands.hh}) {
    if (!t->defined() || t->shape() != half) {
      throw ShapeError("idwt2: every band must be " + shape_str(half) + " for a " + std::to_string(h) + "x" +
                       std::to_string(w) + " source");
    }
  }
  std::vector<double> x(h * w);
  synthesize(bands.ll.values().data(), bands.lh.values().data(), bands.hl.values().data(), bands.hh.values().data(),
             h, w, x.data());
  return Tensor({h, w}, std::move(x));
}

SubbandBatch dwt2_batch(const Tensor& images) {
  if (images.rank() != 4) throw ShapeError("dwt2_batch: expected [B,C,H,W], got " + shape_str(images.shape()));
  const std::size_t planes = images.dim(0) * images.dim(1);
  const std::size_t h = images.dim(2), w = images.dim(3);
  require_even(h, w);
  const std::size_t n = (h / 2) * (w / 2);
  std::vector<double> ll(planes * n), lh(planes * n), hl(planes * n), hh(planes * n);
  const double* x = images.values().data();
  for (std::size_t p = 0; p < planes; ++p)
    analyze(x + p * h * w, h, w, ll.data() + p * n, lh.data() + p * n, hl.data() + p * n, hh.data() + p * n);
  const Shape half{images.dim(0), images.dim(1), h / 2, w / 2};
  return {Tensor(half, std::move(ll)), Tensor(half, std::move(lh)), Tensor(half, std::move(hl)),
          Tensor(half, std::move(hh))};
}

Tensor idwt2_batch(const SubbandBatch& bands) {
  if (!bands.ll.defined() || bands.ll.rank() != 4) throw ShapeError("idwt2_batch: LL must be [B,C,H/2,W/2]");
  const Shape& half = bands.ll.shape();
  for (const Tensor* t : {&bands.lh, &bands.hl, &bands.hh}) {
    if (!t->defined() || t->shape() != half) {
      throw ShapeError("idwt2_batch: band shapes disagree with LL " + shape_str(half));
    }
  }
  const std::size_t planes = half[0] * half[1];
  const std::size_t h = half[2] * 2, w = half[3] * 2;
  require_even(h, w);
  const std::size_t n = half[2] * half[3];
  std::vector<double> x(planes * h * w);
  for (std::size_t p = 0; p < planes; ++p)
    synthesize(bands.ll.values().data() + p * n, bands.lh.values().data() + p * n, bands.hl.values().data() + p * n,
               bands.hh.values().data() + p * n, h, w, x.data() + p * h * w);
  return Tensor({half[0], half[1], h, w}, std::move(x));
}

}  // namespace fap::wavelet
