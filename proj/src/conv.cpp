#include <Eigen/Core>
#include <string>

#include "fap/error.hpp"
#include "fap/ops.hpp"

namespace fap::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kernel, stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t out_plane() const { return out_h * out_w; }
  std::size_t in_image() const { return channels * height * width; }
};

// cols[(c*k + i)*k + j, oy*out_w + ox] = x[c, oy*s + i - p, ox*s + j - p], zero outside.
void im2col(const ConvGeometry& g, const double* x, RowMat& cols) {
  cols.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.out_plane()));
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < g.kernel; ++i)
      for (std::size_t j = 0; j < g.kernel; ++j) {
        double* dst = cols.data() + ((c * g.kernel + i) * g.kernel + j) * g.out_plane();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto xx = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = y >= 0 && xx >= 0 && y < static_cast<std::ptrdiff_t>(g.height) &&
                                xx < static_cast<std::ptrdiff_t>(g.width);
            dst[oy * g.out_w + ox] =
                inside ? x[(c * g.height + static_cast<std::size_t>(y)) * g.width + static_cast<std::size_t>(xx)] : 0.0;
          }
        }
      }
}

void col2im_add(const ConvGeometry& g, const RowMat& cols, double* dx) {
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < g.kernel; ++i)
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const double* src = cols.data() + ((c * g.kernel + i) * g.kernel + j) * g.out_plane();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.padding);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto xx = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.padding);
            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dx[(c * g.height + static_cast<std::size_t>(y)) * g.width + static_cast<std::size_t>(xx)] +=
                src[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d: expected input [B,C,H,W] and kernel [F,C,k,k], got " + shape_str(input.shape()) +
                     " and " + shape_str(kernel.shape()));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2),
                 stride, padding, 0, 0};
  if (kernel.dim(1) != g.channels || kernel.dim(3) != g.kernel) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                     shape_str(input.shape()));
  }
  if (g.kernel % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(g.kernel));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.out_h = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel) / stride + 1;

  const std::size_t out_image = g.filters * g.out_plane();
  std::vector<double> out(g.batch * out_image);
  MapC kmat(kernel.values().data(), g.filters, g.patch());
  RowMat cols;
  auto xv = input.values();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, xv.data() + b * g.in_image(), cols);
    MapM(out.data() + b * out_image, g.filters, g.out_plane()).noalias() = kmat * cols;
  }
  return Tensor::make_result(
      "conv2d", {g.batch, g.filters, g.out_h, g.out_w}, std::move(out), {input, kernel},
      [input, kernel, g, out_image](std::span<const double> grad, std::span<double* const> gi) {
        MapC kmat(kernel.values().data(), g.filters, g.patch());
        auto xv = input.values();
        RowMat cols, dcols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          MapC gout(grad.data() + b * out_image, g.filters, g.out_plane());
          if (gi[1]) {
            im2col(g, xv.data() + b * g.in_image(), cols);
            MapM(gi[1], g.filters, g.patch()).noalias() += gout * cols.transpose();
          }
          if (gi[0]) {
            dcols.noalias() = kmat.transpose() * gout;
            col2im_add(g, dcols, gi[0] + b * g.in_image());
          }
        }
      });
}

Tensor max_pool2d(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("max_pool2d: expected [B,C,H,W], got " + shape_str(input.shape()));
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) throw ShapeError("max_pool2d: spatial extent below 2 in " + shape_str(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  auto xv = input.values();
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = p * h * w + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = p * h * w + (2 * oy + dy) * w + 2 * ox + dx;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = xv[best];
        argmax[o] = best;
      }
  return Tensor::make_result("max_pool2d", {input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                             [argmax = std::move(argmax)](std::span<const double> g, std::span<double* const> gi) {
                               for (std::size_t o = 0; o < g.size(); ++o) gi[0][argmax[o]] += g[o];
                             });
}

}  // namespace fap::ops
