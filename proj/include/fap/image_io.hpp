#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fap::image_io {

// 8-bit interleaved pixels, row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

// Gray, gray+alpha, RGB, RGBA and palette PNGs are expanded to 8-bit gray or RGB.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

// Nearest neighbour: destination pixel d samples source floor((d + 0.5) * src / dst).
Image8 resize_nearest(const Image8& image, std::size_t width, std::size_t height);

// Channel-first planes in [0,1]. channels = 1 averages RGB with luma weights;
// channels = 3 replicates a gray source.
std::vector<double> to_planes(const Image8& image, std::size_t channels);

// Linear map of a [H,W] plane onto 0..255 using [lo, hi]; values outside clip.
Image8 plane_to_gray(const double* plane, std::size_t height, std::size_t width, double lo, double hi);

}  // namespace fap::image_io
