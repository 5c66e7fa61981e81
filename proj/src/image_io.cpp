#include "fap/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fap/error.hpp"

namespace fap::image_io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  if (where) *where = message;
  png_longjmp(png, 1);
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  std::uint8_t header[8] = {};
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, nullptr);
  if (!png) throw IoError("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  Image8 image;
  std::vector<png_bytep> rows;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    throw IoError("cannot decode " + path.string() + (message.empty() ? "" : ": " + message));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  image.channels = png_get_channels(png, info);
  if (image.channels != 1 && image.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported channel layout in " + path.string());
  }
  image.pixels.resize(image.width * image.height * image.channels);
  rows.resize(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = image.pixels.data() + y * image.width * image.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("write_png: channels must be 1 or 3");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw IoError("write_png: pixel buffer does not match the image size");
  }
  auto file = open_file(path, "wb");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, nullptr);
  if (!png) throw IoError("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  std::vector<png_const_bytep> rows(image.height);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw IoError("cannot encode " + path.string() + (message.empty() ? "" : ": " + message));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = image.pixels.data() + y * image.width * image.channels;
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 resize_nearest(const Image8& image, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || image.width == 0 || image.height == 0) {
    throw IoError("resize_nearest: empty image or target size");
  }
  Image8 out{width, height, image.channels, std::vector<std::uint8_t>(width * height * image.channels)};
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(image.height - 1, (2 * y + 1) * image.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(image.width - 1, (2 * x + 1) * image.width / (2 * width));
      for (std::size_t c = 0; c < image.channels; ++c)
        out.pixels[(y * width + x) * image.channels + c] = image.pixels[(sy * image.width + sx) * image.channels + c];
    }
  }
  return out;
}

std::vector<double> to_planes(const Image8& image, std::size_t channels) {
  if (channels != 1 && channels != 3) throw ConfigError("to_planes: channels must be 1 or 3");
  const std::size_t n = image.width * image.height;
  std::vector<double> out(channels * n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = image.pixels.data() + i * image.channels;
    if (image.channels == 1) {
      for (std::size_t c = 0; c < channels; ++c) out[c * n + i] = px[0] / 255.0;
    } else if (channels == 3) {
      for (std::size_t c = 0; c < 3; ++c) out[c * n + i] = px[c] / 255.0;
    } else {
      out[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
    }
  }
  return out;
}

Image8 plane_to_gray(const double* plane, std::size_t height, std::size_t width, double lo, double hi) {
  Image8 out{width, height, 1, std::vector<std::uint8_t>(width * height)};
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < width * height; ++i) {
    const double t = std::clamp((plane[i] - lo) / span, 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  return out;
}

}  // namespace fap::image_io
