#include "ldg/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace ldg {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("png: " + what + ": " + path);
}

}  // namespace

ImageF read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(path, "cannot open");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "read struct alloc failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "info struct alloc failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "decode error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unsupported channel count " + std::to_string(channels));
  }

  std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
  ImageF img;
  img.channels = channels;
  img.height = h;
  img.width = w;
  img.data.resize(static_cast<std::size_t>(channels) * w * h);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = static_cast<float>(row[x * channels + c]) / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace {

void write_png(const std::string& path, const ImageF& img, int color_type, int channels) {
  if (img.channels != channels)
    throw std::runtime_error("png: image has " + std::to_string(img.channels) +
                             " channels, expected " + std::to_string(channels) + ": " + path);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "write struct alloc failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "info struct alloc failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * channels);
  for (std::int64_t y = 0; y < img.height; ++y) {
    for (std::int64_t x = 0; x < img.width; ++x)
      for (int c = 0; c < channels; ++c) {
        float v = img.at(c, y, x);
        if (v < 0.0f) v = 0.0f;
        if (v > 1.0f) v = 1.0f;
        row[static_cast<std::size_t>(x) * channels + c] =
            static_cast<png_byte>(v * 255.0f + 0.5f);
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_rgb(const std::string& path, const ImageF& img) {
  write_png(path, img, PNG_COLOR_TYPE_RGB, 3);
}

void write_png_gray(const std::string& path, const ImageF& img) {
  write_png(path, img, PNG_COLOR_TYPE_GRAY, 1);
}

}  // namespace ldg
