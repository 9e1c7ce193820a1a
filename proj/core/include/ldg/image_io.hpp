#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ldg {

// CHW float image, values in [0,1].
struct ImageF {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> data;

  float& at(std::int64_t c, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  float at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>((c * height + y) * width + x)];
  }
};

// 8-bit PNG -> float [0,1]. RGB(A) files load as 3 channels (alpha dropped),
// grayscale as 1 channel. Throws std::runtime_error naming the file on failure.
ImageF read_png(const std::string& path);

// 3-channel image -> 8-bit RGB PNG.
void write_png_rgb(const std::string& path, const ImageF& img);

// 1-channel image -> 8-bit grayscale PNG.
void write_png_gray(const std::string& path, const ImageF& img);

}  // namespace ldg
