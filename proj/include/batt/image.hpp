#pragma once

#include <cstdint>
#include <vector>

#include "batt/error.hpp"

namespace batt {

// A C x H x W grid of intensities in [0, 1], row-major with channel
// outermost. All transforms and the network consume this layout directly.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // size == channels * height * width

  Image() = default;
  Image(int c, int h, int w, float value = 0.0f)
      : channels(c), height(h), width(w),
        pixels(static_cast<size_t>(c) * h * w, value) {}

  size_t size() const { return pixels.size(); }

  float& at(int c, int r, int col) {
    return pixels[(static_cast<size_t>(c) * height + r) * width + col];
  }
  float at(int c, int r, int col) const {
    return pixels[(static_cast<size_t>(c) * height + r) * width + col];
  }

  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height &&
           width == other.width;
  }

  void validate() const {
    if (channels < 1 || height < 1 || width < 1)
      throw ValidationError("image: non-positive dimension");
    if (pixels.size() != static_cast<size_t>(channels) * height * width)
      throw ValidationError("image: pixel count does not match C*H*W");
    for (float v : pixels)
      if (!(v >= 0.0f && v <= 1.0f))
        throw ValidationError("image: intensity outside [0,1]");
  }
};

}  // namespace batt
