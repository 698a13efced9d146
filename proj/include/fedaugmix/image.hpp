#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedaugmix/tensor.hpp"

namespace fam {

// H x W x C float image, row-major with interleaved channels, pixels in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}
  Image(std::size_t h, std::size_t w, std::size_t c, std::vector<double> px);

  std::size_t size() const { return pixels.size(); }
  double& at(std::size_t y, std::size_t x, std::size_t ch = 0) {
    return pixels[(y * width + x) * channels + ch];
  }
  double at(std::size_t y, std::size_t x, std::size_t ch = 0) const {
    return pixels[(y * width + x) * channels + ch];
  }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
  bool operator==(const Image&) const = default;
};

void clamp_unit(Image& img);

// Stacks images as rows of a [B x H*W*C] tensor.
Tensor to_batch(std::span<const Image> images);
// Inverse of to_batch for a given image geometry.
std::vector<Image> from_batch(const Tensor& batch, std::size_t height, std::size_t width,
                              std::size_t channels);

}  // namespace fam
