#include "fedaugmix/image.hpp"

#include <algorithm>

#include "fedaugmix/errors.hpp"

namespace fam {

Image::Image(std::size_t h, std::size_t w, std::size_t c, std::vector<double> px)
    : height(h), width(w), channels(c), pixels(std::move(px)) {
  if (h == 0 || w == 0 || c == 0) throw DimensionError("image extents must be positive");
  if (pixels.size() != h * w * c) {
    throw DimensionError("image buffer holds " + std::to_string(pixels.size()) + " values, expected " +
                         std::to_string(h * w * c));
  }
}

void clamp_unit(Image& img) {
  for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
}

Tensor to_batch(std::span<const Image> images) {
  if (images.empty()) throw DimensionError("to_batch: empty image list");
  const std::size_t d = images.front().size();
  std::vector<double> data;
  data.reserve(images.size() * d);
  for (const auto& img : images) {
    if (!img.same_shape(images.front())) throw DimensionError("to_batch: images differ in shape");
    data.insert(data.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor({images.size(), d}, std::move(data));
}

std::vector<Image> from_batch(const Tensor& batch, std::size_t height, std::size_t width,
                              std::size_t channels) {
  const std::size_t d = height * width * channels;
  if (batch.rank() != 2 || batch.shape()[1] != d) {
    throw DimensionError("from_batch: batch " + shape_str(batch.shape()) + " does not hold images of " +
                         std::to_string(d) + " values");
  }
  std::vector<Image> out;
  const auto v = batch.data();
  for (std::size_t r = 0; r < batch.shape()[0]; ++r) {
    out.emplace_back(height, width, channels,
                     std::vector<double>(v.begin() + r * d, v.begin() + (r + 1) * d));
  }
  return out;
}

}  // namespace fam
