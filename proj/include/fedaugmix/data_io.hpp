#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fedaugmix/image.hpp"
#include "fedaugmix/rng.hpp"

namespace fam {

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  std::string name;

  std::size_t size() const { return images.size(); }
  void validate() const;
};

// Reads an IDX image file (magic 0x00000803, u8 pixels) and its IDX label
// file (magic 0x00000801). Pixels are scaled to [0, 1]. `limit` > 0 keeps the
// first `limit` samples.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t limit = 0);
// Writes single-channel images (quantized to bytes) and labels as an IDX pair.
void write_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Class-conditional bar/blob patterns with Gaussian pixel noise (sigma 0.1),
// balanced over classes. Deterministic for a given rng state.
LabeledDataset synth_digits(std::size_t n, std::size_t side, std::size_t classes, Rng& rng);

// Mean pooling over factor x factor blocks.
Image downscale(const Image& img, std::size_t factor);

// Binary portable graymap (1 channel) or pixmap (3 channels), maxval 255.
void write_image(const Image& img, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

// {name, count, side, classes}
std::string dataset_manifest_json(const LabeledDataset& data);

}  // namespace fam
