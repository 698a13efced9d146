#include "fedaugmix/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fedaugmix/errors.hpp"

namespace fam {

void LabeledDataset::validate() const {
  if (images.size() != labels.size()) throw DimensionError(name + ": images and labels differ in count");
  for (auto y : labels) {
    if (y >= class_count) throw DimensionError(name + ": label " + std::to_string(y) + " out of range");
  }
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), {});
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw FormatError(path.string() + ": truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

std::string hex_bytes(const std::vector<unsigned char>& buf) {
  std::ostringstream os;
  os << std::hex;
  for (std::size_t i = 0; i < std::min<std::size_t>(4, buf.size()); ++i) {
    os << (i ? " " : "") << (buf[i] < 16 ? "0" : "") << static_cast<int>(buf[i]);
  }
  return os.str();
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

unsigned char to_byte(double p) { return static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)); }

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t limit) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);
  if (be32(img, 0, images_path) != 0x00000803) {
    throw FormatError(images_path.string() + ": bad IDX image magic (bytes " + hex_bytes(img) + ")");
  }
  if (be32(lab, 0, labels_path) != 0x00000801) {
    throw FormatError(labels_path.string() + ": bad IDX label magic (bytes " + hex_bytes(lab) + ")");
  }
  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t nl = be32(lab, 4, labels_path);
  if (n != nl) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) + " labels");
  }
  if (rows == 0 || cols == 0) throw FormatError(images_path.string() + ": zero image extent");
  if (img.size() < 16 + n * rows * cols) {
    throw FormatError(images_path.string() + ": truncated pixel data (" + std::to_string(img.size() - 16) +
                      " of " + std::to_string(n * rows * cols) + " bytes)");
  }
  if (lab.size() < 8 + n) {
    throw FormatError(labels_path.string() + ": truncated label data (" + std::to_string(lab.size() - 8) +
                      " of " + std::to_string(n) + " bytes)");
  }
  const std::size_t keep = limit > 0 ? std::min(limit, n) : n;
  LabeledDataset ds;
  ds.name = images_path.stem().string();
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    std::vector<double> px(rows * cols);
    const auto* src = img.data() + 16 + i * rows * cols;
    for (std::size_t p = 0; p < px.size(); ++p) px[p] = src[p] / 255.0;
    ds.images.emplace_back(rows, cols, 1, std::move(px));
    ds.labels.push_back(lab[8 + i]);
    max_label = std::max<std::size_t>(max_label, lab[8 + i]);
  }
  ds.class_count = std::max<std::size_t>(10, max_label + 1);
  return ds;
}

void write_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  data.validate();
  if (data.images.empty()) throw DimensionError("write_idx: empty dataset");
  const auto& first = data.images.front();
  std::ofstream im(images_path, std::ios::binary);
  std::ofstream lb(labels_path, std::ios::binary);
  if (!im) throw IoError("cannot open " + images_path.string() + " for writing");
  if (!lb) throw IoError("cannot open " + labels_path.string() + " for writing");
  put_be32(im, 0x00000803);
  put_be32(im, static_cast<std::uint32_t>(data.size()));
  put_be32(im, static_cast<std::uint32_t>(first.height));
  put_be32(im, static_cast<std::uint32_t>(first.width));
  for (const auto& img : data.images) {
    if (!img.same_shape(first) || img.channels != 1) throw DimensionError("write_idx: images must share one 1-channel shape");
    for (double p : img.pixels) im.put(static_cast<char>(to_byte(p)));
  }
  put_be32(lb, 0x00000801);
  put_be32(lb, static_cast<std::uint32_t>(data.size()));
  for (auto y : data.labels) lb.put(static_cast<char>(y));
  if (!im || !lb) throw IoError("failed writing IDX pair");
}

namespace {

// One bar plus one soft blob per class, placed on a grid so that every class
// has a distinct template.
Image class_template(std::size_t cls, std::size_t side) {
  Image t(side, side, 1);
  const double s = static_cast<double>(side);
  const bool horizontal = cls % 2 == 0;
  const double bar_pos = (0.2 + 0.6 * static_cast<double>((cls * 3) % 5) / 4.0) * (s - 1.0);
  const double half_thickness = std::max(0.5, s / 16.0);
  const double bx = (0.25 + 0.5 * static_cast<double>(cls % 3) / 2.0) * (s - 1.0);
  const double by = (0.25 + 0.5 * static_cast<double>((cls / 3) % 4) / 3.0) * (s - 1.0);
  const double radius = s / 7.0;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double coord = horizontal ? static_cast<double>(y) : static_cast<double>(x);
      double v = std::fabs(coord - bar_pos) <= half_thickness ? 0.8 : 0.0;
      const double dx = static_cast<double>(x) - bx, dy = static_cast<double>(y) - by;
      v += std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      t.at(y, x) = std::min(v, 1.0);
    }
  }
  return t;
}

}  // namespace

LabeledDataset synth_digits(std::size_t n, std::size_t side, std::size_t classes, Rng& rng) {
  if (classes < 2 || side < 2) throw ConfigError("synth_digits: need at least 2 classes and side >= 2");
  if (n < classes) throw ConfigError("synth_digits: n must be at least the class count");
  std::vector<Image> templates;
  for (std::size_t c = 0; c < classes; ++c) templates.push_back(class_template(c, side));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::normal_distribution<double> noise(0.0, 0.1);
  LabeledDataset ds;
  ds.name = "synth";
  ds.class_count = classes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = order[i] % classes;
    Image img = templates[cls];
    for (auto& p : img.pixels) p += noise(rng);
    clamp_unit(img);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(cls);
  }
  return ds;
}

Image downscale(const Image& img, std::size_t factor) {
  if (factor == 0 || img.height % factor || img.width % factor) {
    throw DimensionError("downscale: " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " is not divisible by factor " + std::to_string(factor));
  }
  if (factor == 1) return img;
  Image out(img.height / factor, img.width / factor, img.channels);
  const double area = static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        double total = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) total += img.at(y * factor + dy, x * factor + dx, c);
        out.at(y, x, c) = std::clamp(total / area, 0.0, 1.0);
      }
  return out;
}

void write_image(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw DimensionError("write_image: only 1- or 3-channel images are supported");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << '\n' << 255 << '\n';
  for (double p : img.pixels) os.put(static_cast<char>(to_byte(p)));
  if (!os) throw IoError("failed writing " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || !is || maxval != 255 || w == 0 || h == 0) {
    throw FormatError(path.string() + ": unsupported portable map header");
  }
  is.get();
  const std::size_t channels = magic == "P5" ? 1 : 3;
  std::vector<double> px(w * h * channels);
  for (auto& p : px) {
    const int b = is.get();
    if (b == std::char_traits<char>::eof()) throw FormatError(path.string() + ": truncated pixel data");
    p = b / 255.0;
  }
  return Image(h, w, channels, std::move(px));
}

std::string dataset_manifest_json(const LabeledDataset& data) {
  nlohmann::ordered_json j;
  j["name"] = data.name;
  j["count"] = data.size();
  j["side"] = data.images.empty() ? 0 : data.images.front().height;
  j["classes"] = data.class_count;
  return j.dump() + "\n";
}

}  // namespace fam
