#include "fedaugmix/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fedaugmix/errors.hpp"

namespace fam {

const char* aug_kind_name(AugKind kind) {
  switch (kind) {
    case AugKind::rotate: return "rotate";
    case AugKind::shear_x: return "shear_x";
    case AugKind::shear_y: return "shear_y";
    case AugKind::translate_x: return "translate_x";
    case AugKind::translate_y: return "translate_y";
    case AugKind::posterize: return "posterize";
    case AugKind::solarize: return "solarize";
    case AugKind::autocontrast: return "autocontrast";
    case AugKind::equalize: return "equalize";
  }
  return "unknown";
}

AugKind parse_aug_kind(const std::string& name) {
  for (const auto& op : default_operations()) {
    if (name == aug_kind_name(op.kind)) return op.kind;
  }
  throw ConfigError("unknown augmentation operation '" + name + "'");
}

bool is_signed(AugKind kind) {
  switch (kind) {
    case AugKind::rotate:
    case AugKind::shear_x:
    case AugKind::shear_y:
    case AugKind::translate_x:
    case AugKind::translate_y:
      return true;
    default:
      return false;
  }
}

bool takes_level(AugKind kind) { return kind != AugKind::autocontrast && kind != AugKind::equalize; }

const std::vector<AugmentOp>& default_operations() {
  static const std::vector<AugmentOp> ops = {
      {AugKind::rotate, 30.0},      {AugKind::shear_x, 0.3},         {AugKind::shear_y, 0.3},
      {AugKind::translate_x, 1.0 / 3.0}, {AugKind::translate_y, 1.0 / 3.0}, {AugKind::posterize, 4.0},
      {AugKind::solarize, 1.0},     {AugKind::autocontrast, 0.0},    {AugKind::equalize, 0.0},
  };
  return ops;
}

double aug_level_from_sample(const AugmentOp& op, double samp_level) {
  return samp_level / 10.0 * op.max_val;
}

double sample_aug_level(const AugmentOp& op, double severity, Rng& rng) {
  if (!(severity > 0.1)) {
    throw ConfigError("augmentation severity must exceed 0.1, got " + std::to_string(severity));
  }
  const double samp = std::uniform_real_distribution<double>(0.1, severity)(rng);
  double level = aug_level_from_sample(op, samp);
  if (is_signed(op.kind) && std::bernoulli_distribution(0.5)(rng)) level = -level;
  return level;
}

namespace {

double sample_bilinear(const Image& img, double sx, double sy, std::size_t ch) {
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const double fx = sx - fx0, fy = sy - fy0;
  const auto x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
  auto pix = [&](long y, long x) {
    if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return 0.0;
    return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), ch);
  };
  const double top = (1.0 - fx) * pix(y0, x0) + fx * pix(y0, x0 + 1);
  const double bottom = (1.0 - fx) * pix(y0 + 1, x0) + fx * pix(y0 + 1, x0 + 1);
  return (1.0 - fy) * top + fy * bottom;
}

// Output pixel (x, y) takes the source value at source(x, y).
template <class Map>
Image warp(const Image& img, Map source) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const auto [sx, sy] = source(static_cast<double>(x), static_cast<double>(y));
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = sample_bilinear(img, sx, sy, c);
    }
  }
  return out;
}

std::array<double, 2> center(const Image& img) {
  return {(static_cast<double>(img.width) - 1.0) / 2.0, (static_cast<double>(img.height) - 1.0) / 2.0};
}

int to_byte(double p) { return static_cast<int>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)); }

Image autocontrast(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = c; i < img.size(); i += img.channels) {
      lo = std::min(lo, img.pixels[i]);
      hi = std::max(hi, img.pixels[i]);
    }
    if (!(hi > lo)) continue;
    for (std::size_t i = c; i < img.size(); i += img.channels) {
      out.pixels[i] = (img.pixels[i] - lo) / (hi - lo);
    }
  }
  return out;
}

Image equalize(const Image& img) {
  Image out = img;
  const std::size_t count = img.height * img.width;
  for (std::size_t c = 0; c < img.channels; ++c) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = c; i < img.size(); i += img.channels) ++hist[static_cast<std::size_t>(to_byte(img.pixels[i]))];
    std::array<std::size_t, 256> cdf{};
    std::size_t run = 0;
    for (std::size_t v = 0; v < 256; ++v) cdf[v] = (run += hist[v]);
    std::size_t cdf_min = 0;
    for (std::size_t v = 0; v < 256; ++v) {
      if (hist[v]) {
        cdf_min = cdf[v];
        break;
      }
    }
    if (count == cdf_min) continue;  // single intensity
    for (std::size_t i = c; i < img.size(); i += img.channels) {
      const std::size_t v = static_cast<std::size_t>(to_byte(img.pixels[i]));
      const double scaled = static_cast<double>(cdf[v] - cdf_min) / static_cast<double>(count - cdf_min);
      out.pixels[i] = std::round(scaled * 255.0) / 255.0;
    }
  }
  return out;
}

}  // namespace

Image apply_op(const Image& img, const AugmentOp& op, double level) {
  if (img.size() == 0 || img.size() != img.height * img.width * img.channels) {
    throw DimensionError("apply_op: malformed image");
  }
  const auto [cx, cy] = center(img);
  Image out;
  switch (op.kind) {
    case AugKind::rotate: {
      const double rad = level * std::numbers::pi / 180.0;
      const double cs = std::cos(rad), sn = std::sin(rad);
      out = warp(img, [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        return std::array<double, 2>{cs * dx + sn * dy + cx, -sn * dx + cs * dy + cy};
      });
      break;
    }
    case AugKind::shear_x:
      out = warp(img, [&](double x, double y) { return std::array<double, 2>{x + level * (y - cy), y}; });
      break;
    case AugKind::shear_y:
      out = warp(img, [&](double x, double y) { return std::array<double, 2>{x, y + level * (x - cx)}; });
      break;
    case AugKind::translate_x: {
      const double shift = level * static_cast<double>(img.width);
      out = warp(img, [&](double x, double y) { return std::array<double, 2>{x - shift, y}; });
      break;
    }
    case AugKind::translate_y: {
      const double shift = level * static_cast<double>(img.height);
      out = warp(img, [&](double x, double y) { return std::array<double, 2>{x, y - shift}; });
      break;
    }
    case AugKind::posterize: {
      const int bits = std::clamp(static_cast<int>(std::ceil(8.0 - level)), 1, 8);
      const int mask = ~((1 << (8 - bits)) - 1) & 0xFF;
      out = img;
      for (auto& p : out.pixels) p = static_cast<double>(to_byte(p) & mask) / 255.0;
      break;
    }
    case AugKind::solarize: {
      const double threshold = 1.0 - level / op.max_val;
      out = img;
      for (auto& p : out.pixels) {
        if (p > threshold) p = 1.0 - p;
      }
      break;
    }
    case AugKind::autocontrast:
      out = autocontrast(img);
      break;
    case AugKind::equalize:
      out = equalize(img);
      break;
    default:
      throw ConfigError("apply_op: unknown operation kind");
  }
  clamp_unit(out);
  return out;
}

void AugMixConfig::validate() const {
  if (n_chains < 1) throw ConfigError("augmix: n_chains must be at least 1");
  if (max_chain_len < 1 || max_chain_len > 3) throw ConfigError("augmix: max_chain_len must be in [1, 3]");
  if (!(severity > 0.1 && severity <= 10.0)) {
    throw ConfigError("augmix: severity must lie in (0.1, 10], got " + std::to_string(severity));
  }
  if (!(mix_concentration > 0.0)) throw ConfigError("augmix: mix_concentration must be positive");
  if (operations.empty()) throw ConfigError("augmix: empty operation set");
  for (const auto& op : operations) {
    if (takes_level(op.kind) && !(op.max_val > 0.0)) {
      throw ConfigError(std::string("augmix: max_val for ") + aug_kind_name(op.kind) + " must be positive");
    }
  }
}

AugMixPlan sample_augmix_plan(const AugMixConfig& cfg, Rng& rng) {
  cfg.validate();
  AugMixPlan plan;
  plan.weights = sample_dirichlet(cfg.mix_concentration, static_cast<std::size_t>(cfg.n_chains), rng);
  std::uniform_int_distribution<int> length(1, cfg.max_chain_len);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.operations.size() - 1);
  for (int i = 0; i < cfg.n_chains; ++i) {
    std::vector<ChainStep> chain(static_cast<std::size_t>(length(rng)));
    for (auto& step : chain) {
      step.op = cfg.operations[pick(rng)];
      step.level = takes_level(step.op.kind) ? sample_aug_level(step.op, cfg.severity, rng) : 0.0;
    }
    plan.chains.push_back(std::move(chain));
  }
  plan.m = sample_beta(cfg.mix_concentration, cfg.mix_concentration, rng);
  return plan;
}

Image apply_augmix_plan(const Image& img, const AugMixPlan& plan) {
  if (plan.weights.size() != plan.chains.size()) {
    throw DimensionError("augmix plan: weight count does not match chain count");
  }
  std::vector<double> delta(img.size(), 0.0);
  for (std::size_t i = 0; i < plan.chains.size(); ++i) {
    Image chained = img;
    for (const auto& step : plan.chains[i]) chained = apply_op(chained, step.op, step.level);
    for (std::size_t p = 0; p < delta.size(); ++p) {
      delta[p] += plan.weights[i] * (chained.pixels[p] - img.pixels[p]);
    }
  }
  Image out = img;
  const double keep = 1.0 - plan.m;
  for (std::size_t p = 0; p < delta.size(); ++p) out.pixels[p] += keep * delta[p];
  clamp_unit(out);
  return out;
}

Image augmix(const Image& img, const AugMixConfig& cfg, Rng& rng) {
  return apply_augmix_plan(img, sample_augmix_plan(cfg, rng));
}

}  // namespace fam
