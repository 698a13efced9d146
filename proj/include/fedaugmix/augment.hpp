#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedaugmix/image.hpp"
#include "fedaugmix/rng.hpp"

namespace fam {

enum class AugKind {
  rotate,
  shear_x,
  shear_y,
  translate_x,
  translate_y,
  posterize,
  solarize,
  autocontrast,
  equalize,
};

const char* aug_kind_name(AugKind kind);
AugKind parse_aug_kind(const std::string& name);

// Signed kinds take a random sign when their level is sampled.
bool is_signed(AugKind kind);
bool takes_level(AugKind kind);

struct AugmentOp {
  AugKind kind = AugKind::rotate;
  // Magnitude at severity 10: degrees for rotate, shear factor, fraction of
  // the image extent for translate, bits removed for posterize, threshold
  // span for solarize. Unused by autocontrast/equalize.
  double max_val = 0.0;
};

// rotate 30, shear 0.3, translate 1/3, posterize 4, solarize 1, autocontrast, equalize.
const std::vector<AugmentOp>& default_operations();

// SampLevel / 10 * max_val, unsigned.
double aug_level_from_sample(const AugmentOp& op, double samp_level);
// Level with SampLevel ~ U(0.1, severity); random sign for signed kinds.
double sample_aug_level(const AugmentOp& op, double severity, Rng& rng);

// Geometric kinds resample bilinearly around the image center with zero
// padding; translate shifts by level * extent pixels; posterize keeps
// ceil(8 - level) bits; solarize inverts pixels above 1 - level / max_val.
// The result is clamped to [0, 1].
Image apply_op(const Image& img, const AugmentOp& op, double level);

struct AugMixConfig {
  int n_chains = 3;
  double severity = 3.0;
  double mix_concentration = 1.0;
  int max_chain_len = 3;
  std::uint64_t rng_seed = 0;
  std::vector<AugmentOp> operations = default_operations();

  void validate() const;
};

struct ChainStep {
  AugmentOp op;
  double level = 0.0;
};

// Every random draw of one AugMix call: chain weights, operation chains and
// the skip-connection weight m.
struct AugMixPlan {
  std::vector<double> weights;
  std::vector<std::vector<ChainStep>> chains;
  double m = 1.0;
};

AugMixPlan sample_augmix_plan(const AugMixConfig& cfg, Rng& rng);

// m * x + (1 - m) * sum_i b_i * chain_i(x), evaluated as
// x + (1 - m) * sum_i b_i * (chain_i(x) - x) so that identity chains or m = 1
// reproduce x exactly.
Image apply_augmix_plan(const Image& img, const AugMixPlan& plan);

Image augmix(const Image& img, const AugMixConfig& cfg, Rng& rng);

}  // namespace fam
