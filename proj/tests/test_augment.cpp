#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>

#include "fedaugmix/augment.hpp"
#include "fedaugmix/errors.hpp"

using namespace fam;

namespace {

Image random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w, c);
  for (auto& p : img.pixels) p = u(rng);
  return img;
}

AugmentOp op_of(AugKind kind) {
  for (const auto& op : default_operations()) {
    if (op.kind == kind) return op;
  }
  throw std::logic_error("missing op");
}

}  // namespace

TEST_CASE("operation table") {
  CHECK(default_operations().size() == 9);
  CHECK(op_of(AugKind::rotate).max_val == 30.0);
  CHECK(op_of(AugKind::shear_x).max_val == 0.3);
  CHECK(op_of(AugKind::translate_y).max_val == doctest::Approx(1.0 / 3.0));
  CHECK(op_of(AugKind::posterize).max_val == 4.0);
  CHECK(op_of(AugKind::solarize).max_val == 1.0);
  CHECK_FALSE(takes_level(AugKind::equalize));
  CHECK(is_signed(AugKind::translate_x));
  CHECK_FALSE(is_signed(AugKind::posterize));
  for (const auto& op : default_operations()) CHECK(parse_aug_kind(aug_kind_name(op.kind)) == op.kind);
  CHECK_THROWS_AS(parse_aug_kind("brightness"), ConfigError);
}

TEST_CASE("sample_aug_level examples") {
  const auto rot = op_of(AugKind::rotate);
  CHECK(aug_level_from_sample(rot, 5.0) == 15.0);

  Rng rng = make_rng({1});
  bool saw_negative = false, saw_positive = false;
  for (int i = 0; i < 5000; ++i) {
    const double l = sample_aug_level(rot, 10.0, rng);
    CHECK(std::fabs(l) <= 30.0);
    saw_negative |= l < 0;
    saw_positive |= l > 0;
  }
  CHECK(saw_negative);
  CHECK(saw_positive);

  for (int i = 0; i < 5000; ++i) {
    const double l = std::fabs(sample_aug_level(rot, 0.2, rng));
    CHECK(l >= 0.3 - 1e-12);
    CHECK(l <= 0.6 + 1e-12);
  }
  const auto post = op_of(AugKind::posterize);
  for (int i = 0; i < 1000; ++i) CHECK(sample_aug_level(post, 3.0, rng) > 0.0);

  CHECK_THROWS_AS(sample_aug_level(rot, 0.1, rng), ConfigError);
  CHECK_THROWS_AS(sample_aug_level(rot, 0.05, rng), ConfigError);
}

TEST_CASE("apply_op examples") {
  Rng rng = make_rng({2});
  const Image img = random_image(9, 12, 1, rng);
  CHECK(apply_op(img, op_of(AugKind::rotate), 0.0) == img);
  CHECK(apply_op(img, op_of(AugKind::shear_x), 0.0) == img);
  CHECK(apply_op(img, op_of(AugKind::translate_y), 0.0) == img);

  const Image shifted = apply_op(img, op_of(AugKind::translate_x), 1.0);  // one full width
  for (double p : shifted.pixels) CHECK(p == 0.0);
  const Image shifted_back = apply_op(img, op_of(AugKind::translate_x), -1.0);
  for (double p : shifted_back.pixels) CHECK(p == 0.0);

  // An integer shift moves columns exactly.
  const Image one = apply_op(img, op_of(AugKind::translate_x), 3.0 / 12.0);
  for (std::size_t y = 0; y < 9; ++y) {
    for (std::size_t x = 0; x < 12; ++x) CHECK(one.at(y, x) == doctest::Approx(x >= 3 ? img.at(y, x - 3) : 0.0));
  }

  // 1-bit posterize on a ramp leaves two values.
  Image ramp(1, 256, 1);
  for (std::size_t x = 0; x < 256; ++x) ramp.at(0, x) = static_cast<double>(x) / 255.0;
  const Image poster = apply_op(ramp, op_of(AugKind::posterize), 7.0);
  const std::set<double> values(poster.pixels.begin(), poster.pixels.end());
  CHECK(values.size() == 2);
  CHECK(values.count(0.0) == 1);
  CHECK(values.count(128.0 / 255.0) == 1);
  // Level 0 keeps all 8 bits: byte-aligned inputs are unchanged.
  CHECK(apply_op(ramp, op_of(AugKind::posterize), 0.0) == ramp);

  Image sol(1, 3, 1, std::vector<double>{0.2, 0.6, 0.9});
  const Image s = apply_op(sol, op_of(AugKind::solarize), 0.5);  // threshold 0.5
  CHECK(s.pixels[0] == 0.2);
  CHECK(s.pixels[1] == doctest::Approx(0.4));
  CHECK(s.pixels[2] == doctest::Approx(0.1));

  Image dim(1, 3, 1, std::vector<double>{0.2, 0.3, 0.4});
  const Image ac = apply_op(dim, op_of(AugKind::autocontrast), 0.0);
  CHECK(ac.pixels[0] == 0.0);
  CHECK(ac.pixels[1] == doctest::Approx(0.5));
  CHECK(ac.pixels[2] == 1.0);

  const Image eq = apply_op(dim, op_of(AugKind::equalize), 0.0);
  CHECK(eq.pixels[0] == 0.0);
  CHECK(eq.pixels[1] == doctest::Approx(128.0 / 255.0));
  CHECK(eq.pixels[2] == 1.0);

  const Image flat(4, 4, 1, 0.3);
  CHECK(apply_op(flat, op_of(AugKind::equalize), 0.0) == flat);
  CHECK(apply_op(flat, op_of(AugKind::autocontrast), 0.0) == flat);

  // 90 degree rotation of a square image maps pixels exactly.
  const Image sq = random_image(5, 5, 1, rng);
  const Image r90 = apply_op(sq, op_of(AugKind::rotate), 90.0);
  const Image r180 = apply_op(r90, op_of(AugKind::rotate), 90.0);
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 5; ++x) CHECK(r180.at(y, x) == doctest::Approx(sq.at(4 - y, 4 - x)).epsilon(1e-9));
  }

  CHECK_THROWS_AS(apply_op(Image(), op_of(AugKind::rotate), 1.0), DimensionError);
}

TEST_CASE("apply_op keeps pixels in range for every kind and channel count") {
  Rng rng = make_rng({3});
  for (std::size_t ch : {1u, 3u}) {
    for (const auto& op : default_operations()) {
      for (int i = 0; i < 20; ++i) {
        const Image img = random_image(8, 8, ch, rng);
        const Image out = apply_op(img, op, takes_level(op.kind) ? sample_aug_level(op, 10.0, rng) : 0.0);
        CHECK(out.same_shape(img));
        for (double p : out.pixels) {
          CHECK(p >= 0.0);
          CHECK(p <= 1.0);
        }
      }
    }
  }
}

TEST_CASE("augmix examples") {
  Rng rng = make_rng({4});
  const Image img = random_image(10, 10, 1, rng);
  AugMixConfig cfg;

  AugMixPlan plan = sample_augmix_plan(cfg, rng);
  CHECK(plan.weights.size() == 3);
  CHECK(std::fabs(std::accumulate(plan.weights.begin(), plan.weights.end(), 0.0) - 1.0) <= 1e-12);
  for (const auto& chain : plan.chains) {
    CHECK(chain.size() >= 1);
    CHECK(chain.size() <= 3);
  }
  plan.m = 1.0;
  CHECK(apply_augmix_plan(img, plan) == img);

  AugMixPlan identity = sample_augmix_plan(cfg, rng);
  for (auto& chain : identity.chains) chain.clear();
  CHECK(apply_augmix_plan(img, identity) == img);

  // m = 0 with a single chain returns that chain's output.
  AugMixPlan single{{1.0}, {{{op_of(AugKind::solarize), 0.5}}}, 0.0};
  CHECK(apply_augmix_plan(img, single) == apply_op(img, op_of(AugKind::solarize), 0.5));

  // Skip connection against a directly computed convex combination.
  AugMixPlan two{{0.25, 0.75}, {{{op_of(AugKind::rotate), 10.0}}, {{op_of(AugKind::posterize), 2.0}}}, 0.4};
  const Image a = apply_op(img, op_of(AugKind::rotate), 10.0);
  const Image b = apply_op(img, op_of(AugKind::posterize), 2.0);
  const Image mixed = apply_augmix_plan(img, two);
  for (std::size_t p = 0; p < img.size(); ++p) {
    const double expect = 0.4 * img.pixels[p] + 0.6 * (0.25 * a.pixels[p] + 0.75 * b.pixels[p]);
    CHECK(mixed.pixels[p] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(apply_augmix_plan(img, AugMixPlan{{1.0}, {}, 0.5}), DimensionError);
}

TEST_CASE("augmix range, determinism and independence") {
  Rng rng = make_rng({5});
  AugMixConfig cfg;
  cfg.severity = 10.0;
  for (int i = 0; i < 1000; ++i) {
    const Image img = random_image(6, 6, i % 2 ? 3 : 1, rng);
    for (double p : augmix(img, cfg, rng).pixels) {
      REQUIRE(p >= 0.0);
      REQUIRE(p <= 1.0);
    }
  }
  const Image img = random_image(8, 8, 1, rng);
  Rng r1 = make_rng({9}), r2 = make_rng({9});
  CHECK(augmix(img, cfg, r1) == augmix(img, cfg, r2));
  CHECK(augmix(img, cfg, r1) != augmix(img, cfg, r1));
}

TEST_CASE("mixing distributions") {
  Rng rng = make_rng({6});
  double total = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) total += sample_beta(1.0, 1.0, rng);
  CHECK(std::fabs(total / draws - 0.5) <= 0.01);
  for (int i = 0; i < 1000; ++i) {
    const auto w = sample_dirichlet(i % 2 ? 1.0 : 0.1, 4, rng);
    double s = 0.0;
    for (double v : w) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("augmix config validation") {
  AugMixConfig cfg;
  cfg.severity = 0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.severity = 10.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugMixConfig{};
  cfg.max_chain_len = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugMixConfig{};
  cfg.n_chains = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugMixConfig{};
  cfg.operations.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
