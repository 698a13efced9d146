#include "fedaugmix/losses.hpp"

#include <cmath>

#include "fedaugmix/errors.hpp"

namespace fam {

namespace {

std::size_t class_axis(const Tensor& p) { return p.shape().back(); }

Tensor plogp_minus(const Tensor& p, const Tensor& log_q) {
  return sum(mul(p, sub(log(clamp(p, kProbFloor, 1.0)), log_q)));
}

}  // namespace

Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.rank() != 2 || probs.shape()[0] != labels.size()) {
    throw DimensionError("cross_entropy: probabilities " + shape_str(probs.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = probs.shape()[0], classes = probs.shape()[1];
  std::vector<double> onehot(batch * classes, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) {
      throw DimensionError("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    }
    onehot[i * classes + labels[i]] = 1.0;
  }
  const Tensor picked = mul(log(clamp(probs, kProbFloor, 1.0)), Tensor(probs.shape(), std::move(onehot)));
  return scalar_mul(sum(picked), -1.0 / static_cast<double>(batch));
}

double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("kl_div: lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
  }
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    d += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kProbFloor)));
  }
  return d;
}

Tensor js_div3(const Tensor& p1, const Tensor& p2, const Tensor& p3) {
  if (p1.shape() != p2.shape() || p1.shape() != p3.shape()) {
    throw DimensionError("js_div3: shapes " + shape_str(p1.shape()) + ", " + shape_str(p2.shape()) +
                         ", " + shape_str(p3.shape()));
  }
  const double rows = static_cast<double>(p1.numel() / class_axis(p1));
  // q = p1 + ((p2 - p1) + (p3 - p1)) / 3 is the arithmetic mean, and equals p1
  // bit-for-bit when the three inputs coincide.
  const Tensor q = add(p1, scalar_mul(add(sub(p2, p1), sub(p3, p1)), 1.0 / 3.0));
  const Tensor log_q = log(clamp(q, kProbFloor, 1.0));
  const Tensor total = add(add(plogp_minus(p1, log_q), plogp_minus(p2, log_q)), plogp_minus(p3, log_q));
  return scalar_mul(total, 1.0 / (3.0 * rows));
}

Tensor combined_loss(const Tensor& p_orig, const Tensor& p_aug1, const Tensor& p_aug2,
                     std::span<const std::size_t> labels, double lambda) {
  const Tensor ce = cross_entropy(p_orig, labels);
  if (lambda == 0.0) return ce;
  return add(ce, scalar_mul(js_div3(p_orig, p_aug1, p_aug2), lambda));
}

void LossConfig::validate() const {
  if (!(lambda_base > 0.0 && scale > 0.0 && large_val > 0.0)) {
    throw ConfigError("loss: lambda_base, scale and large_val must be positive");
  }
}

LambdaState initial_lambda(const LossConfig& cfg) { return {cfg.lambda_base, false}; }

LambdaState update_lambda(const LambdaState& state, const LossConfig& cfg, double l_c, double d_js) {
  if (!cfg.scaling_enabled) return {cfg.lambda_base, state.triggered};
  if (l_c > cfg.scale * d_js) return {cfg.large_val, true};
  if (cfg.sticky) return state;
  return {cfg.lambda_base, state.triggered};
}

}  // namespace fam
