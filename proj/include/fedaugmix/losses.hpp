#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedaugmix/tensor.hpp"

namespace fam {

// Floor applied to probabilities before taking logarithms.
inline constexpr double kProbFloor = 1e-12;

// Mean over the batch of -log p[y]; `probs` is [B x classes].
Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);

// Sum p_i log(p_i / q_i) with 0 log 0 = 0 and q floored at kProbFloor.
double kl_div(std::span<const double> p, std::span<const double> q);

// Three-way Jensen-Shannon divergence against the arithmetic mean
// q = (p1 + p2 + p3) / 3, averaged over rows when given [B x classes] batches.
// Natural log, so the value lies in [0, ln 3].
Tensor js_div3(const Tensor& p1, const Tensor& p2, const Tensor& p3);

// cross_entropy(p_orig, y) + lambda * js_div3(p_orig, p_aug1, p_aug2).
Tensor combined_loss(const Tensor& p_orig, const Tensor& p_aug1, const Tensor& p_aug2,
                     std::span<const std::size_t> labels, double lambda);

struct LossConfig {
  double lambda_base = 50.0;
  double scale = 5e4;
  double large_val = 5e3;
  bool scaling_enabled = true;
  // Once raised, lambda keeps LargeVal; with sticky = false it falls back to
  // lambda_base whenever the trigger condition fails.
  bool sticky = true;

  void validate() const;
};

struct LambdaState {
  double current_lambda = 50.0;
  bool triggered = false;
};

LambdaState initial_lambda(const LossConfig& cfg);

// Loss-scaling schedule: lambda jumps to large_val while the classification
// loss exceeds scale * divergence.
LambdaState update_lambda(const LambdaState& state, const LossConfig& cfg, double l_c, double d_js);

}  // namespace fam
