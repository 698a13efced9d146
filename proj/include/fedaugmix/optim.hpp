#pragma once

#include <cstddef>
#include <vector>

#include "fedaugmix/tensor.hpp"

namespace fam {

struct AdamConfig {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment buffers, one per parameter, plus the step count.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;
};

// One bias-corrected Adam update. Parameters are replaced with detached
// tensors; empty moment buffers are sized on first use.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace fam
