#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedaugmix/image.hpp"
#include "fedaugmix/metrics.hpp"
#include "fedaugmix/model.hpp"
#include "fedaugmix/rng.hpp"
#include "fedaugmix/tensor.hpp"

namespace fam {

enum class MatchObjective { cosine, l2 };

MatchObjective parse_objective(const std::string& name);
const char* objective_name(MatchObjective o);

struct AttackConfig {
  std::size_t iterations = 2500;
  double lr = 0.1;
  double tv_coeff = 1e-6;
  std::size_t batch_size = 4;
  MatchObjective objective = MatchObjective::cosine;
  bool labels_known = true;
  std::size_t local_epochs_observed = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ImageGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
};

struct AttackResult {
  std::vector<Image> reconstructed;
  double final_objective = 0.0;
  std::vector<double> trajectory;
  // permutation[i] is the reconstruction matched to true image i; empty when
  // no ground truth was supplied.
  std::vector<std::size_t> permutation;
};

// The attacker's gradient estimate (before - after) / eta of an observed update.
std::vector<Tensor> surrogate_gradient(const ModelState& before, const ModelState& after, double eta);

// Anisotropic total variation summed over a [B x H*W*C] batch: absolute
// horizontal plus vertical neighbour differences per channel.
Tensor total_variation(const Tensor& batch, const ImageGeometry& geometry);
Tensor total_variation(const Image& img);

// Gradient-matching loss of dummy inputs against `target_grad`, with the
// attacker modelling plain cross-entropy. `dummy` must be a leaf (or
// descendant) of `graph`; the result stays differentiable w.r.t. it.
//   cosine: 1 - <g', g> / (|g'| |g|) over all parameters, plus tv_coeff * TV
//   l2:     |g' - g|^2 plus the same prior
// A zero-norm gradient falls back to the l2 form.
Tensor attack_objective(Graph& graph, const Tensor& dummy, std::span<const std::size_t> labels,
                        const std::vector<Tensor>& target_grad, const ModelState& model, const AttackConfig& cfg,
                        const ImageGeometry& geometry);

// Adam on uniformly initialized dummy pixels, clamped to [0, 1] after every
// step. With `truth` the reconstructions are matched to it by minimal MSE.
AttackResult run_inversion(const std::vector<Tensor>& target_grad, std::span<const std::size_t> labels,
                           const ModelState& model, const AttackConfig& cfg, const ImageGeometry& geometry,
                           Rng& rng, const std::vector<Image>* truth = nullptr);

// Assignment minimizing total MSE; result[i] indexes `candidates` for truth[i].
std::vector<std::size_t> match_min_mse(const std::vector<Image>& candidates, const std::vector<Image>& truth);

// Scores of matched reconstructions against the truth, in truth order.
std::vector<ImagePairScore> score_reconstruction(const AttackResult& result, const std::vector<Image>& truth);

}  // namespace fam
