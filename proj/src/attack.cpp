#include "fedaugmix/attack.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "fedaugmix/errors.hpp"
#include "fedaugmix/losses.hpp"
#include "fedaugmix/optim.hpp"

namespace fam {

MatchObjective parse_objective(const std::string& name) {
  if (name == "cosine") return MatchObjective::cosine;
  if (name == "l2") return MatchObjective::l2;
  throw ConfigError("unknown attack objective '" + name + "' (expected cosine or l2)");
}

const char* objective_name(MatchObjective o) { return o == MatchObjective::cosine ? "cosine" : "l2"; }

void AttackConfig::validate() const {
  if (iterations < 1) throw ConfigError("attack: iterations must be at least 1");
  if (!(lr >= 0.0)) throw ConfigError("attack: lr must be non-negative");
  if (!(tv_coeff >= 0.0)) throw ConfigError("attack: tv_coeff must be non-negative");
  if (batch_size < 1) throw ConfigError("attack: batch_size must be at least 1");
  if (!labels_known) throw ConfigError("attack: label inference is not supported; set labels_known = true");
}

std::vector<Tensor> surrogate_gradient(const ModelState& before, const ModelState& after, double eta) {
  if (!(eta > 0.0)) throw ConfigError("surrogate_gradient: eta must be positive");
  if (!same_geometry(before, after)) throw DimensionError("surrogate_gradient: model shapes differ");
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < before.params.size(); ++i) {
    const auto b = before.params[i].data();
    const auto a = after.params[i].data();
    std::vector<double> g(b.size());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = (b[j] - a[j]) / eta;
    grads.emplace_back(before.params[i].shape(), std::move(g));
  }
  return grads;
}

namespace {

// [H*W*C x edges] matrix whose columns difference neighbouring pixels.
const Tensor& difference_operator(const ImageGeometry& geo) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Tensor> cache;
  std::lock_guard lock(mu);
  auto key = std::make_tuple(geo.height, geo.width, geo.channels);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const std::size_t h = geo.height, w = geo.width, c = geo.channels;
  const std::size_t edges = c * (h * (w - 1) + (h - 1) * w);
  const std::size_t d = geo.size();
  if (edges == 0) return cache.emplace(key, Tensor::zeros({d, 1})).first->second;
  std::vector<double> m(d * edges, 0.0);
  std::size_t e = 0;
  auto idx = [&](std::size_t y, std::size_t x, std::size_t ch) { return (y * w + x) * c + ch; };
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (x + 1 < w) {
          m[idx(y, x + 1, ch) * edges + e] = 1.0;
          m[idx(y, x, ch) * edges + e] = -1.0;
          ++e;
        }
        if (y + 1 < h) {
          m[idx(y + 1, x, ch) * edges + e] = 1.0;
          m[idx(y, x, ch) * edges + e] = -1.0;
          ++e;
        }
      }
    }
  }
  return cache.emplace(key, Tensor({d, edges}, std::move(m))).first->second;
}

Tensor accumulate(const std::vector<Tensor>& terms) {
  Tensor total;
  for (const auto& t : terms) total = total.defined() ? add(total, t) : t;
  return total;
}

}  // namespace

Tensor total_variation(const Tensor& batch, const ImageGeometry& geometry) {
  if (batch.rank() != 2 || batch.shape()[1] != geometry.size()) {
    throw DimensionError("total_variation: batch " + shape_str(batch.shape()) + " does not match image size " +
                         std::to_string(geometry.size()));
  }
  return sum(abs(matmul(batch, difference_operator(geometry))));
}

Tensor total_variation(const Image& img) {
  const Image* one = &img;
  return total_variation(to_batch(std::span<const Image>(one, 1)), {img.height, img.width, img.channels});
}

Tensor attack_objective(Graph& graph, const Tensor& dummy, std::span<const std::size_t> labels,
                        const std::vector<Tensor>& target_grad, const ModelState& model, const AttackConfig& cfg,
                        const ImageGeometry& geometry) {
  if (!dummy.attached() || dummy.graph() != &graph) {
    throw UnreachableError("attack_objective: dummy batch must be recorded in the graph");
  }
  if (target_grad.size() != model.params.size()) {
    throw DimensionError("attack_objective: target gradient has " + std::to_string(target_grad.size()) +
                         " tensors, model has " + std::to_string(model.params.size()));
  }
  const ModelState w = attach(graph, model);
  const Tensor loss = cross_entropy(forward(w, dummy), labels);
  const auto grads = backward(graph, loss, w.params, /*create_graph=*/true);

  double target_sq = 0.0;
  for (const auto& t : target_grad)
    for (double v : t.data()) target_sq += v * v;

  Tensor objective;
  std::vector<Tensor> dots, norms;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != target_grad[i].shape()) {
      throw DimensionError("attack_objective: target gradient " + std::to_string(i) + " has shape " +
                           shape_str(target_grad[i].shape()) + ", expected " + shape_str(grads[i].shape()));
    }
    dots.push_back(sum(mul(grads[i], target_grad[i])));
    norms.push_back(sum(mul(grads[i], grads[i])));
  }
  const Tensor dummy_sq = accumulate(norms);
  const bool cosine_ok = cfg.objective == MatchObjective::cosine && target_sq > 0.0 && dummy_sq.item() > 0.0;
  if (cfg.objective == MatchObjective::cosine && !cosine_ok) {
    std::cerr << "warning: zero-norm gradient, cosine objective undefined; using l2\n";
  }
  if (cosine_ok) {
    const Tensor cos = scalar_mul(div(accumulate(dots), sqrt(dummy_sq)), 1.0 / std::sqrt(target_sq));
    objective = scalar_add(scalar_mul(cos, -1.0), 1.0);
  } else {
    std::vector<Tensor> sq;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const Tensor d = sub(grads[i], target_grad[i]);
      sq.push_back(sum(mul(d, d)));
    }
    objective = accumulate(sq);
  }
  if (cfg.tv_coeff > 0.0) objective = add(objective, scalar_mul(total_variation(dummy, geometry), cfg.tv_coeff));
  return objective;
}

AttackResult run_inversion(const std::vector<Tensor>& target_grad, std::span<const std::size_t> labels,
                           const ModelState& model, const AttackConfig& cfg, const ImageGeometry& geometry,
                           Rng& rng, const std::vector<Image>* truth) {
  cfg.validate();
  if (geometry.size() != model.spec.input_dim()) {
    throw DimensionError("run_inversion: image geometry does not match the model input");
  }
  const std::size_t batch = labels.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> init(batch * geometry.size());
  for (auto& v : init) v = u(rng);
  std::vector<Tensor> dummy = {Tensor({batch, geometry.size()}, std::move(init))};

  AttackResult result;
  result.trajectory.reserve(cfg.iterations);
  AdamState adam;
  const AdamConfig adam_cfg{cfg.lr};
  const ModelState frozen = detach(model);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Graph graph;
    const Tensor x = graph.leaf(dummy[0]);
    const Tensor objective = attack_objective(graph, x, labels, target_grad, frozen, cfg, geometry);
    const auto grad = backward(graph, objective, {x});
    result.trajectory.push_back(objective.item());
    adam_step(dummy, grad, adam, adam_cfg);
    dummy[0] = clamp(dummy[0], 0.0, 1.0);
  }
  result.final_objective = result.trajectory.back();
  result.reconstructed = from_batch(dummy[0], geometry.height, geometry.width, geometry.channels);
  if (truth) result.permutation = match_min_mse(result.reconstructed, *truth);
  return result;
}

std::vector<std::size_t> match_min_mse(const std::vector<Image>& candidates, const std::vector<Image>& truth) {
  if (candidates.size() != truth.size()) throw DimensionError("match_min_mse: batch sizes differ");
  const std::size_t n = truth.size();
  if (n > 8) throw DimensionError("match_min_mse: exhaustive matching supports at most 8 images");
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i][j] = mse(truth[i], candidates[j]);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  double best_cost = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i][perm[i]];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<ImagePairScore> score_reconstruction(const AttackResult& result, const std::vector<Image>& truth) {
  const auto perm = result.permutation.empty() ? match_min_mse(result.reconstructed, truth) : result.permutation;
  std::vector<ImagePairScore> scores;
  for (std::size_t i = 0; i < truth.size(); ++i) scores.push_back(score_pair(truth[i], result.reconstructed[perm[i]]));
  return scores;
}

}  // namespace fam
