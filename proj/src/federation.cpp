#include "fedaugmix/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include "fedaugmix/errors.hpp"
#include "fedaugmix/metrics.hpp"

namespace fam {

Algorithm parse_algorithm(const std::string& name) {
  if (name == "fedavg") return Algorithm::fedavg;
  if (name == "fedprox") return Algorithm::fedprox;
  throw ConfigError("unknown algorithm '" + name + "' (expected fedavg or fedprox)");
}

const char* algorithm_name(Algorithm a) { return a == Algorithm::fedavg ? "fedavg" : "fedprox"; }

void FederationConfig::validate() const {
  if (clients < 1) throw ConfigError("federation: K must be at least 1");
  if (!(participation > 0.0 && participation <= 1.0)) throw ConfigError("federation: C must lie in (0, 1]");
  if (rounds < 1) throw ConfigError("federation: T must be at least 1");
  if (local_epochs < 1) throw ConfigError("federation: E must be at least 1");
  if (!(eta >= 0.0)) throw ConfigError("federation: eta must be non-negative");
  if (!(alpha_part > 0.0)) throw ConfigError("federation: alpha_part must be positive");
  if (batch_size < 1) throw ConfigError("federation: batch_size must be at least 1");
  if (!(mu_prox >= 0.0)) throw ConfigError("federation: mu_prox must be non-negative");
  model.validate();
  if (defense_enabled) {
    aug_cfg.validate();
    loss_cfg.validate();
  }
}

std::vector<ClientDataset> dirichlet_partition(const LabeledDataset& data, std::size_t clients,
                                               double alpha_part, Rng& rng) {
  data.validate();
  if (clients < 1) throw ConfigError("partition: K must be at least 1");
  if (!(alpha_part > 0.0)) throw ConfigError("partition: alpha_part must be positive");
  if (data.size() < clients) {
    throw ConfigError("partition: dataset of " + std::to_string(data.size()) + " samples is smaller than K = " +
                      std::to_string(clients));
  }
  std::vector<std::vector<std::size_t>> by_class(data.class_count);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

  std::vector<std::vector<std::size_t>> owned(clients);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    const auto share = sample_dirichlet(alpha_part, clients, rng);
    const double n = static_cast<double>(members.size());
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < clients; ++k) {
      cumulative += share[k];
      std::size_t end = k + 1 == clients ? members.size()
                                         : std::min(members.size(), static_cast<std::size_t>(std::floor(cumulative * n)));
      end = std::max(end, begin);
      owned[k].insert(owned[k].end(), members.begin() + static_cast<long>(begin), members.begin() + static_cast<long>(end));
      begin = end;
    }
  }

  for (auto& shard : owned) {
    if (!shard.empty()) continue;
    auto largest = std::max_element(owned.begin(), owned.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    shard.push_back(largest->back());
    largest->pop_back();
  }

  std::vector<ClientDataset> out(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    auto& c = out[k];
    std::sort(owned[k].begin(), owned[k].end());
    c.source = owned[k];
    for (auto idx : c.source) {
      c.images.push_back(data.images[idx]);
      c.labels.push_back(data.labels[idx]);
    }
    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n = c.size();
    const std::size_t n_test = std::min(static_cast<std::size_t>(std::floor(kTestFraction * static_cast<double>(n) + 0.5)), n - 1);
    c.test.assign(order.begin(), order.begin() + static_cast<long>(n_test));
    c.train.assign(order.begin() + static_cast<long>(n_test), order.end());
    std::sort(c.test.begin(), c.test.end());
    std::sort(c.train.begin(), c.train.end());
  }
  return out;
}

std::vector<std::size_t> sample_clients(std::size_t clients, double participation, Rng& rng) {
  if (clients < 1 || !(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("sample_clients: need K >= 1 and C in (0, 1]");
  }
  // Guard against C*K landing a rounding error above an integer.
  const double target = std::ceil(participation * static_cast<double>(clients) - 1e-9);
  const std::size_t m = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(target, 1.0)), 1, clients);
  std::vector<std::size_t> ids(clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  std::sample(ids.begin(), ids.end(), std::back_inserter(picked), static_cast<long>(m), rng);
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

Tensor prox_penalty(const ModelState& attached, const ModelState& anchor, double mu) {
  Tensor total;
  for (std::size_t i = 0; i < attached.params.size(); ++i) {
    const Tensor d = sub(attached.params[i], anchor.params[i]);
    const Tensor sq = sum(mul(d, d));
    total = total.defined() ? add(total, sq) : sq;
  }
  return scalar_mul(total, mu / 2.0);
}

}  // namespace

StepOutcome local_step(ModelState& model, std::span<const Image> images, std::span<const std::size_t> labels,
                       const FederationConfig& cfg, LambdaState& lambda, Rng& rng, const ModelState* prox_anchor) {
  if (images.size() != labels.size() || images.empty()) {
    throw DimensionError("local_step: batch needs matching, non-empty images and labels");
  }
  Graph graph;
  const ModelState w = attach(graph, model);
  const Tensor x = to_batch(images);
  StepOutcome outcome;
  Tensor loss;
  if (cfg.defense_enabled) {
    std::vector<Image> view1, view2;
    view1.reserve(images.size());
    view2.reserve(images.size());
    for (const auto& img : images) {
      view1.push_back(augmix(img, cfg.aug_cfg, rng));
      view2.push_back(augmix(img, cfg.aug_cfg, rng));
    }
    const Tensor p_orig = forward(w, x);
    const Tensor p_aug1 = forward(w, to_batch(view1));
    const Tensor p_aug2 = forward(w, to_batch(view2));
    const Tensor ce = cross_entropy(p_orig, labels);
    const Tensor js = js_div3(p_orig, p_aug1, p_aug2);
    outcome.l_c = ce.item();
    outcome.d_js = js.item();
    lambda = update_lambda(lambda, cfg.loss_cfg, outcome.l_c, outcome.d_js);
    outcome.lambda = lambda.current_lambda;
    loss = add(ce, scalar_mul(js, lambda.current_lambda));
  } else {
    loss = cross_entropy(forward(w, x), labels);
    outcome.l_c = loss.item();
  }
  if (cfg.algorithm == Algorithm::fedprox && prox_anchor) loss = add(loss, prox_penalty(w, *prox_anchor, cfg.mu_prox));
  outcome.loss = loss.item();

  const auto grads = backward(graph, loss, w.params);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    std::vector<double> p = model.params[i].to_vector();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg.eta * g[j];
    model.params[i] = Tensor(model.params[i].shape(), std::move(p));
  }
  return outcome;
}

ClientUpdate client_update(std::size_t client, const ModelState& global, const ClientDataset& data,
                           const FederationConfig& cfg, LambdaState& lambda, Rng& rng) {
  if (!data.images.empty() && data.images.front().size() != global.spec.input_dim()) {
    throw DimensionError("client " + std::to_string(client) + ": image size " +
                         std::to_string(data.images.front().size()) + " does not match model input " +
                         std::to_string(global.spec.input_dim()));
  }
  ClientUpdate result{client, detach(global), 0.0, data.train.size()};
  std::vector<std::size_t> order = data.train;
  std::vector<Image> batch_images;
  std::vector<std::size_t> batch_labels;
  double loss_total = 0.0;
  std::size_t steps = 0;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch_images.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch_images.push_back(data.images[order[i]]);
        batch_labels.push_back(data.labels[order[i]]);
      }
      loss_total += local_step(result.model, batch_images, batch_labels, cfg, lambda, rng, &global).loss;
      ++steps;
    }
  }
  result.mean_loss = steps ? loss_total / static_cast<double>(steps) : 0.0;
  return result;
}

ModelState replay_update(const ModelState& model, std::span<const Image> images,
                         std::span<const std::size_t> labels, const FederationConfig& cfg, std::size_t epochs,
                         Rng& rng) {
  ModelState w = detach(model);
  LambdaState lambda = initial_lambda(cfg.loss_cfg);
  for (std::size_t e = 0; e < epochs; ++e) local_step(w, images, labels, cfg, lambda, rng, &model);
  return w;
}

ModelState aggregate(const std::vector<std::pair<std::size_t, ModelState>>& updates,
                     std::span<const std::size_t> sizes) {
  if (updates.empty()) throw DimensionError("aggregate: no client updates");
  if (sizes.size() != updates.size()) throw DimensionError("aggregate: sizes do not match updates");
  const ModelState& first = updates.front().second;
  double total = 0.0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (sizes[i] == 0) throw DimensionError("aggregate: client " + std::to_string(updates[i].first) + " has size 0");
    if (!same_geometry(first, updates[i].second)) {
      throw DimensionError("aggregate: client " + std::to_string(updates[i].first) +
                           " has parameters shaped unlike client " + std::to_string(updates.front().first));
    }
    total += static_cast<double>(sizes[i]);
  }
  ModelState out{first.spec, {}};
  for (std::size_t p = 0; p < first.params.size(); ++p) {
    const std::size_t n = first.params[p].numel();
    std::vector<double> acc(n, 0.0), lo(n, INFINITY), hi(n, -INFINITY);
    for (std::size_t i = 0; i < updates.size(); ++i) {
      const double weight = static_cast<double>(sizes[i]) / total;
      const auto v = updates[i].second.params[p].data();
      for (std::size_t j = 0; j < n; ++j) {
        acc[j] += weight * v[j];
        lo[j] = std::min(lo[j], v[j]);
        hi[j] = std::max(hi[j], v[j]);
      }
    }
    // Rounding can leave the convex hull by an ulp.
    for (std::size_t j = 0; j < n; ++j) acc[j] = std::clamp(acc[j], lo[j], hi[j]);
    out.params.emplace_back(first.params[p].shape(), std::move(acc));
  }
  return out;
}

std::pair<std::vector<Image>, std::vector<std::size_t>> pooled_test_set(const std::vector<ClientDataset>& clients) {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  for (const auto& c : clients) {
    for (auto i : c.test) {
      images.push_back(c.images[i]);
      labels.push_back(c.labels[i]);
    }
  }
  return {std::move(images), std::move(labels)};
}

FederationResult run_federation(const FederationConfig& cfg, const LabeledDataset& data) {
  cfg.validate();
  if (!data.images.empty() && data.images.front().size() != cfg.model.input_dim()) {
    throw ConfigError("model input dimension " + std::to_string(cfg.model.input_dim()) +
                      " does not match image size " + std::to_string(data.images.front().size()));
  }
  FederationResult result;
  Rng part_rng = make_rng({cfg.seed, kPartitionStream});
  result.clients = dirichlet_partition(data, cfg.clients, cfg.alpha_part, part_rng);
  result.initial = init_model(cfg.model);
  ModelState global = result.initial;
  const auto [test_images, test_labels] = pooled_test_set(result.clients);
  std::vector<LambdaState> lambdas(cfg.clients, initial_lambda(cfg.loss_cfg));

  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    Rng select_rng = make_rng({cfg.seed, kSelectionStream, t});
    const auto ids = sample_clients(cfg.clients, cfg.participation, select_rng);

    auto run_client = [&](std::size_t k) {
      Rng rng = make_rng({cfg.seed, kClientStream, t, k});
      return client_update(k, global, result.clients[k], cfg, lambdas[k], rng);
    };
    std::vector<ClientUpdate> updates;
    if (cfg.deterministic) {
      for (auto k : ids) updates.push_back(run_client(k));
    } else {
      std::vector<std::future<ClientUpdate>> pending;
      for (auto k : ids) pending.push_back(std::async(std::launch::async, run_client, k));
      for (auto& f : pending) updates.push_back(f.get());
    }

    std::vector<std::pair<std::size_t, ModelState>> states;
    std::vector<std::size_t> sizes;
    RoundRecord record;
    record.round = t;
    record.client_ids = ids;
    for (auto& u : updates) {
      record.client_losses.push_back(u.mean_loss);
      sizes.push_back(u.train_size);
      states.emplace_back(u.client, std::move(u.model));
    }
    global = aggregate(states, sizes);
    record.mean_train_loss =
        std::accumulate(record.client_losses.begin(), record.client_losses.end(), 0.0) /
        static_cast<double>(record.client_losses.size());
    record.test_accuracy = test_images.empty() ? 0.0 : accuracy(global, test_images, test_labels);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.rounds.push_back(std::move(record));
  }
  result.final_model = global;
  return result;
}

std::string round_log_csv(const std::vector<RoundRecord>& rounds, bool deterministic) {
  std::ostringstream os;
  os << "round,client_ids,mean_train_loss,test_accuracy,seconds\n";
  for (const auto& r : rounds) {
    os << r.round << ',';
    for (std::size_t i = 0; i < r.client_ids.size(); ++i) os << (i ? ";" : "") << r.client_ids[i];
    os << ',' << format_number(r.mean_train_loss) << ',' << format_number(r.test_accuracy) << ','
       << (deterministic ? std::string("0") : format_number(r.seconds)) << '\n';
  }
  return os.str();
}

}  // namespace fam
