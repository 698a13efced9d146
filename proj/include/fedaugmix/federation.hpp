#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedaugmix/augment.hpp"
#include "fedaugmix/data_io.hpp"
#include "fedaugmix/losses.hpp"
#include "fedaugmix/model.hpp"
#include "fedaugmix/rng.hpp"

namespace fam {

enum class Algorithm { fedavg, fedprox };

Algorithm parse_algorithm(const std::string& name);
const char* algorithm_name(Algorithm a);

struct FederationConfig {
  std::size_t clients = 100;        // K
  double participation = 0.1;       // C
  std::size_t rounds = 1;           // T
  std::size_t local_epochs = 1;     // E
  double eta = 0.05;
  double alpha_part = 0.1;
  std::size_t batch_size = 10;
  Algorithm algorithm = Algorithm::fedavg;
  double mu_prox = 0.01;
  bool defense_enabled = false;
  AugMixConfig aug_cfg;
  LossConfig loss_cfg;
  ModelSpec model{{784, 128, 10}, Activation::relu, 0};
  std::uint64_t seed = 0;
  // Serializes client updates in ascending id order.
  bool deterministic = true;

  void validate() const;
};

// One client's shard. Images and labels are local copies; train/test hold
// positions into them, `source` the positions in the original dataset.
struct ClientDataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> source;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t size() const { return images.size(); }
};

inline constexpr double kTestFraction = 0.25;

// make_rng stream ids: {seed, partition}, {seed, selection, round},
// {seed, client, round, id}.
inline constexpr std::uint64_t kPartitionStream = 1;
inline constexpr std::uint64_t kSelectionStream = 2;
inline constexpr std::uint64_t kClientStream = 3;

// Per-class Dirichlet(alpha_part) apportioning across K clients. Empty clients
// receive one sample taken from the currently largest client. Each client is
// then split 75/25 into train/test (at least one training sample).
std::vector<ClientDataset> dirichlet_partition(const LabeledDataset& data, std::size_t clients,
                                               double alpha_part, Rng& rng);

// max(ceil(C * K), 1) distinct ids, ascending.
std::vector<std::size_t> sample_clients(std::size_t clients, double participation, Rng& rng);

struct StepOutcome {
  double loss = 0.0;
  double l_c = 0.0;
  double d_js = 0.0;
  double lambda = 0.0;
};

// One gradient-descent step of the local objective on a batch: plain
// cross-entropy, or with the defense enabled the cross-entropy plus the
// lambda-weighted JS consistency over two fresh AugMix views per image.
// FedProx adds (mu/2)||w - anchor||^2.
StepOutcome local_step(ModelState& model, std::span<const Image> images, std::span<const std::size_t> labels,
                       const FederationConfig& cfg, LambdaState& lambda, Rng& rng,
                       const ModelState* prox_anchor = nullptr);

struct ClientUpdate {
  std::size_t client = 0;
  ModelState model;
  double mean_loss = 0.0;
  std::size_t train_size = 0;
};

// E epochs of shuffled mini-batch steps starting from the global model.
ClientUpdate client_update(std::size_t client, const ModelState& global, const ClientDataset& data,
                           const FederationConfig& cfg, LambdaState& lambda, Rng& rng);

// Repeats `epochs` local steps on one fixed batch, as a victim client whose
// update an attacker observes. Starts from a fresh lambda schedule.
ModelState replay_update(const ModelState& model, std::span<const Image> images,
                         std::span<const std::size_t> labels, const FederationConfig& cfg, std::size_t epochs,
                         Rng& rng);

// Parameter-wise sum of (n_k / n) * w_k.
ModelState aggregate(const std::vector<std::pair<std::size_t, ModelState>>& updates,
                     std::span<const std::size_t> sizes);

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> client_ids;
  std::vector<double> client_losses;
  double mean_train_loss = 0.0;
  double test_accuracy = 0.0;
  double seconds = 0.0;
};

struct FederationResult {
  ModelState initial;
  ModelState final_model;
  std::vector<RoundRecord> rounds;
  std::vector<ClientDataset> clients;
};

FederationResult run_federation(const FederationConfig& cfg, const LabeledDataset& data);

// Union of the clients' test splits.
std::pair<std::vector<Image>, std::vector<std::size_t>> pooled_test_set(const std::vector<ClientDataset>& clients);

// round,client_ids,mean_train_loss,test_accuracy,seconds. Client ids are
// ';'-joined. Deterministic logs write 0 seconds so reruns are byte-identical.
std::string round_log_csv(const std::vector<RoundRecord>& rounds, bool deterministic);

}  // namespace fam
