#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedaugmix/attack.hpp"
#include "fedaugmix/data_io.hpp"
#include "fedaugmix/federation.hpp"

namespace fam {

struct DataConfig {
  std::string source = "synth";  // synth | idx
  std::string images;
  std::string labels;
  std::size_t count = 500;  // 0 keeps every idx record
  std::size_t side = 16;    // synth only
  std::size_t classes = 10;
  std::size_t downscale = 1;
};

// Severity 0 disables the defense; any other value enables it at that severity.
struct ExperimentConfig {
  FederationConfig federation;
  AttackConfig attack;
  DataConfig data;
  std::vector<double> severities = {0, 2, 4, 6, 8, 10};
  std::vector<std::string> stages = {"untrained", "convergent"};
  std::size_t attacks_per_cell = 1;
  std::string output_dir = "results";

  void validate() const;
};

// Flat "key = value" text. "[section]" lines prefix later keys with
// "section."; '#' starts a comment. Lists are comma-separated. Unknown keys
// raise ConfigError naming all of them.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every key, one per line, in a fixed order. parse_config inverts it.
std::string serialize_config(const ExperimentConfig& cfg);
std::vector<std::string> config_keys();

LabeledDataset load_experiment_data(const ExperimentConfig& cfg);

// Federation config for training or replaying at `severity`.
FederationConfig with_severity(const FederationConfig& cfg, double severity);

std::filesystem::path snapshot_path(const std::filesystem::path& out_dir, const std::string& stage);

struct TrainOutcome {
  FederationResult result;
  double final_accuracy = 0.0;
};

// Runs the federation and writes rounds.csv, model_untrained.famb,
// model_convergent.famb, train_summary.json and manifest.json.
TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct AttackRecord {
  std::size_t client = 0;
  std::string stage;
  double severity = 0.0;
  std::size_t iterations = 0;
  double final_objective = 0.0;
  std::vector<std::size_t> batch;  // dataset indices of the attacked images
  std::vector<ImagePairScore> per_image;
};

struct AttackCell {
  std::string stage;
  double severity = 0.0;
  double accuracy = 0.0;  // of the attacked snapshot on the pooled test split
  std::vector<AttackRecord> attacks;
};

// Victim ids shared by every cell: attacks_per_cell clients holding at least
// one full attack batch of training data.
std::vector<std::size_t> pick_victims(const ExperimentConfig& cfg, const std::vector<ClientDataset>& clients);

// The victim's first training batch under its seeded shuffle.
std::vector<std::size_t> victim_batch(const ExperimentConfig& cfg, const ClientDataset& client, std::size_t client_id);

// One attack on one victim against `model`, with the victim's update replayed
// at `severity`. Reconstructions are written to `dump_dir` when given.
AttackRecord attack_client(const ExperimentConfig& cfg, const ModelState& model, const std::string& stage,
                           double severity, const ClientDataset& client, std::size_t client_id,
                           const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

// Attacks every victim for one (stage, severity) cell and writes
// attack/<stage>_<protection>.json plus reconstruction images under out_dir.
AttackCell cmd_attack(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& stage,
                      double severity);

std::string attack_cell_json(const AttackCell& cell);
AttackCell parse_attack_cell(const std::string& json_text);

// Reads attack/*.json under results_dir; writes defense_report.csv,
// defense_report.json and tradeoff.csv. Returns the report cells.
std::vector<ReportCell> cmd_report(const std::filesystem::path& results_dir, std::ostream* warnings = nullptr);

// severity,accuracy,mean_mse,mean_ssim,mean_psnr,stage
std::string tradeoff_csv(const std::vector<AttackCell>& cells);

// client,train,test,class_0..class_{n-1}
std::string partition_csv(const std::vector<ClientDataset>& clients, std::size_t class_count);

}  // namespace fam
