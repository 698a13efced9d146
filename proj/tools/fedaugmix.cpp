// fedaugmix: train, attack, report and partition-inspect subcommands.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fedaugmix/experiment.hpp"
#include "fedaugmix/metrics.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file");
  cmd->add_option("--seed", c.seed, "overrides federation, model-init and attack seeds");
  cmd->add_flag("--deterministic", c.deterministic, "serialize clients for bit-reproducible runs");
  cmd->add_option("--out", c.out, "output directory (overrides experiment.output_dir)");
}

fam::ExperimentConfig resolve(const Common& c) {
  fam::ExperimentConfig cfg = c.config.empty() ? fam::ExperimentConfig{} : fam::load_config(c.config);
  if (c.seed) {
    cfg.federation.seed = *c.seed;
    cfg.federation.model.init_seed = *c.seed;
    cfg.attack.seed = *c.seed;
  }
  if (c.deterministic) cfg.federation.deterministic = true;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

void print_report(const std::vector<fam::ReportCell>& cells) {
  std::printf("%-11s %-10s %10s %9s %9s %4s\n", "stage", "protection", "mse", "ssim(%)", "psnr", "n");
  for (const auto& c : cells) {
    std::printf("%-11s %-10s %10.4f %9.2f %9.3f %4zu\n", c.stage.c_str(), c.protection.c_str(), c.mse,
                100.0 * c.ssim, c.psnr, c.n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training with AugMix consistency defense and gradient-leakage evaluation"};
  app.require_subcommand(1);

  Common train_opts, attack_opts, part_opts;
  auto* train = app.add_subcommand("train", "run federated training and save untrained/convergent snapshots");
  add_common(train, train_opts);

  auto* attack = app.add_subcommand("attack", "invert victim updates against saved snapshots");
  add_common(attack, attack_opts);
  std::optional<std::string> stage;
  std::optional<double> severity;
  attack->add_option("--stage", stage, "untrained or convergent (default: experiment.stages)");
  attack->add_option("--severity", severity, "0 for no protection (default: experiment.severities)");

  auto* report = app.add_subcommand("report", "aggregate attack results into defense and trade-off tables");
  std::string results_dir;
  report->add_option("results_dir", results_dir, "directory holding attack/*.json")->required();

  auto* inspect = app.add_subcommand("partition-inspect", "print per-client class counts of the partition");
  add_common(inspect, part_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      const auto cfg = resolve(train_opts);
      const auto outcome = fam::cmd_train(cfg, cfg.output_dir);
      std::printf("trained %zu rounds; final test accuracy %.4f; outputs in %s\n", outcome.result.rounds.size(),
                  outcome.final_accuracy, cfg.output_dir.c_str());
    } else if (*attack) {
      const auto cfg = resolve(attack_opts);
      const auto stages = stage ? std::vector<std::string>{*stage} : cfg.stages;
      const auto severities = severity ? std::vector<double>{*severity} : cfg.severities;
      for (const auto& st : stages) {
        for (double s : severities) {
          const auto cell = fam::cmd_attack(cfg, cfg.output_dir, st, s);
          double ssim = 0.0;
          std::size_t n = 0;
          for (const auto& r : cell.attacks) {
            for (const auto& p : r.per_image) {
              ssim += p.ssim;
              ++n;
            }
          }
          std::printf("%s %s: %zu attacks, mean ssim %.4f\n", st.c_str(), fam::protection_label(s).c_str(),
                      cell.attacks.size(), n ? ssim / static_cast<double>(n) : 0.0);
        }
      }
    } else if (*report) {
      print_report(fam::cmd_report(results_dir, &std::cerr));
    } else if (*inspect) {
      const auto cfg = resolve(part_opts);
      cfg.validate();
      const auto data = fam::load_experiment_data(cfg);
      fam::Rng rng = fam::make_rng({cfg.federation.seed, fam::kPartitionStream});
      const auto clients = fam::dirichlet_partition(data, cfg.federation.clients, cfg.federation.alpha_part, rng);
      std::cout << fam::partition_csv(clients, data.class_count);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
