#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fedaugmix/errors.hpp"
#include "fedaugmix/experiment.hpp"

using namespace fam;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fam_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// T=1, K=1 on a small synthetic set.
ExperimentConfig smoke_config() {
  return parse_config(R"(
[federation]
K = 1
C = 1
T = 1
E = 1
batch_size = 10
seed = 3
deterministic = true
[model]
layer_sizes = 64, 16, 10
activation = relu
init_seed = 3
[data]
source = synth
count = 60
side = 8
[attack]
iterations = 5
)");
}

// Untrained sigmoid MLP on 16x16 digits: the setup where gradient inversion works.
ExperimentConfig attack_config() {
  return parse_config(R"(
[federation]
K = 2
C = 1
T = 1
E = 1
eta = 0.05
alpha_part = 100
batch_size = 10
seed = 1
[model]
layer_sizes = 256, 256, 10
activation = sigmoid
init_seed = 1
[data]
source = synth
count = 80
side = 16
[attack]
iterations = 300
batch_size = 4
local_epochs_observed = 5
seed = 1
[experiment]
attacks_per_cell = 2
)");
}

double mean_ssim(const AttackCell& cell) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& a : cell.attacks) {
    for (const auto& s : a.per_image) {
      total += s.ssim;
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("config parsing and round trip") {
  const auto cfg = smoke_config();
  CHECK(cfg.federation.clients == 1);
  CHECK(cfg.federation.model.layer_sizes == std::vector<std::size_t>{64, 16, 10});
  CHECK(cfg.data.side == 8);

  const std::string text = serialize_config(cfg);
  CHECK(serialize_config(parse_config(text)) == text);

  // Key order does not matter.
  std::istringstream is(text);
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  std::string reversed;
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) reversed += *it + "\n";
  CHECK(serialize_config(parse_config(reversed)) == text);

  std::set<std::string> keys;
  for (const auto& k : config_keys()) keys.insert(k);
  CHECK(keys.size() == config_keys().size());
  for (const char* k : {"federation.K", "federation.eta", "augmix.severity", "loss.large_val", "attack.iterations",
                        "model.layer_sizes", "experiment.severities", "experiment.attacks_per_cell"}) {
    CHECK(keys.count(k) == 1);
  }
}

TEST_CASE("config errors") {
  try {
    parse_config("federation.K = 2\nfederation.bogus = 1\n[attack]\nwhatever = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("federation.bogus") != std::string::npos);
    CHECK(msg.find("attack.whatever") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("federation.K 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("federation.K = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[federation\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/fam.cfg"), IoError);

  auto cfg = smoke_config();
  cfg.severities = {0, 11};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.severities = {0.05};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = smoke_config();
  cfg.stages = {"midway"};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = smoke_config();
  cfg.attacks_per_cell = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("cmd_train smoke, determinism and defense branch") {
  const auto cfg = smoke_config();
  const auto a = fresh_dir("train_a"), b = fresh_dir("train_b"), c = fresh_dir("train_c");
  const auto out = cmd_train(cfg, a);
  CHECK(out.result.rounds.size() == 1);
  const std::string csv = slurp(a / "rounds.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + 1 row
  for (const char* f : {"model_untrained.famb", "model_convergent.famb", "manifest.json", "train_summary.json",
                        "config.txt"}) {
    CHECK(fs::exists(a / f));
  }

  cmd_train(cfg, b);
  for (const char* f : {"rounds.csv", "model_untrained.famb", "model_convergent.famb", "train_summary.json"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }

  auto defended = cfg;
  defended.federation.defense_enabled = true;
  defended.federation.aug_cfg.severity = 5.0;
  cmd_train(defended, c);
  CHECK(slurp(a / "rounds.csv") != slurp(c / "rounds.csv"));
  CHECK(load_config(c / "config.txt").federation.defense_enabled);
}

TEST_CASE("cmd_attack errors") {
  auto cfg = smoke_config();
  const auto dir = fresh_dir("attack_err");
  try {
    cmd_attack(cfg, dir, "untrained", 0.0);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(snapshot_path(dir, "untrained").string()) != std::string::npos);
  }
  cmd_train(cfg, dir);
  CHECK_THROWS_AS(cmd_attack(cfg, dir, "midway", 0.0), ConfigError);
  CHECK_THROWS_AS(cmd_attack(cfg, dir, "untrained", 0.05), ConfigError);
  cfg.attacks_per_cell = 0;
  CHECK_THROWS_AS(cmd_attack(cfg, dir, "untrained", 0.0), ConfigError);
  cfg = smoke_config();
  cfg.federation.model.layer_sizes = {64, 8, 10};
  CHECK_THROWS_AS(cmd_attack(cfg, dir, "untrained", 0.0), ConfigError);
}

TEST_CASE("cmd_attack severity 0 vs 10 and report") {
  const auto cfg = attack_config();
  const auto dir = fresh_dir("attack");
  cmd_train(cfg, dir);
  const auto none = cmd_attack(cfg, dir, "untrained", 0.0);
  const auto strong = cmd_attack(cfg, dir, "untrained", 10.0);
  REQUIRE(none.attacks.size() == 2);
  REQUIRE(strong.attacks.size() == 2);
  CHECK(none.attacks[0].client == strong.attacks[0].client);
  CHECK(none.attacks[0].batch == strong.attacks[0].batch);
  CHECK(none.attacks[0].per_image.size() == 4);
  CHECK(none.attacks[0].iterations == 300);
  const double s0 = mean_ssim(none), s10 = mean_ssim(strong);
  MESSAGE("mean SSIM none " << s0 << " s=10 " << s10);
  CHECK(s0 >= 0.3);
  CHECK(s10 < s0);

  CHECK(fs::exists(dir / "attack" / "untrained_none.json"));
  CHECK(fs::exists(dir / "attack" / "untrained_s_10.json"));
  const auto client = none.attacks[0].client;
  CHECK(fs::exists(dir / "attack" / "untrained_none" / ("client" + std::to_string(client) + "_img0_rec.pgm")));
  const auto parsed = parse_attack_cell(slurp(dir / "attack" / "untrained_none.json"));
  CHECK(attack_cell_json(parsed) == attack_cell_json(none));

  // Same inputs reproduce the same cell.
  CHECK(attack_cell_json(cmd_attack(cfg, dir, "untrained", 0.0)) == attack_cell_json(none));

  std::ostringstream warnings;
  const auto report = cmd_report(dir, &warnings);
  CHECK(report.size() == 2);
  const std::string tradeoff = slurp(dir / "tradeoff.csv");
  CHECK(tradeoff.rfind("severity,accuracy,mean_mse,mean_ssim,mean_psnr,stage\n", 0) == 0);
}

TEST_CASE("cmd_report grouping and idempotence") {
  const auto dir = fresh_dir("report");
  fs::create_directories(dir / "attack");
  CHECK_THROWS_AS(cmd_report(dir), IoError);
  CHECK_THROWS_AS(cmd_report(dir / "missing"), IoError);

  auto write_cell = [&](const std::string& stage, double severity, double base) {
    AttackCell cell;
    cell.stage = stage;
    cell.severity = severity;
    cell.accuracy = 0.5;
    AttackRecord r;
    r.client = 0;
    r.stage = stage;
    r.severity = severity;
    r.iterations = 10;
    r.batch = {1};
    r.per_image = {{base, 0.5 - base, 10.0 + base}};
    cell.attacks = {r};
    const std::string name = stage + "_" + std::to_string(static_cast<int>(severity));
    std::ofstream(dir / "attack" / (name + ".json")) << attack_cell_json(cell);
  };

  write_cell("untrained", 0, 0.01);
  auto one = cmd_report(dir);
  CHECK(one.size() == 1);
  const std::string csv = slurp(dir / "defense_report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

  for (const char* stage : {"untrained", "convergent"}) {
    for (double s : {0.0, 2.0, 10.0}) write_cell(stage, s, 0.01 + s / 100.0);
  }
  const auto six = cmd_report(dir);
  CHECK(six.size() == 6);
  const std::string first_csv = slurp(dir / "defense_report.csv");
  const std::string first_json = slurp(dir / "defense_report.json");
  const std::string first_trade = slurp(dir / "tradeoff.csv");
  CHECK(std::count(first_trade.begin(), first_trade.end(), '\n') == 7);
  cmd_report(dir);
  CHECK(slurp(dir / "defense_report.csv") == first_csv);
  CHECK(slurp(dir / "defense_report.json") == first_json);
  CHECK(slurp(dir / "tradeoff.csv") == first_trade);
}

TEST_CASE("partition_csv layout") {
  auto cfg = smoke_config();
  cfg.federation.clients = 3;
  const auto data = load_experiment_data(cfg);
  Rng rng = make_rng({cfg.federation.seed, kPartitionStream});
  const auto clients = dirichlet_partition(data, 3, cfg.federation.alpha_part, rng);
  const std::string csv = partition_csv(clients, 10);
  CHECK(csv.rfind("client,train,test,class_0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

#ifdef FAM_CLI_PATH
TEST_CASE("command-line tool exit codes") {
  const auto dir = fresh_dir("tool");
  std::ofstream(dir / "bad.cfg") << "federation.nope = 1\n";
  const std::string tool = FAM_CLI_PATH;
  const std::string quiet = " > " + (dir / "log.txt").string() + " 2>&1";
  CHECK(std::system((tool + " train --config " + (dir / "bad.cfg").string() + quiet).c_str()) != 0);
  CHECK(slurp(dir / "log.txt").find("federation.nope") != std::string::npos);
  CHECK(std::system((tool + " report " + (dir / "empty").string() + quiet).c_str()) != 0);

  std::ofstream(dir / "ok.cfg") << serialize_config(smoke_config());
  CHECK(std::system((tool + " train --config " + (dir / "ok.cfg").string() + " --out " + (dir / "run").string() +
                     quiet).c_str()) == 0);
  CHECK(fs::exists(dir / "run" / "rounds.csv"));
}
#endif
