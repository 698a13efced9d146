#include "fedaugmix/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fedaugmix/errors.hpp"
#include "fedaugmix/metrics.hpp"

namespace fam {

namespace {

using json = nlohmann::ordered_json;

// Attack-side rng streams, keyed by attack.seed.
constexpr std::uint64_t kVictimPickStream = 10;
constexpr std::uint64_t kVictimBatchStream = 11;
constexpr std::uint64_t kVictimReplayStream = 12;
constexpr std::uint64_t kAttackInitStream = 13;
constexpr std::uint64_t kSynthDataStream = 20;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& items, std::function<std::string(const T&)> fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + fmt(items[i]);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define FAM_NUM(KEY, MEMBER)                                                                     \
  Field {                                                                                        \
    KEY, [](const ExperimentConfig& c) { return format_number(c.MEMBER); },                     \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); }         \
  }
#define FAM_SIZE(KEY, MEMBER)                                                                    \
  Field {                                                                                        \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                    \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); }           \
  }
#define FAM_U64(KEY, MEMBER)                                                                     \
  Field {                                                                                        \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                    \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_u64(KEY, v); }            \
  }
#define FAM_INT(KEY, MEMBER)                                                                     \
  Field {                                                                                        \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                    \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<int>(to_u64(KEY, v)); } \
  }
#define FAM_BOOL(KEY, MEMBER)                                                                    \
  Field {                                                                                        \
    KEY, [](const ExperimentConfig& c) { return bool_str(c.MEMBER); },                          \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); }           \
  }
#define FAM_STR(KEY, MEMBER)                                                                     \
  Field {                                                                                        \
    KEY, [](const ExperimentConfig& c) { return c.MEMBER; },                                    \
        [](ExperimentConfig& c, const std::string& v) { c.MEMBER = v; }                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      FAM_SIZE("federation.K", federation.clients),
      FAM_NUM("federation.C", federation.participation),
      FAM_SIZE("federation.T", federation.rounds),
      FAM_SIZE("federation.E", federation.local_epochs),
      FAM_NUM("federation.eta", federation.eta),
      FAM_NUM("federation.alpha_part", federation.alpha_part),
      FAM_SIZE("federation.batch_size", federation.batch_size),
      Field{"federation.algorithm", [](const ExperimentConfig& c) { return std::string(algorithm_name(c.federation.algorithm)); },
            [](ExperimentConfig& c, const std::string& v) { c.federation.algorithm = parse_algorithm(v); }},
      FAM_NUM("federation.mu_prox", federation.mu_prox),
      FAM_BOOL("federation.defense_enabled", federation.defense_enabled),
      FAM_U64("federation.seed", federation.seed),
      FAM_BOOL("federation.deterministic", federation.deterministic),

      FAM_INT("augmix.n_chains", federation.aug_cfg.n_chains),
      FAM_NUM("augmix.severity", federation.aug_cfg.severity),
      FAM_NUM("augmix.mix_concentration", federation.aug_cfg.mix_concentration),
      FAM_INT("augmix.max_chain_len", federation.aug_cfg.max_chain_len),
      FAM_U64("augmix.rng_seed", federation.aug_cfg.rng_seed),
      Field{"augmix.operations",
            [](const ExperimentConfig& c) {
              return join<AugmentOp>(c.federation.aug_cfg.operations,
                                     [](const AugmentOp& op) { return std::string(aug_kind_name(op.kind)); });
            },
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<AugmentOp> ops;
              for (const auto& name : split_list(v)) {
                const AugKind kind = parse_aug_kind(name);
                for (const auto& op : default_operations()) {
                  if (op.kind == kind) ops.push_back(op);
                }
              }
              c.federation.aug_cfg.operations = std::move(ops);
            }},

      FAM_NUM("loss.lambda_base", federation.loss_cfg.lambda_base),
      FAM_NUM("loss.scale", federation.loss_cfg.scale),
      FAM_NUM("loss.large_val", federation.loss_cfg.large_val),
      FAM_BOOL("loss.scaling_enabled", federation.loss_cfg.scaling_enabled),
      FAM_BOOL("loss.sticky", federation.loss_cfg.sticky),

      FAM_SIZE("attack.iterations", attack.iterations),
      FAM_NUM("attack.lr", attack.lr),
      FAM_NUM("attack.tv_coeff", attack.tv_coeff),
      FAM_SIZE("attack.batch_size", attack.batch_size),
      Field{"attack.objective", [](const ExperimentConfig& c) { return std::string(objective_name(c.attack.objective)); },
            [](ExperimentConfig& c, const std::string& v) { c.attack.objective = parse_objective(v); }},
      FAM_BOOL("attack.labels_known", attack.labels_known),
      FAM_SIZE("attack.local_epochs_observed", attack.local_epochs_observed),
      FAM_U64("attack.seed", attack.seed),

      Field{"model.layer_sizes",
            [](const ExperimentConfig& c) {
              return join<std::size_t>(c.federation.model.layer_sizes,
                                       [](const std::size_t& s) { return std::to_string(s); });
            },
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<std::size_t> sizes;
              for (const auto& s : split_list(v)) sizes.push_back(to_size("model.layer_sizes", s));
              c.federation.model.layer_sizes = std::move(sizes);
            }},
      Field{"model.activation",
            [](const ExperimentConfig& c) { return std::string(activation_name(c.federation.model.activation)); },
            [](ExperimentConfig& c, const std::string& v) { c.federation.model.activation = parse_activation(v); }},
      FAM_U64("model.init_seed", federation.model.init_seed),

      FAM_STR("data.source", data.source),
      FAM_STR("data.images", data.images),
      FAM_STR("data.labels", data.labels),
      FAM_SIZE("data.count", data.count),
      FAM_SIZE("data.side", data.side),
      FAM_SIZE("data.classes", data.classes),
      FAM_SIZE("data.downscale", data.downscale),

      Field{"experiment.severities",
            [](const ExperimentConfig& c) {
              return join<double>(c.severities, [](const double& s) { return format_number(s); });
            },
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<double> sev;
              for (const auto& s : split_list(v)) sev.push_back(to_double("experiment.severities", s));
              c.severities = std::move(sev);
            }},
      Field{"experiment.stages",
            [](const ExperimentConfig& c) {
              return join<std::string>(c.stages, [](const std::string& s) { return s; });
            },
            [](ExperimentConfig& c, const std::string& v) { c.stages = split_list(v); }},
      FAM_SIZE("experiment.attacks_per_cell", attacks_per_cell),
      FAM_STR("experiment.output_dir", output_dir),
  };
  return table;
}

#undef FAM_NUM
#undef FAM_SIZE
#undef FAM_U64
#undef FAM_INT
#undef FAM_BOOL
#undef FAM_STR

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool valid_stage(const std::string& stage) { return stage == "untrained" || stage == "convergent"; }

std::string cell_name(const std::string& stage, double severity) {
  std::string prot = protection_label(severity);
  std::replace(prot.begin(), prot.end(), '=', '_');
  return stage + "_" + prot;
}

// JSON cannot hold inf (PSNR of a perfect reconstruction); it is stored as a string.
json number_json(double v) { return std::isfinite(v) ? json(v) : json(format_number(v)); }

double number_from_json(const json& j) {
  if (j.is_string()) return to_double("number", j.get<std::string>());
  return j.get<double>();
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void ExperimentConfig::validate() const {
  federation.validate();
  attack.validate();
  if (data.source != "synth" && data.source != "idx") {
    throw ConfigError("data.source must be synth or idx, got '" + data.source + "'");
  }
  if (data.source == "idx" && (data.images.empty() || data.labels.empty())) {
    throw ConfigError("data.source = idx needs data.images and data.labels");
  }
  if (data.downscale < 1) throw ConfigError("data.downscale must be at least 1");
  if (data.source == "synth" && (data.side < 1 || data.classes < 2)) {
    throw ConfigError("synthetic data needs side >= 1 and at least two classes");
  }
  for (double s : severities) {
    if (!(s >= 0.0 && s <= 10.0)) throw ConfigError("experiment.severities: " + format_number(s) + " is outside [0, 10]");
    if (s > 0.0 && s <= 0.1) throw ConfigError("experiment.severities: nonzero severity must exceed 0.1");
  }
  for (const auto& st : stages) {
    if (!valid_stage(st)) throw ConfigError("experiment.stages: unknown stage '" + st + "'");
  }
  if (attacks_per_cell < 1) throw ConfigError("experiment.attacks_per_cell must be at least 1");
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;

  ExperimentConfig cfg;
  std::vector<std::string> unknown;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      unknown.push_back(key);
      continue;
    }
    it->second->set(cfg, value);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  return parse_config(read_text(path));
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

LabeledDataset load_experiment_data(const ExperimentConfig& cfg) {
  LabeledDataset data;
  if (cfg.data.source == "idx") {
    data = load_idx(cfg.data.images, cfg.data.labels, cfg.data.count);
  } else if (cfg.data.source == "synth") {
    Rng rng = make_rng({cfg.federation.seed, kSynthDataStream});
    data = synth_digits(cfg.data.count, cfg.data.side, cfg.data.classes, rng);
  } else {
    throw ConfigError("data.source must be synth or idx, got '" + cfg.data.source + "'");
  }
  if (cfg.data.downscale > 1) {
    for (auto& img : data.images) img = downscale(img, cfg.data.downscale);
  }
  return data;
}

FederationConfig with_severity(const FederationConfig& cfg, double severity) {
  FederationConfig out = cfg;
  out.defense_enabled = severity > 0.0;
  if (out.defense_enabled) out.aug_cfg.severity = severity;
  return out;
}

std::filesystem::path snapshot_path(const std::filesystem::path& out_dir, const std::string& stage) {
  return out_dir / ("model_" + stage + ".famb");
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const LabeledDataset data = load_experiment_data(cfg);
  std::filesystem::create_directories(out_dir);
  TrainOutcome outcome;
  outcome.result = run_federation(cfg.federation, data);
  outcome.final_accuracy = outcome.result.rounds.back().test_accuracy;

  write_text(out_dir / "rounds.csv", round_log_csv(outcome.result.rounds, cfg.federation.deterministic));
  save_model(outcome.result.initial, snapshot_path(out_dir, "untrained"));
  save_model(outcome.result.final_model, snapshot_path(out_dir, "convergent"));
  write_text(out_dir / "manifest.json", dataset_manifest_json(data));

  json summary;
  summary["rounds"] = cfg.federation.rounds;
  summary["seed"] = cfg.federation.seed;
  summary["algorithm"] = algorithm_name(cfg.federation.algorithm);
  summary["defense_enabled"] = cfg.federation.defense_enabled;
  summary["severity"] = cfg.federation.defense_enabled ? cfg.federation.aug_cfg.severity : 0.0;
  summary["final_accuracy"] = outcome.final_accuracy;
  write_text(out_dir / "train_summary.json", summary.dump(2) + "\n");
  write_text(out_dir / "config.txt", serialize_config(cfg));
  return outcome;
}

std::vector<std::size_t> pick_victims(const ExperimentConfig& cfg, const std::vector<ClientDataset>& clients) {
  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].train.size() >= cfg.attack.batch_size) eligible.push_back(k);
  }
  if (eligible.empty()) {
    throw ConfigError("no client holds a full attack batch of " + std::to_string(cfg.attack.batch_size) + " images");
  }
  Rng rng = make_rng({cfg.attack.seed, kVictimPickStream});
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(std::min(eligible.size(), cfg.attacks_per_cell));
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

std::vector<std::size_t> victim_batch(const ExperimentConfig& cfg, const ClientDataset& client, std::size_t client_id) {
  if (client.train.size() < cfg.attack.batch_size) {
    throw ConfigError("client " + std::to_string(client_id) + " has fewer than " +
                      std::to_string(cfg.attack.batch_size) + " training images");
  }
  std::vector<std::size_t> order = client.train;
  Rng rng = make_rng({cfg.federation.seed, kVictimBatchStream, client_id});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(cfg.attack.batch_size);
  return order;
}

AttackRecord attack_client(const ExperimentConfig& cfg, const ModelState& model, const std::string& stage,
                           double severity, const ClientDataset& client, std::size_t client_id,
                           const std::optional<std::filesystem::path>& dump_dir) {
  const auto positions = victim_batch(cfg, client, client_id);
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  AttackRecord record;
  record.client = client_id;
  record.stage = stage;
  record.severity = severity;
  record.iterations = cfg.attack.iterations;
  for (auto p : positions) {
    images.push_back(client.images[p]);
    labels.push_back(client.labels[p]);
    record.batch.push_back(client.source[p]);
  }

  const FederationConfig victim_cfg = with_severity(cfg.federation, severity);
  Rng replay_rng = make_rng({cfg.attack.seed, kVictimReplayStream, client_id});
  const ModelState after = replay_update(model, images, labels, victim_cfg, cfg.attack.local_epochs_observed, replay_rng);
  const auto target = surrogate_gradient(model, after, victim_cfg.eta);

  const Image& first = images.front();
  Rng attack_rng = make_rng({cfg.attack.seed, kAttackInitStream, client_id});
  const AttackResult result =
      run_inversion(target, labels, model, cfg.attack, {first.height, first.width, first.channels}, attack_rng, &images);
  record.final_objective = result.final_objective;
  record.per_image = score_reconstruction(result, images);

  if (dump_dir) {
    std::filesystem::create_directories(*dump_dir);
    const std::string ext = first.channels == 1 ? ".pgm" : ".ppm";
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::string base = "client" + std::to_string(client_id) + "_img" + std::to_string(i);
      write_image(images[i], *dump_dir / (base + "_true" + ext));
      write_image(result.reconstructed[result.permutation[i]], *dump_dir / (base + "_rec" + ext));
    }
  }
  return record;
}

AttackCell cmd_attack(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& stage,
                      double severity) {
  cfg.validate();
  if (!valid_stage(stage)) throw ConfigError("unknown stage '" + stage + "' (expected untrained or convergent)");
  if (!(severity == 0.0 || (severity > 0.1 && severity <= 10.0))) {
    throw ConfigError("severity must be 0 or lie in (0.1, 10], got " + format_number(severity));
  }
  const auto snapshot = snapshot_path(out_dir, stage);
  if (!std::filesystem::exists(snapshot)) {
    throw IoError("missing model snapshot " + snapshot.string() + " (run train first)");
  }
  const ModelState model = load_model(snapshot, cfg.federation.model.activation);
  if (model.spec.layer_sizes != cfg.federation.model.layer_sizes) {
    throw ConfigError("snapshot " + snapshot.string() + " does not match model.layer_sizes");
  }
  const LabeledDataset data = load_experiment_data(cfg);
  Rng part_rng = make_rng({cfg.federation.seed, kPartitionStream});
  const auto clients = dirichlet_partition(data, cfg.federation.clients, cfg.federation.alpha_part, part_rng);

  AttackCell cell;
  cell.stage = stage;
  cell.severity = severity;
  const auto [test_images, test_labels] = pooled_test_set(clients);
  cell.accuracy = accuracy(model, test_images, test_labels);

  const std::string name = cell_name(stage, severity);
  const auto dump_dir = out_dir / "attack" / name;
  for (auto k : pick_victims(cfg, clients)) {
    cell.attacks.push_back(attack_client(cfg, model, stage, severity, clients[k], k, dump_dir));
  }
  write_text(out_dir / "attack" / (name + ".json"), attack_cell_json(cell));
  return cell;
}

std::string attack_cell_json(const AttackCell& cell) {
  json j;
  j["stage"] = cell.stage;
  j["severity"] = cell.severity;
  j["protection"] = protection_label(cell.severity);
  j["accuracy"] = cell.accuracy;
  j["attacks"] = json::array();
  for (const auto& r : cell.attacks) {
    json a;
    a["client"] = r.client;
    a["stage"] = r.stage;
    a["severity"] = r.severity;
    a["iterations"] = r.iterations;
    a["final_objective"] = number_json(r.final_objective);
    a["batch"] = r.batch;
    a["per_image"] = json::array();
    for (const auto& s : r.per_image) {
      a["per_image"].push_back({{"mse", number_json(s.mse)}, {"ssim", number_json(s.ssim)}, {"psnr", number_json(s.psnr)}});
    }
    j["attacks"].push_back(std::move(a));
  }
  return j.dump(2) + "\n";
}

AttackCell parse_attack_cell(const std::string& json_text) {
  AttackCell cell;
  try {
    const json j = json::parse(json_text);
    cell.stage = j.at("stage").get<std::string>();
    cell.severity = j.at("severity").get<double>();
    cell.accuracy = j.at("accuracy").get<double>();
    for (const auto& a : j.at("attacks")) {
      AttackRecord r;
      r.client = a.at("client").get<std::size_t>();
      r.stage = a.at("stage").get<std::string>();
      r.severity = a.at("severity").get<double>();
      r.iterations = a.at("iterations").get<std::size_t>();
      r.final_objective = number_from_json(a.at("final_objective"));
      r.batch = a.at("batch").get<std::vector<std::size_t>>();
      for (const auto& s : a.at("per_image")) {
        r.per_image.push_back({number_from_json(s.at("mse")), number_from_json(s.at("ssim")),
                               number_from_json(s.at("psnr"))});
      }
      cell.attacks.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed attack record: ") + e.what());
  }
  return cell;
}

std::string tradeoff_csv(const std::vector<AttackCell>& cells) {
  // Cells sharing (stage, severity) are pooled.
  struct Acc {
    double acc = 0, mse = 0, ssim = 0, psnr = 0;
    std::size_t cells = 0, n = 0;
  };
  std::map<std::pair<int, double>, Acc> grouped;
  for (const auto& c : cells) {
    auto& a = grouped[{c.stage == "untrained" ? 0 : 1, c.severity}];
    a.acc += c.accuracy;
    ++a.cells;
    for (const auto& r : c.attacks) {
      for (const auto& s : r.per_image) {
        a.mse += s.mse;
        a.ssim += s.ssim;
        a.psnr += s.psnr;
        ++a.n;
      }
    }
  }
  std::string out = "severity,accuracy,mean_mse,mean_ssim,mean_psnr,stage\n";
  for (const auto& [key, a] : grouped) {
    const double n = a.n ? static_cast<double>(a.n) : 1.0;
    out += format_number(key.second) + "," + format_number(a.acc / static_cast<double>(a.cells)) + "," +
           format_number(a.mse / n) + "," + format_number(a.ssim / n) + "," + format_number(a.psnr / n) + "," +
           (key.first == 0 ? "untrained" : "convergent") + "\n";
  }
  return out;
}

std::vector<ReportCell> cmd_report(const std::filesystem::path& results_dir, std::ostream* warnings) {
  const auto attack_dir = results_dir / "attack";
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(attack_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(attack_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
  }
  if (files.empty()) throw IoError("no attack results under " + attack_dir.string());
  std::sort(files.begin(), files.end());

  std::vector<AttackCell> cells;
  std::vector<ScoreRecord> records;
  for (const auto& f : files) {
    cells.push_back(parse_attack_cell(read_text(f)));
    for (const auto& r : cells.back().attacks) {
      for (const auto& s : r.per_image) records.push_back({r.stage, r.severity, s});
    }
  }
  std::vector<std::pair<std::string, double>> grid;
  for (const auto& c : cells) grid.emplace_back(c.stage, c.severity);
  std::vector<std::string> warns;
  const auto report = defense_report(records, grid, &warns);
  if (warnings) {
    for (const auto& w : warns) *warnings << "warning: " << w << "\n";
  }
  write_text(results_dir / "defense_report.csv", defense_report_csv(report));
  write_text(results_dir / "defense_report.json", defense_report_json(report));
  write_text(results_dir / "tradeoff.csv", tradeoff_csv(cells));
  return report;
}

std::string partition_csv(const std::vector<ClientDataset>& clients, std::size_t class_count) {
  std::string out = "client,train,test";
  for (std::size_t c = 0; c < class_count; ++c) out += ",class_" + std::to_string(c);
  out += "\n";
  for (std::size_t k = 0; k < clients.size(); ++k) {
    std::vector<std::size_t> counts(class_count, 0);
    for (auto y : clients[k].labels) ++counts[y];
    out += std::to_string(k) + "," + std::to_string(clients[k].train.size()) + "," +
           std::to_string(clients[k].test.size());
    for (auto n : counts) out += "," + std::to_string(n);
    out += "\n";
  }
  return out;
}

}  // namespace fam
