#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "shadowlab/harness.hpp"

namespace h = shadowlab::harness;
using json = nlohmann::json;

namespace {

constexpr int kConfigExit = 2;
constexpr int kStageExit = 3;

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> replay;
  std::optional<std::string> from_stage;
};

h::ExperimentConfig load(h::Experiment e, const RunArgs& a) {
  json cfg = json::parse(shadowlab::harness::default_config(e));
  if (!a.config.empty()) {
    const auto parsed = h::parse_config_file(a.config);
    cfg = json::parse(parsed.canonical);
    cfg["output_dir"] = parsed.output_dir;
  }
  if (cfg.value("experiment", "") != h::to_string(e))
    throw h::ConfigError("config is for '" + cfg.value("experiment", "") + "', not '" + h::to_string(e) + "'");
  if (a.seed) cfg["seed"] = *a.seed;
  if (a.out) cfg["output_dir"] = *a.out;
  return h::parse_config(cfg.dump());
}

int run(h::Experiment e, const RunArgs& a) {
  h::RunOptions options;
  options.from_stage = a.from_stage;
  h::RunOutcome outcome;
  if (a.replay) {
    if (!a.config.empty() || a.seed) throw h::ConfigError("--replay takes its config from the manifest");
    outcome = h::replay(*a.replay, a.out, options);
    if (outcome.manifest.experiment != e) throw h::ConfigError("manifest records a different experiment");
  } else {
    outcome = h::run_experiment(load(e, a), options);
  }
  for (const auto& s : outcome.manifest.stages)
    std::cerr << (s.skipped ? "skipped " : "ran     ") << s.name << " (" << s.seconds << " s, " << s.artifacts.size()
              << " artifacts)\n";
  std::cout << outcome.report;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Classical shadow experiments: ground-state prediction and phase classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(h::kCodeVersion));

  const std::vector<h::Experiment> experiments = {h::Experiment::predict_ground_state, h::Experiment::classify_spt,
                                                  h::Experiment::classify_topo, h::Experiment::extract_classifier};
  std::vector<RunArgs> args(experiments.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    auto* sub = app.add_subcommand(h::to_string(experiments[i]), "Run the " + h::to_string(experiments[i]) + " pipeline");
    sub->add_option("--config", args[i].config, "JSON config file (defaults when omitted)");
    sub->add_option("--seed", args[i].seed, "Master seed overriding the config");
    sub->add_option("--out", args[i].out, "Output directory overriding the config");
    sub->add_option("--replay", args[i].replay, "Re-run a recorded manifest and verify its artifacts");
    sub->add_option("--from-stage", args[i].from_stage, "Skip stages before this one")
        ->check(CLI::IsMember(h::stage_names(experiments[i])));
    subs.push_back(sub);
  }

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-config", "Validate a config file and print its canonical form");
  validate->add_option("config", validate_path, "JSON config file")->required();

  std::string defaults_name;
  auto* defaults = app.add_subcommand("defaults", "Print the default config of an experiment");
  defaults->add_option("experiment", defaults_name, "Experiment name")->required();

  auto* schema = app.add_subcommand("schema", "Print the JSON schema of config files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return run(experiments[i], args[i]);
    if (validate->parsed()) {
      const auto c = h::parse_config_file(validate_path);
      std::cout << json{{"valid", true}, {"config_hash", c.hash_hex()}, {"config", json::parse(c.canonical)}}.dump(2)
                << "\n";
      return 0;
    }
    if (defaults->parsed()) {
      std::cout << h::default_config(h::experiment_from_string(defaults_name));
      return 0;
    }
    if (schema->parsed()) {
      std::cout << h::config_schema();
      return 0;
    }
  } catch (const h::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const h::StageError& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kStageExit;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kStageExit;
  }
  return kStageExit;
}
