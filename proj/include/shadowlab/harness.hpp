#pragma once

// Config-driven experiment runs: JSON configs with defaults, staged pipelines
// writing artifacts atomically, a run manifest checkpointed after every stage,
// and replay that checks artifacts byte for byte.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shadowlab::harness {

inline constexpr const char* kCodeVersion = "0.1.0";

enum class Experiment { predict_ground_state, classify_spt, classify_topo, extract_classifier };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& name);

// Invalid or inconsistent configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage failed; the CLI maps it to exit code 3.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::predict_ground_state;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  // Every field with defaults filled in, keys sorted, output_dir excluded.
  std::string canonical;

  std::uint64_t hash() const;
  std::string hash_hex() const;
};

// Parses and validates a JSON config. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig parse_config_file(const std::string& path);
// Defaults for an experiment as pretty-printed JSON.
std::string default_config(Experiment e);
// JSON schema describing all config fields.
std::string config_schema();

struct Artifact {
  std::string path;  // relative to the output directory
  std::string fnv1a;
};

struct StageRecord {
  std::string name;
  std::uint64_t seed = 0;
  double seconds = 0.0;
  bool skipped = false;
  std::vector<Artifact> artifacts;
};

struct RunManifest {
  std::string code_version = kCodeVersion;
  Experiment experiment = Experiment::predict_ground_state;
  std::string config_hash;
  std::string config;  // canonical JSON
  std::string output_dir;
  std::vector<StageRecord> stages;
  bool complete = false;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  std::vector<Artifact> artifacts() const;
};

struct RunOptions {
  // Skip stages before this one; their artifacts must already be present.
  std::optional<std::string> from_stage;
};

struct RunOutcome {
  RunManifest manifest;
  std::string report;  // JSON
};

std::vector<std::string> stage_names(Experiment e);

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Re-runs a recorded run. Rejects a version mismatch or a config that does not
// hash to the recorded value, and fails if any regenerated artifact differs.
RunOutcome replay(const std::string& manifest_path, const std::optional<std::string>& output_dir = std::nullopt,
                  const RunOptions& options = {});

}  // namespace shadowlab::harness
