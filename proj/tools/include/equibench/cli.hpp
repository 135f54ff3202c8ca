#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "equibench/bench.hpp"
#include "equibench/graphdata.hpp"
#include "equibench/train.hpp"

namespace equibench::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumerical = 3 };

/// One experiment document: data source, named models, training recipe and
/// sweeps. Loaded from a single JSON file.
struct ExperimentConfig {
  TaskKind task = TaskKind::jet_tagging;
  std::uint64_t seed = 0;
  nlohmann::json generator = nlohmann::json::object();
  double test_fraction = 0.2;
  std::string output_dir;
  std::vector<NamedModel> models;
  TrainConfig train;
  std::vector<nlohmann::json> sweeps;
  /// Content hash of the document with the effective seed substituted.
  std::string hash;

  const NamedModel& model(const std::string& name) const;
  std::string provenance() const;  // "config_hash=<h> seed=<s>"
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         std::optional<std::uint64_t> seed_override = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = {});

/// --out wins; otherwise $EQUIBENCH_OUT (or the working directory) joined
/// with the config's output_dir (default "equibench-out").
std::filesystem::path resolve_output_dir(const std::optional<std::string>& out_flag,
                                         const std::string& config_output_dir);

Dataset generate_dataset(const ExperimentConfig& cfg);
/// (train, test) split of the full dataset, fixed by the global seed.
std::pair<Dataset, Dataset> train_test_split(const ExperimentConfig& cfg, const Dataset& ds);

/// Resolve a sweep entry against the config: model references by name and
/// the shared training recipe. Model input widths come from `sample`.
SweepSpec resolve_sweep(const ExperimentConfig& cfg, const nlohmann::json& sweep, std::size_t index,
                        const EventGraph& sample);

/// Entry point. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace equibench::cli
