#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "equibench/graphdata.hpp"
#include "equibench/groups.hpp"
#include "equibench/layers.hpp"
#include "equibench/metrics.hpp"
#include "equibench/train.hpp"

namespace equibench {

enum class Protocol {
  boost_robustness,
  rotation_robustness,
  data_efficiency,
  ablation,
  hybrid_scan,
  certify
};

std::string to_string(Protocol p);
/// ConfigError listing the valid names on failure.
Protocol protocol_from_string(const std::string& name);
const std::vector<std::string>& protocol_names();

/// {0, 0.1, ..., 0.9, 0.99}
std::vector<double> default_beta_grid();
/// {0, pi/4, pi/2, 3pi/4, pi}
std::vector<double> default_theta_grid();
/// {0.005, 0.01, 0.05, 1.0}
std::vector<double> default_fraction_grid();
std::vector<std::uint64_t> default_seeds(Protocol p, TaskKind task);

struct NamedModel {
  std::string name;
  ModelSpec spec;
  /// Train on group-transformed copies of the training set.
  bool augment = false;
};

struct CertifySettings {
  std::size_t n_samples = 100;
  std::size_t n_events = 50;
  /// Defaults to 1e-9 for boosts and 1e-12 for rotations.
  std::optional<double> tolerance;
};

struct SweepSpec {
  Protocol protocol = Protocol::boost_robustness;
  /// beta, theta or fraction list depending on the protocol.
  std::vector<double> grid;
  /// (eq_width, free_width) pairs for hybrid_scan.
  std::vector<std::pair<std::size_t, std::size_t>> width_pairs;
  std::vector<std::uint64_t> seeds;
  std::vector<NamedModel> models;
  TrainConfig train;
  /// Group range used for augmented training and certification sampling.
  AugmentOptions augmentation{GroupFamily::boost, {-0.9, 0.9}, SpatialAxis::z, false};
  CertifySettings certify;
  /// Opaque description of the data source; part of the content hash.
  nlohmann::json data_ref = nlohmann::json::object();

  void validate(TaskKind task) const;
  std::string hash() const;
};

nlohmann::json to_json(const SweepSpec& s);
/// Missing grid/seeds are filled with the protocol defaults for `task`.
SweepSpec sweep_spec_from_json(const nlohmann::json& j, TaskKind task, const std::string& prefix = "");

/// One CSV row: a model at a grid point under one seed.
struct SweepRow {
  std::string model;
  std::string point;
  double point_value = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double auc = 0.0;
  double rejection = 0.0;
  std::size_t n_parameters = 0;
  double ant_factor_x1e5 = 0.0;
  /// Largest |score(point) - score(reference point)| over the test set.
  double max_score_drift = 0.0;
  // certify only
  std::string contract;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string worst_element;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;  // canonical order: model, point, seed
  nlohmann::json summary;
  std::size_t resumed_units = 0;
  std::filesystem::path csv_path;
  std::filesystem::path json_path;
};

struct SweepData {
  Dataset train;
  Dataset test;
};

struct SweepOptions {
  std::size_t jobs = 1;
  std::filesystem::path out_dir;  // empty: nothing written, no resume
  std::string header_comment;     // first CSV line, after "# "
  std::function<void(const std::string&)> log;
};

std::string sweep_csv_header(Protocol p);
std::string sweep_csv_row(Protocol p, const SweepRow& row);
/// Parses the data rows of a sweep CSV. Malformed lines (e.g. a torn final
/// line) are dropped.
std::vector<SweepRow> parse_sweep_csv(Protocol p, const std::string& text);

/// Runs every (model, grid point, seed) unit on a bounded worker pool. With
/// an output directory, rows already present in <protocol>-<hash>.csv are
/// reused and the file is rewritten in canonical order.
SweepResult run_sweep(const SweepSpec& spec, const SweepData& data, const SweepOptions& opts);

/// Human-readable table in the protocol's reporting layout.
std::string format_sweep_table(const SweepResult& result);

// ---------------------------------------------------------------------------
// Building blocks

/// Every event transformed by the same element.
Dataset transform_dataset(const Dataset& ds, const GroupElement& g);

struct RobustnessPoint {
  double value = 0.0;
  MetricsReport metrics;
  double max_score_drift = 0.0;
};

/// Evaluate a trained model on the test set transformed by each grid value.
/// Boost grids use `axis`; drift is measured against the untransformed scores.
std::vector<RobustnessPoint> robustness_curve(const Model& model, const Dataset& test,
                                              GroupFamily family, const std::vector<double>& grid,
                                              SpatialAxis axis = SpatialAxis::z);

/// ContractError unless the specs differ in the message kind only.
void check_ablation_pair(const ModelSpec& eq, const ModelSpec& stripped);

enum class Contract { invariance, equivariance };
std::string to_string(Contract c);

struct CertificationReport {
  Contract contract = Contract::invariance;
  GroupFamily family = GroupFamily::boost;
  std::size_t n_samples = 0;
  double tolerance = 0.0;
  double max_residual = 0.0;
  bool passed = false;
  std::string worst_element;
  std::size_t worst_event = 0;
};

/// max over sampled g and events of |phi(T_g x) - S_g phi(x)|_inf, where S_g
/// is the identity for scores (invariance) and the group matrix for updated
/// positions (equivariance). Elements come from stream (seed, "certify").
CertificationReport certify(const Model& model, std::span<const EventGraph> events, Contract contract,
                            GroupFamily family, ParamRange range, std::size_t n_samples,
                            double tolerance, std::uint64_t seed,
                            SpatialAxis axis = SpatialAxis::z);

double default_tolerance(GroupFamily family);

}  // namespace equibench
