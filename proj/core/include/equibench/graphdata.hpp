#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "equibench/event_graph.hpp"
#include "equibench/groups.hpp"

namespace equibench {

/// Synthetic jet generator. Units are arbitrary "mass units"; every particle
/// is a 4-momentum (E, px, py, pz) used as the node position.
///
/// Signal: a resonance of mass ~N(signal_mass, signal_width) decays through
/// successive two-body splits into `n_particles` massive particles; the
/// first `prongs - 1` splits are hard (wide opening), later ones soft, so the
/// jet shows `prongs` collimated subjets. Background: a single parton whose
/// mass follows an exponential spectrum showers through soft splits only.
/// Both are boosted to a lab momentum drawn from a power law
/// p_min * u^(-1/(index-1)). Four-momentum is conserved exactly at every
/// split, so the summed invariant mass equals the parent mass.
/// Every particle carries the node feature 1 (a single species), so the
/// class is visible only through the momenta.
struct JetGenConfig {
  std::size_t n_events = 1000;
  std::size_t min_particles = 4;
  std::size_t max_particles = 8;
  double signal_mass = 1.0;
  double signal_width = 0.05;
  std::size_t prongs = 3;
  double background_mass_scale = 0.3;
  double momentum_min = 2.0;
  double momentum_index = 4.0;
  double max_abs_cos_theta = 0.8;
  double class_balance = 0.5;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Synthetic tracking generator in the transverse plane. Tracks are circles
/// through the origin with curvature kappa; the hit on a layer of radius r
/// sits at polar angle phi0 - asin(kappa r / 2), plus Gaussian noise. Edges
/// join hits on adjacent layers whose distance is within
/// `proximity_threshold` (ties within 1e-9 included); an edge is true when
/// both hits come from the same track.
struct TrackGenConfig {
  std::size_t n_events = 200;
  std::size_t min_tracks = 3;
  std::size_t max_tracks = 6;
  std::vector<double> layer_radii{0.2, 0.4, 0.6, 0.8, 1.0};
  double max_curvature = 0.8;
  double noise_sigma = 0.005;
  double proximity_threshold = 0.3;

  void validate() const;
};

nlohmann::json to_json(const JetGenConfig& cfg);
nlohmann::json to_json(const TrackGenConfig& cfg);
/// Missing keys keep their defaults; wrong types or values raise ConfigError
/// with `prefix` prepended to the field name.
JetGenConfig jet_config_from_json(const nlohmann::json& j, const std::string& prefix = "");
TrackGenConfig track_config_from_json(const nlohmann::json& j, const std::string& prefix = "");

/// Statistics recorded at generation time.
struct GenerationReport {
  std::size_t n_events = 0;
  double class_balance = 0.0;  // mean graph label (jets)
  std::size_t n_edges = 0;
  std::size_t n_true_edges = 0;
  double edge_truth_fraction = 0.0;  // tracking
  std::size_t tracks_without_edges = 0;
};

struct Dataset {
  TaskKind task = TaskKind::jet_tagging;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<EventGraph> events;
  GenerationReport report;

  /// Shared task kind and feature dimensionality across events.
  void validate() const;
};

/// Counts recomputed from the events themselves.
GenerationReport summarize(const Dataset& ds);

Dataset generate_jets(const JetGenConfig& cfg, std::uint64_t seed);
Dataset generate_tracks(const TrackGenConfig& cfg, std::uint64_t seed);

/// Adjacent-layer proximity edges (i < j by node index) for hits with the
/// given layer assignment.
std::vector<Edge> build_proximity_edges(const Tensor& positions, std::span<const std::size_t> layer,
                                        double threshold);

struct AugmentOptions {
  GroupFamily family = GroupFamily::boost;
  ParamRange range{};
  SpatialAxis axis = SpatialAxis::z;
  /// Keep the originals and append the transformed copies.
  bool supplement = false;
};

/// Each event gets its own element drawn from stream (seed, "augment", index).
Dataset augment(const Dataset& ds, const AugmentOptions& opts, std::uint64_t seed);

/// Class-stratified sample without replacement, original order preserved.
/// Tracking datasets are treated as one class. Fewer than two events in any
/// class is a DomainError.
Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed);

/// Random split into (first, second) with round(fraction * n) events in the
/// second part.
std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed);

/// Dataset with only the listed events, in the listed order.
Dataset select(const Dataset& ds, std::span<const std::size_t> indices);

inline constexpr int kDatasetSchemaVersion = 1;

nlohmann::json to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EventGraph& event);
EventGraph event_from_json(const nlohmann::json& j);

}  // namespace equibench
