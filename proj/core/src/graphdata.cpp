#include "equibench/graphdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "equibench/error.hpp"

namespace equibench {

std::string to_string(TaskKind task) {
  return task == TaskKind::jet_tagging ? "jet_tagging" : "tracking";
}

TaskKind task_from_string(const std::string& name) {
  if (name == "jet_tagging") return TaskKind::jet_tagging;
  if (name == "tracking") return TaskKind::tracking;
  throw ConfigError("task", "unknown task '" + name + "' (expected jet_tagging or tracking)");
}

void EventGraph::validate(TaskKind task) const {
  if (positions.rank() != 2) {
    throw DimensionError("event positions must be N x d, got " + shape_string(positions.shape()));
  }
  const std::size_t n = positions.rows();
  if (node_feats.rank() != 2 || node_feats.rows() != n) {
    throw DimensionError("node features " + shape_string(node_feats.shape()) + " do not match " +
                         std::to_string(n) + " nodes");
  }
  for (const Edge& e : edges) {
    if (e.i >= n || e.j >= n) {
      throw DimensionError("edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                           ") out of range for " + std::to_string(n) + " nodes");
    }
  }
  if (edge_feats.rank() != 2 || edge_feats.rows() != edges.size()) {
    throw DimensionError("edge features " + shape_string(edge_feats.shape()) + " do not match " +
                         std::to_string(edges.size()) + " edges");
  }
  if (graph_label.has_value() == edge_labels.has_value()) {
    throw ContractError("an event carries exactly one of graph label or edge labels");
  }
  if (task == TaskKind::jet_tagging && !graph_label) {
    throw ContractError("jet tagging events need a graph label");
  }
  if (task == TaskKind::tracking) {
    if (!edge_labels) throw ContractError("tracking events need edge labels");
    if (edge_labels->size() != edges.size()) {
      throw DimensionError("edge label count does not match edge count");
    }
  }
}

void Dataset::validate() const {
  if (events.empty()) return;
  const EventGraph& first = events.front();
  for (const EventGraph& e : events) {
    e.validate(task);
    if (e.position_dim() != first.position_dim() || e.node_feat_dim() != first.node_feat_dim() ||
        e.edge_feat_dim() != first.edge_feat_dim()) {
      throw DimensionError("events disagree on feature dimensionality");
    }
  }
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& value, const std::string& prefix) {
  if (!j.contains(key)) return;
  const std::string field = prefix + key;
  const nlohmann::json& v = j.at(key);
  if constexpr (std::is_same_v<T, std::size_t>) {
    if (!v.is_number_unsigned()) {
      throw ConfigError(field, "expected a non-negative integer");
    }
    value = v.get<std::size_t>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    value = v.get<double>();
  } else {
    if (!v.is_array()) throw ConfigError(field, "expected an array of numbers");
    value.clear();
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(field, "expected an array of numbers");
      value.push_back(x.get<double>());
    }
  }
}

void check_known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                      const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix.empty() ? "generator" : prefix, "expected an object");
  for (const auto& item : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }) ==
        keys.end()) {
      throw ConfigError(prefix + item.key(), "unknown key");
    }
  }
}

}  // namespace

void JetGenConfig::validate() const {
  if (n_events == 0) throw ConfigError("n_events", "must be at least 1");
  if (min_particles < 2) throw ConfigError("min_particles", "must be at least 2");
  if (max_particles < min_particles) throw ConfigError("max_particles", "must be >= min_particles");
  if (!(signal_mass > 0.0)) throw ConfigError("signal_mass", "must be positive");
  if (!(signal_width >= 0.0) || !(signal_width < signal_mass / 3.0)) {
    throw ConfigError("signal_width", "must be in [0, signal_mass / 3)");
  }
  if (prongs < 1 || prongs > min_particles) {
    throw ConfigError("prongs", "must be in [1, min_particles]");
  }
  if (!(background_mass_scale > 0.0)) throw ConfigError("background_mass_scale", "must be positive");
  if (!(momentum_min > 0.0)) throw ConfigError("momentum_min", "must be positive");
  if (!(momentum_index > 1.0)) throw ConfigError("momentum_index", "must be greater than 1");
  if (!(max_abs_cos_theta >= 0.0 && max_abs_cos_theta < 1.0)) {
    throw ConfigError("max_abs_cos_theta", "must be in [0, 1)");
  }
  if (!(class_balance > 0.0 && class_balance < 1.0)) {
    throw ConfigError("class_balance", "must be in (0, 1)");
  }
}

void TrackGenConfig::validate() const {
  if (n_events == 0) throw ConfigError("n_events", "must be at least 1");
  if (min_tracks < 1) throw ConfigError("min_tracks", "must be at least 1");
  if (max_tracks < min_tracks) throw ConfigError("max_tracks", "must be >= min_tracks");
  if (layer_radii.size() < 2) throw ConfigError("layer_radii", "needs at least two layers");
  for (std::size_t k = 0; k < layer_radii.size(); ++k) {
    if (!(layer_radii[k] > 0.0) || (k > 0 && !(layer_radii[k] > layer_radii[k - 1]))) {
      throw ConfigError("layer_radii", "must be positive and strictly increasing");
    }
  }
  if (!(max_curvature >= 0.0) || !(max_curvature * layer_radii.back() / 2.0 < 1.0)) {
    throw ConfigError("max_curvature", "must satisfy 0 <= kappa * r_max / 2 < 1");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma", "must be >= 0");
  if (!(proximity_threshold >= 0.0)) throw ConfigError("proximity_threshold", "must be >= 0");
}

nlohmann::json to_json(const JetGenConfig& c) {
  return {{"kind", "jets"},
          {"n_events", c.n_events},
          {"min_particles", c.min_particles},
          {"max_particles", c.max_particles},
          {"signal_mass", c.signal_mass},
          {"signal_width", c.signal_width},
          {"prongs", c.prongs},
          {"background_mass_scale", c.background_mass_scale},
          {"momentum_min", c.momentum_min},
          {"momentum_index", c.momentum_index},
          {"max_abs_cos_theta", c.max_abs_cos_theta},
          {"class_balance", c.class_balance}};
}

nlohmann::json to_json(const TrackGenConfig& c) {
  return {{"kind", "tracks"},
          {"n_events", c.n_events},
          {"min_tracks", c.min_tracks},
          {"max_tracks", c.max_tracks},
          {"layer_radii", c.layer_radii},
          {"max_curvature", c.max_curvature},
          {"noise_sigma", c.noise_sigma},
          {"proximity_threshold", c.proximity_threshold}};
}

JetGenConfig jet_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  check_known_keys(j,
                   {"kind", "n_events", "min_particles", "max_particles", "signal_mass",
                    "signal_width", "prongs", "background_mass_scale", "momentum_min",
                    "momentum_index", "max_abs_cos_theta", "class_balance"},
                   prefix);
  JetGenConfig c;
  read_field(j, "n_events", c.n_events, prefix);
  read_field(j, "min_particles", c.min_particles, prefix);
  read_field(j, "max_particles", c.max_particles, prefix);
  read_field(j, "signal_mass", c.signal_mass, prefix);
  read_field(j, "signal_width", c.signal_width, prefix);
  read_field(j, "prongs", c.prongs, prefix);
  read_field(j, "background_mass_scale", c.background_mass_scale, prefix);
  read_field(j, "momentum_min", c.momentum_min, prefix);
  read_field(j, "momentum_index", c.momentum_index, prefix);
  read_field(j, "max_abs_cos_theta", c.max_abs_cos_theta, prefix);
  read_field(j, "class_balance", c.class_balance, prefix);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

TrackGenConfig track_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  check_known_keys(j,
                   {"kind", "n_events", "min_tracks", "max_tracks", "layer_radii", "max_curvature",
                    "noise_sigma", "proximity_threshold"},
                   prefix);
  TrackGenConfig c;
  read_field(j, "n_events", c.n_events, prefix);
  read_field(j, "min_tracks", c.min_tracks, prefix);
  read_field(j, "max_tracks", c.max_tracks, prefix);
  read_field(j, "layer_radii", c.layer_radii, prefix);
  read_field(j, "max_curvature", c.max_curvature, prefix);
  read_field(j, "noise_sigma", c.noise_sigma, prefix);
  read_field(j, "proximity_threshold", c.proximity_threshold, prefix);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Jet generator

namespace {

struct FourVector {
  double e = 0, px = 0, py = 0, pz = 0;
};

/// Lorentz transform of `p` from the rest frame of a particle with 4-momentum
/// `parent` (mass `m`) into the frame where the parent has that momentum.
FourVector boost_from_rest(const FourVector& p, const FourVector& parent, double m) {
  const double bx = parent.px / parent.e;
  const double by = parent.py / parent.e;
  const double bz = parent.pz / parent.e;
  const double b2 = bx * bx + by * by + bz * bz;
  if (b2 <= 0.0) return p;
  const double gamma = parent.e / m;
  const double bp = bx * p.px + by * p.py + bz * p.pz;
  const double k = (gamma - 1.0) * bp / b2 + gamma * p.e;
  return {gamma * (p.e + bp), p.px + k * bx, p.py + k * by, p.pz + k * bz};
}

struct Particle {
  FourVector p;
  double mass = 0.0;
};

/// Isotropic two-body decay in the parent rest frame, boosted to the lab.
std::pair<Particle, Particle> two_body(Rng& rng, const Particle& parent, double m1, double m2) {
  const double m = parent.mass;
  const double q = std::sqrt(std::max(0.0, (m * m - (m1 + m2) * (m1 + m2)) *
                                               (m * m - (m1 - m2) * (m1 - m2)))) /
                   (2.0 * m);
  const double cos_t = rng.uniform(-1.0, 1.0);
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double qx = q * sin_t * std::cos(phi);
  const double qy = q * sin_t * std::sin(phi);
  const double qz = q * cos_t;
  const FourVector d1{std::sqrt(q * q + m1 * m1), qx, qy, qz};
  const FourVector d2{std::sqrt(q * q + m2 * m2), -qx, -qy, -qz};
  return {{boost_from_rest(d1, parent.p, m), m1}, {boost_from_rest(d2, parent.p, m), m2}};
}

/// Split the heaviest particle until `n` remain. The first `hard` splits use
/// wide daughter-mass fractions, the rest narrow ones.
std::vector<Particle> cascade(Rng& rng, Particle root, std::size_t n, std::size_t hard) {
  std::vector<Particle> parts{root};
  std::size_t splits = 0;
  while (parts.size() < n) {
    const auto heaviest = std::max_element(parts.begin(), parts.end(),
                                           [](const Particle& a, const Particle& b) { return a.mass < b.mass; });
    const Particle parent = *heaviest;
    const bool is_hard = splits < hard;
    const double lo = is_hard ? 0.15 : 0.05;
    const double hi = is_hard ? 0.45 : 0.35;
    const double m1 = parent.mass * rng.uniform(lo, hi);
    const double m2 = parent.mass * rng.uniform(lo, hi);
    auto [a, b] = two_body(rng, parent, m1, m2);
    *heaviest = a;
    parts.push_back(b);
    ++splits;
  }
  return parts;
}

EventGraph make_jet(const JetGenConfig& cfg, std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::stream(seed, "generator", index);
  const int label = rng.uniform() < cfg.class_balance ? 1 : 0;
  const std::size_t n =
      cfg.min_particles + rng.below(cfg.max_particles - cfg.min_particles + 1);
  double mass = 0.0;
  if (label == 1) {
    do {
      mass = rng.normal(cfg.signal_mass, cfg.signal_width);
    } while (!(mass > 0.0));
  } else {
    mass = cfg.background_mass_scale * 0.1 - cfg.background_mass_scale * std::log(1.0 - rng.uniform());
  }
  const double u = 1.0 - rng.uniform();
  const double pmag = cfg.momentum_min * std::pow(u, -1.0 / (cfg.momentum_index - 1.0));
  const double cos_t = rng.uniform(-cfg.max_abs_cos_theta, cfg.max_abs_cos_theta);
  const double sin_t = std::sqrt(1.0 - cos_t * cos_t);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Particle root;
  root.mass = mass;
  root.p = {std::sqrt(pmag * pmag + mass * mass), pmag * sin_t * std::cos(phi),
            pmag * sin_t * std::sin(phi), pmag * cos_t};
  const std::size_t hard = label == 1 ? cfg.prongs - 1 : 0;
  const std::vector<Particle> parts = cascade(rng, root, n, hard);

  EventGraph ev;
  std::vector<double> pos;
  std::vector<double> feats;
  pos.reserve(n * 4);
  for (const Particle& p : parts) {
    pos.insert(pos.end(), {p.p.e, p.p.px, p.p.py, p.p.pz});
    feats.push_back(1.0);
  }
  ev.positions = Tensor::matrix(n, 4, std::move(pos));
  ev.node_feats = Tensor::matrix(n, 1, std::move(feats));
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) ev.edges.push_back({i, j});
  }
  ev.edge_feats = Tensor::zeros({ev.edges.size(), 0});
  ev.graph_label = label;
  return ev;
}

}  // namespace

Dataset generate_jets(const JetGenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset ds;
  ds.task = TaskKind::jet_tagging;
  ds.config = to_json(cfg);
  ds.seed = seed;
  ds.events.reserve(cfg.n_events);
  for (std::size_t k = 0; k < cfg.n_events; ++k) ds.events.push_back(make_jet(cfg, seed, k));
  ds.report = summarize(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Tracking generator

std::vector<Edge> build_proximity_edges(const Tensor& positions, std::span<const std::size_t> layer,
                                        double threshold) {
  const std::size_t n = positions.rows();
  if (layer.size() != n) throw DimensionError("one layer index per hit required");
  const std::size_t d = positions.cols();
  if (d < 2) throw DimensionError("hits need at least two coordinates");
  const double limit = (threshold + 1e-9) * (threshold + 1e-9);
  std::vector<Edge> edges;
  for (std::uint32_t a = 0; a < n; ++a) {
    for (std::uint32_t b = a + 1; b < n; ++b) {
      const std::size_t la = layer[a];
      const std::size_t lb = layer[b];
      if (la + 1 != lb && lb + 1 != la) continue;
      const double dx = positions.at(a, 0) - positions.at(b, 0);
      const double dy = positions.at(a, 1) - positions.at(b, 1);
      if (dx * dx + dy * dy <= limit) edges.push_back({a, b});
    }
  }
  return edges;
}

namespace {

struct TrackEvent {
  EventGraph graph;
  std::size_t tracks_without_edges = 0;
};

TrackEvent make_track_event(const TrackGenConfig& cfg, std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::stream(seed, "generator", index);
  const std::size_t n_tracks = cfg.min_tracks + rng.below(cfg.max_tracks - cfg.min_tracks + 1);
  const std::size_t n_layers = cfg.layer_radii.size();
  std::vector<double> phi0(n_tracks);
  std::vector<double> kappa(n_tracks);
  for (std::size_t t = 0; t < n_tracks; ++t) {
    phi0[t] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    kappa[t] = rng.uniform(-cfg.max_curvature, cfg.max_curvature);
  }
  // Nodes ordered by layer, then track.
  std::vector<double> pos;
  std::vector<double> feats;
  std::vector<std::size_t> layer;
  std::vector<std::size_t> track;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const double r = cfg.layer_radii[l];
    for (std::size_t t = 0; t < n_tracks; ++t) {
      const double angle = phi0[t] - std::asin(kappa[t] * r / 2.0);
      const double x = r * std::cos(angle) + cfg.noise_sigma * rng.normal();
      const double y = r * std::sin(angle) + cfg.noise_sigma * rng.normal();
      pos.insert(pos.end(), {x, y});
      feats.push_back(std::hypot(x, y));
      layer.push_back(l);
      track.push_back(t);
    }
  }
  const std::size_t n = layer.size();
  TrackEvent out;
  EventGraph& ev = out.graph;
  ev.positions = Tensor::matrix(n, 2, std::move(pos));
  ev.node_feats = Tensor::matrix(n, 1, std::move(feats));
  ev.edges = build_proximity_edges(ev.positions, layer, cfg.proximity_threshold);
  ev.edge_feats = Tensor::zeros({ev.edges.size(), 0});
  std::vector<int> labels;
  std::vector<bool> has_edge(n_tracks, false);
  labels.reserve(ev.edges.size());
  for (const Edge& e : ev.edges) {
    const bool same = track[e.i] == track[e.j];
    labels.push_back(same ? 1 : 0);
    if (same) has_edge[track[e.i]] = true;
  }
  ev.edge_labels = std::move(labels);
  out.tracks_without_edges =
      static_cast<std::size_t>(std::count(has_edge.begin(), has_edge.end(), false));
  return out;
}

}  // namespace

Dataset generate_tracks(const TrackGenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset ds;
  ds.task = TaskKind::tracking;
  ds.config = to_json(cfg);
  ds.seed = seed;
  ds.events.reserve(cfg.n_events);
  std::size_t orphaned = 0;
  for (std::size_t k = 0; k < cfg.n_events; ++k) {
    TrackEvent te = make_track_event(cfg, seed, k);
    orphaned += te.tracks_without_edges;
    ds.events.push_back(std::move(te.graph));
  }
  ds.report = summarize(ds);
  ds.report.tracks_without_edges = orphaned;
  return ds;
}

GenerationReport summarize(const Dataset& ds) {
  GenerationReport r;
  r.n_events = ds.events.size();
  std::size_t positives = 0;
  for (const EventGraph& e : ds.events) {
    r.n_edges += e.edges.size();
    if (e.graph_label && *e.graph_label == 1) ++positives;
    if (e.edge_labels) {
      r.n_true_edges += static_cast<std::size_t>(std::count(e.edge_labels->begin(), e.edge_labels->end(), 1));
    }
  }
  if (ds.task == TaskKind::jet_tagging && r.n_events > 0) {
    r.class_balance = static_cast<double>(positives) / static_cast<double>(r.n_events);
  }
  if (ds.task == TaskKind::tracking && r.n_edges > 0) {
    r.edge_truth_fraction = static_cast<double>(r.n_true_edges) / static_cast<double>(r.n_edges);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Augmentation and sampling

Dataset augment(const Dataset& ds, const AugmentOptions& opts, std::uint64_t seed) {
  const std::size_t d = ds.events.empty() ? 0 : ds.events.front().position_dim();
  if (!ds.events.empty()) {
    if (opts.family == GroupFamily::boost && d != 4) {
      throw DomainError("boost augmentation needs 4-vector positions, dataset has dimension " +
                        std::to_string(d));
    }
    if (opts.family == GroupFamily::rotation && d != 2 && d != 3) {
      throw DomainError("rotation augmentation needs 2- or 3-vector positions, dataset has dimension " +
                        std::to_string(d));
    }
  }
  Dataset out;
  out.task = ds.task;
  out.config = ds.config;
  out.seed = ds.seed;
  out.events.reserve(opts.supplement ? 2 * ds.events.size() : ds.events.size());
  if (opts.supplement) out.events = ds.events;
  for (std::size_t k = 0; k < ds.events.size(); ++k) {
    Rng rng = Rng::stream(seed, "augment", k);
    const GroupElement g = sample_group_element(rng, opts.family, opts.range, opts.axis);
    out.events.push_back(apply_to_event(g, ds.events[k]));
  }
  out.report = summarize(out);
  return out;
}

Dataset select(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.task = ds.task;
  out.config = ds.config;
  out.seed = ds.seed;
  out.events.reserve(indices.size());
  for (std::size_t i : indices) out.events.push_back(ds.events.at(i));
  out.report = summarize(out);
  return out;
}

Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw DomainError("subsample fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<std::vector<std::size_t>> classes(2);
  for (std::size_t k = 0; k < ds.events.size(); ++k) {
    const EventGraph& e = ds.events[k];
    const int cls = ds.task == TaskKind::jet_tagging && e.graph_label ? *e.graph_label : 0;
    classes.at(static_cast<std::size_t>(cls == 1 ? 1 : 0)).push_back(k);
  }
  if (ds.task == TaskKind::tracking) classes.resize(1);
  Rng rng = Rng::stream(seed, "subsample");
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto& idx = classes[c];
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (take < 2) {
      throw DomainError("fraction " + std::to_string(fraction) + " leaves " + std::to_string(take) +
                        " events in class " + std::to_string(c) + " (need at least 2)");
    }
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.below(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(chosen.begin(), chosen.end());
  return select(ds, chosen);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("split fraction must be in [0, 1]");
  std::vector<std::size_t> order(ds.events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, "split");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto second = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
  std::vector<std::size_t> a(order.begin(), order.end() - static_cast<std::ptrdiff_t>(second));
  std::vector<std::size_t> b(order.end() - static_cast<std::ptrdiff_t>(second), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {select(ds, a), select(ds, b)};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json matrix_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Tensor matrix_from_json(const nlohmann::json& j, std::size_t expected_rows, std::size_t cols_if_empty,
                        const char* what) {
  if (!j.is_array()) throw ConfigError(what, "expected an array of rows");
  const std::size_t rows = j.size();
  if (rows != expected_rows) throw ConfigError(what, "row count mismatch");
  if (rows == 0) return Tensor::zeros({0, cols_if_empty});
  const std::size_t cols = j.front().size();
  std::vector<double> values;
  values.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) throw ConfigError(what, "ragged rows");
    for (const auto& v : row) values.push_back(v.get<double>());
  }
  return Tensor::matrix(rows, cols, std::move(values));
}

}  // namespace

nlohmann::json to_json(const EventGraph& e) {
  nlohmann::json j;
  j["positions"] = matrix_json(e.positions);
  j["node_feats"] = matrix_json(e.node_feats);
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& edge : e.edges) edges.push_back({edge.i, edge.j});
  j["edges"] = std::move(edges);
  if (e.edge_feat_dim() > 0) j["edge_feats"] = matrix_json(e.edge_feats);
  if (e.graph_label) j["label"] = *e.graph_label;
  if (e.edge_labels) j["edge_labels"] = *e.edge_labels;
  return j;
}

EventGraph event_from_json(const nlohmann::json& j) {
  EventGraph e;
  if (!j.contains("positions") || !j.contains("node_feats") || !j.contains("edges")) {
    throw ConfigError("events[]", "event needs positions, node_feats and edges");
  }
  const std::size_t n = j.at("positions").size();
  e.positions = matrix_from_json(j.at("positions"), n, 0, "positions");
  e.node_feats = matrix_from_json(j.at("node_feats"), n, 0, "node_feats");
  for (const auto& edge : j.at("edges")) {
    if (!edge.is_array() || edge.size() != 2) throw ConfigError("edges", "expected [i, j] pairs");
    e.edges.push_back({edge[0].get<std::uint32_t>(), edge[1].get<std::uint32_t>()});
  }
  if (j.contains("edge_feats")) {
    e.edge_feats = matrix_from_json(j.at("edge_feats"), e.edges.size(), 0, "edge_feats");
  } else {
    e.edge_feats = Tensor::zeros({e.edges.size(), 0});
  }
  if (j.contains("label")) e.graph_label = j.at("label").get<int>();
  if (j.contains("edge_labels")) e.edge_labels = j.at("edge_labels").get<std::vector<int>>();
  return e;
}

nlohmann::json to_json(const Dataset& ds) {
  nlohmann::json j;
  j["schema_version"] = kDatasetSchemaVersion;
  j["task"] = to_string(ds.task);
  j["config"] = ds.config;
  j["seed"] = ds.seed;
  j["report"] = {{"n_events", ds.report.n_events},
                 {"class_balance", ds.report.class_balance},
                 {"n_edges", ds.report.n_edges},
                 {"n_true_edges", ds.report.n_true_edges},
                 {"edge_truth_fraction", ds.report.edge_truth_fraction},
                 {"tracks_without_edges", ds.report.tracks_without_edges},
                 {"synthetic", true}};
  nlohmann::json events = nlohmann::json::array();
  for (const EventGraph& e : ds.events) events.push_back(to_json(e));
  j["events"] = std::move(events);
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version")) {
    throw ConfigError("schema_version", "not a dataset document");
  }
  if (j.at("schema_version").get<int>() != kDatasetSchemaVersion) {
    throw ConfigError("schema_version", "unsupported dataset schema version " +
                                            j.at("schema_version").dump());
  }
  Dataset ds;
  ds.task = task_from_string(j.at("task").get<std::string>());
  ds.config = j.value("config", nlohmann::json::object());
  ds.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.at("events")) ds.events.push_back(event_from_json(e));
  ds.validate();
  ds.report = summarize(ds);
  if (j.contains("report")) ds.report.tracks_without_edges = j["report"].value("tracks_without_edges", std::size_t{0});
  return ds;
}

}  // namespace equibench
