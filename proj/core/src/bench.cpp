#include "equibench/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "equibench/error.hpp"
#include "equibench/io.hpp"
#include "equibench/rng.hpp"

namespace equibench {

namespace {

const std::vector<std::pair<Protocol, std::string>>& protocol_table() {
  static const std::vector<std::pair<Protocol, std::string>> t{
      {Protocol::boost_robustness, "boost_robustness"},
      {Protocol::rotation_robustness, "rotation_robustness"},
      {Protocol::data_efficiency, "data_efficiency"},
      {Protocol::ablation, "ablation"},
      {Protocol::hybrid_scan, "hybrid_scan"},
      {Protocol::certify, "certify"}};
  return t;
}

std::string axis_name(SpatialAxis a) { return std::string(1, "txyz"[static_cast<int>(a)]); }

SpatialAxis axis_from_string(const std::string& s, const std::string& field) {
  if (s == "x") return SpatialAxis::x;
  if (s == "y") return SpatialAxis::y;
  if (s == "z") return SpatialAxis::z;
  throw ConfigError(field, "axis must be x, y or z");
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return nan();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::string to_string(Protocol p) {
  for (const auto& [k, name] : protocol_table()) {
    if (k == p) return name;
  }
  return "unknown";
}

const std::vector<std::string>& protocol_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : protocol_table()) out.push_back(entry.second);
    return out;
  }();
  return names;
}

Protocol protocol_from_string(const std::string& name) {
  for (const auto& [k, n] : protocol_table()) {
    if (n == name) return k;
  }
  std::string valid;
  for (const auto& n : protocol_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("protocol", "unknown protocol '" + name + "' (valid: " + valid + ")");
}

std::string to_string(Contract c) { return c == Contract::invariance ? "invariance" : "equivariance"; }

std::vector<double> default_beta_grid() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99};
}

std::vector<double> default_theta_grid() {
  const double pi = std::numbers::pi;
  return {0.0, pi / 4, pi / 2, 3 * pi / 4, pi};
}

std::vector<double> default_fraction_grid() { return {0.005, 0.01, 0.05, 1.0}; }

std::vector<std::uint64_t> default_seeds(Protocol p, TaskKind task) {
  std::size_t n = 3;
  if (p == Protocol::data_efficiency) {
    n = 6;
  } else if (task == TaskKind::tracking) {
    n = 5;
  } else if (p == Protocol::certify) {
    n = 20;
  }
  std::vector<std::uint64_t> out(n);
  std::iota(out.begin(), out.end(), std::uint64_t{0});
  return out;
}

double default_tolerance(GroupFamily family) { return family == GroupFamily::boost ? 1e-9 : 1e-12; }

// ---------------------------------------------------------------------------
// Spec

void SweepSpec::validate(TaskKind task) const {
  if (seeds.empty()) throw ConfigError("seeds", "need at least one seed");
  if (models.empty()) throw ConfigError("models", "need at least one model");
  std::set<std::string> names;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const std::string field = "models[" + std::to_string(m) + "]";
    if (models[m].name.empty()) throw ConfigError(field + ".name", "must not be empty");
    if (models[m].name.find_first_of(",\"\n") != std::string::npos) {
      throw ConfigError(field + ".name", "must not contain commas, quotes or newlines");
    }
    if (!names.insert(models[m].name).second) throw ConfigError(field + ".name", "duplicate model name");
    if (task_for(models[m].spec.head) != task) {
      throw ConfigError(field + ".spec.head", "head '" + to_string(models[m].spec.head) +
                                                  "' does not match task " + to_string(task));
    }
  }
  train.validate();
  const bool needs_grid = protocol == Protocol::boost_robustness ||
                          protocol == Protocol::rotation_robustness ||
                          protocol == Protocol::data_efficiency;
  if (needs_grid && grid.empty()) throw ConfigError("grid", "must not be empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const std::string field = "grid[" + std::to_string(k) + "]";
    const double v = grid[k];
    if (!std::isfinite(v)) throw ConfigError(field, "must be finite");
    if (protocol == Protocol::boost_robustness && !(std::abs(v) < 1.0)) {
      throw ConfigError(field, "beta must lie in (-1, 1)");
    }
    if (protocol == Protocol::data_efficiency && !(v > 0.0 && v <= 1.0)) {
      throw ConfigError(field, "fraction must lie in (0, 1]");
    }
  }
  switch (protocol) {
    case Protocol::boost_robustness:
      if (task != TaskKind::jet_tagging) throw ConfigError("protocol", "boost_robustness needs jet data");
      break;
    case Protocol::rotation_robustness:
      if (task != TaskKind::tracking) throw ConfigError("protocol", "rotation_robustness needs tracking data");
      break;
    case Protocol::ablation:
      if (models.size() != 2) throw ConfigError("models", "ablation needs exactly two models (eq, stripped)");
      break;
    case Protocol::hybrid_scan:
      if (models.size() != 1) throw ConfigError("models", "hybrid_scan takes one base model");
      if (width_pairs.empty()) throw ConfigError("width_pairs", "must not be empty");
      for (std::size_t k = 0; k < width_pairs.size(); ++k) {
        if (width_pairs[k].first == 0 && width_pairs[k].second == 0) {
          throw ConfigError("width_pairs[" + std::to_string(k) + "]", "widths cannot both be zero");
        }
      }
      break;
    case Protocol::certify:
      if (certify.n_samples < 1) throw ConfigError("certify.n_samples", "must be at least 1");
      if (certify.n_events < 1) throw ConfigError("certify.n_events", "must be at least 1");
      if (certify.tolerance && !(*certify.tolerance >= 0.0)) {
        throw ConfigError("certify.tolerance", "must be non-negative");
      }
      break;
    case Protocol::data_efficiency:
      break;
  }
  if (augmentation.range.lo > augmentation.range.hi) {
    throw ConfigError("augmentation", "range lo must not exceed hi");
  }
  if (augmentation.family == GroupFamily::boost &&
      (std::abs(augmentation.range.lo) >= 1.0 || std::abs(augmentation.range.hi) >= 1.0)) {
    throw ConfigError("augmentation", "boost range must lie in (-1, 1)");
  }
}

nlohmann::json to_json(const SweepSpec& s) {
  nlohmann::json models = nlohmann::json::array();
  for (const NamedModel& m : s.models) {
    models.push_back({{"name", m.name}, {"spec", to_json(m.spec)}, {"augment", m.augment}});
  }
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [eq, free] : s.width_pairs) pairs.push_back({eq, free});
  nlohmann::json certify{{"n_samples", s.certify.n_samples}, {"n_events", s.certify.n_events}};
  certify["tolerance"] = s.certify.tolerance ? nlohmann::json(*s.certify.tolerance) : nlohmann::json(nullptr);
  return {{"protocol", to_string(s.protocol)},
          {"grid", s.grid},
          {"width_pairs", pairs},
          {"seeds", s.seeds},
          {"models", models},
          {"train", to_json(s.train)},
          {"augmentation",
           {{"family", to_string(s.augmentation.family)},
            {"lo", s.augmentation.range.lo},
            {"hi", s.augmentation.range.hi},
            {"axis", axis_name(s.augmentation.axis)},
            {"supplement", s.augmentation.supplement}}},
          {"certify", certify},
          {"data_ref", s.data_ref}};
}

std::string SweepSpec::hash() const { return content_hash(to_json(*this)); }

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& prefix) {
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError(prefix + item.key(), "unknown key");
    }
  }
}

const nlohmann::json& require_object(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  return j;
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& field) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) throw ConfigError(field, "expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError(field, "expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError(field, "expected a string");
    } else {
      if (!j.is_number_unsigned()) {
        throw ConfigError(field, "expected a non-negative integer");
      }
    }
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace

SweepSpec sweep_spec_from_json(const nlohmann::json& j, TaskKind task, const std::string& prefix) {
  require_object(j, prefix.empty() ? "sweep" : prefix);
  reject_unknown(j, {"protocol", "grid", "width_pairs", "seeds", "models", "train", "augmentation", "certify", "data_ref"},
                 prefix);
  SweepSpec s;
  if (!j.contains("protocol")) throw ConfigError(prefix + "protocol", "missing");
  try {
    s.protocol = protocol_from_string(get_as<std::string>(j["protocol"], prefix + "protocol"));
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + "protocol", std::string(e.what()).substr(e.field().size() + 2));
  }
  if (task == TaskKind::tracking) {
    s.augmentation = {GroupFamily::rotation, {-std::numbers::pi, std::numbers::pi}, SpatialAxis::z, false};
  }
  if (j.contains("grid")) {
    if (!j["grid"].is_array()) throw ConfigError(prefix + "grid", "expected an array");
    for (std::size_t k = 0; k < j["grid"].size(); ++k) {
      s.grid.push_back(get_as<double>(j["grid"][k], prefix + "grid[" + std::to_string(k) + "]"));
    }
  } else if (s.protocol == Protocol::boost_robustness) {
    s.grid = default_beta_grid();
  } else if (s.protocol == Protocol::rotation_robustness) {
    s.grid = default_theta_grid();
  } else if (s.protocol == Protocol::data_efficiency) {
    s.grid = default_fraction_grid();
  }
  if (j.contains("width_pairs")) {
    const auto& wp = j["width_pairs"];
    if (!wp.is_array()) throw ConfigError(prefix + "width_pairs", "expected an array of [eq, free] pairs");
    for (std::size_t k = 0; k < wp.size(); ++k) {
      const std::string field = prefix + "width_pairs[" + std::to_string(k) + "]";
      if (!wp[k].is_array() || wp[k].size() != 2) throw ConfigError(field, "expected [eq_width, free_width]");
      s.width_pairs.emplace_back(get_as<std::size_t>(wp[k][0], field + "[0]"),
                                 get_as<std::size_t>(wp[k][1], field + "[1]"));
    }
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) throw ConfigError(prefix + "seeds", "expected an array");
    for (std::size_t k = 0; k < j["seeds"].size(); ++k) {
      s.seeds.push_back(get_as<std::uint64_t>(j["seeds"][k], prefix + "seeds[" + std::to_string(k) + "]"));
    }
  } else {
    s.seeds = default_seeds(s.protocol, task);
  }
  if (!j.contains("models") || !j["models"].is_array()) {
    throw ConfigError(prefix + "models", "expected an array of {name, spec} objects");
  }
  for (std::size_t m = 0; m < j["models"].size(); ++m) {
    const std::string field = prefix + "models[" + std::to_string(m) + "].";
    const auto& mj = require_object(j["models"][m], field.substr(0, field.size() - 1));
    reject_unknown(mj, {"name", "spec", "augment"}, field);
    NamedModel nm;
    if (!mj.contains("name")) throw ConfigError(field + "name", "missing");
    nm.name = get_as<std::string>(mj["name"], field + "name");
    if (!mj.contains("spec")) throw ConfigError(field + "spec", "missing");
    nm.spec = model_spec_from_json(mj["spec"], field + "spec.");
    if (mj.contains("augment")) nm.augment = get_as<bool>(mj["augment"], field + "augment");
    s.models.push_back(std::move(nm));
  }
  if (j.contains("train")) s.train = train_config_from_json(j["train"], prefix + "train.");
  if (j.contains("augmentation")) {
    const std::string field = prefix + "augmentation.";
    const auto& a = require_object(j["augmentation"], prefix + "augmentation");
    reject_unknown(a, {"family", "lo", "hi", "axis", "supplement"}, field);
    if (a.contains("family")) {
      try {
        s.augmentation.family = group_family_from_string(get_as<std::string>(a["family"], field + "family"));
      } catch (const Error& e) {
        throw ConfigError(field + "family", e.what());
      }
    }
    if (a.contains("lo")) s.augmentation.range.lo = get_as<double>(a["lo"], field + "lo");
    if (a.contains("hi")) s.augmentation.range.hi = get_as<double>(a["hi"], field + "hi");
    if (a.contains("axis")) {
      s.augmentation.axis = axis_from_string(get_as<std::string>(a["axis"], field + "axis"), field + "axis");
    }
    if (a.contains("supplement")) s.augmentation.supplement = get_as<bool>(a["supplement"], field + "supplement");
  }
  if (j.contains("certify")) {
    const std::string field = prefix + "certify.";
    const auto& c = require_object(j["certify"], prefix + "certify");
    reject_unknown(c, {"n_samples", "n_events", "tolerance"}, field);
    if (c.contains("n_samples")) s.certify.n_samples = get_as<std::size_t>(c["n_samples"], field + "n_samples");
    if (c.contains("n_events")) s.certify.n_events = get_as<std::size_t>(c["n_events"], field + "n_events");
    if (c.contains("tolerance") && !c["tolerance"].is_null()) {
      s.certify.tolerance = get_as<double>(c["tolerance"], field + "tolerance");
    }
  }
  if (j.contains("data_ref")) s.data_ref = j["data_ref"];
  try {
    s.validate(task);
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Building blocks

Dataset transform_dataset(const Dataset& ds, const GroupElement& g) {
  Dataset out;
  out.task = ds.task;
  out.config = ds.config;
  out.seed = ds.seed;
  out.events.reserve(ds.events.size());
  for (const EventGraph& e : ds.events) out.events.push_back(apply_to_event(g, e));
  out.report = ds.report;
  return out;
}

std::vector<RobustnessPoint> robustness_curve(const Model& model, const Dataset& test, GroupFamily family,
                                              const std::vector<double>& grid, SpatialAxis axis) {
  if (grid.empty()) throw DomainError("robustness grid is empty");
  const std::vector<double> labels = targets(test);
  const std::vector<double> reference = predict(model, test);
  std::vector<RobustnessPoint> out;
  for (double v : grid) {
    GroupElement g = family == GroupFamily::boost ? GroupElement{LorentzBoost::make(v, axis)}
                                                  : GroupElement{Rotation2D{v}};
    const std::vector<double> scores = predict(model, transform_dataset(test, g));
    RobustnessPoint p;
    p.value = v;
    p.metrics = report_from_scores(scores, labels, model.parameter_count());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      p.max_score_drift = std::max(p.max_score_drift, std::abs(scores[i] - reference[i]));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void check_ablation_pair(const ModelSpec& eq, const ModelSpec& stripped) {
  std::vector<std::string> diff = differing_fields(eq, stripped);
  diff.erase(std::remove(diff.begin(), diff.end(), "message"), diff.end());
  if (!diff.empty()) {
    std::string fields;
    for (const auto& f : diff) fields += (fields.empty() ? "" : ", ") + f;
    throw ContractError("ablation specs may differ only in message kind; also differ in: " + fields);
  }
}

CertificationReport certify(const Model& model, std::span<const EventGraph> events, Contract contract,
                            GroupFamily family, ParamRange range, std::size_t n_samples,
                            double tolerance, std::uint64_t seed, SpatialAxis axis) {
  if (n_samples < 1) throw DomainError("certify needs at least one sample");
  if (events.empty()) throw DomainError("certify needs at least one event");
  if (contract == Contract::equivariance && !model.spec().position_update) {
    throw ContractError("equivariance certification needs a model with position updates");
  }
  const std::size_t d = events.front().position_dim();
  if (family == GroupFamily::boost && d != 4) {
    throw DimensionError("boosts act on 4-vectors, events have " + std::to_string(d) + "-d positions");
  }
  if (family == GroupFamily::rotation && d != 2 && d != 3) {
    throw DimensionError("rotations act on 2-d or 3-d positions, events have " + std::to_string(d));
  }
  const TaskKind task = task_for(model.spec().head);
  std::vector<const EventGraph*> ptrs;
  for (const EventGraph& e : events) ptrs.push_back(&e);
  const GraphBatch base = GraphBatch::from_events(ptrs, task);
  const ParamView params = model.parameters().values();
  const ForwardResult ref = model.forward_detailed(base, params);

  // Row -> event index, so the worst residual can be attributed.
  std::vector<std::size_t> row_event;
  if (contract == Contract::invariance) {
    if (task == TaskKind::jet_tagging) {
      row_event.resize(events.size());
      std::iota(row_event.begin(), row_event.end(), std::size_t{0});
    } else {
      for (std::size_t e = 0; e < events.size(); ++e) row_event.insert(row_event.end(), events[e].edges.size(), e);
    }
  } else {
    row_event.assign(base.node_graph.begin(), base.node_graph.end());
  }

  CertificationReport r;
  r.contract = contract;
  r.family = family;
  r.n_samples = n_samples;
  r.tolerance = tolerance;
  Rng rng = Rng::stream(seed, "certify");
  for (std::size_t s = 0; s < n_samples; ++s) {
    const GroupElement g = sample_group_element(rng, family, range, axis);
    GraphBatch moved = base;
    moved.positions = apply_to_positions(g, base.positions);
    const ForwardResult out = model.forward_detailed(moved, params);
    Tensor lhs;
    Tensor rhs;
    if (contract == Contract::invariance) {
      lhs = out.scores;
      rhs = ref.scores;
    } else {
      lhs = out.positions.front();
      rhs = apply_to_positions(g, ref.positions.front());
    }
    const std::size_t cols = lhs.rank() == 2 ? lhs.cols() : 1;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double diff = std::abs(lhs.data()[i] - rhs.data()[i]);
      if (!(diff <= r.max_residual)) {
        r.max_residual = std::isnan(diff) ? std::numeric_limits<double>::infinity() : diff;
        r.worst_element = describe(g);
        r.worst_event = row_event[i / cols];
        if (std::isnan(diff)) break;
      }
    }
  }
  if (r.worst_element.empty()) r.worst_element = "none";
  r.passed = r.max_residual <= tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// CSV

std::string sweep_csv_header(Protocol p) {
  switch (p) {
    case Protocol::certify:
      return "model,contract,seed,n_parameters,residual,tolerance,passed,worst_element";
    case Protocol::hybrid_scan:
      return "model,point,point_value,seed,accuracy,auc,rejection_at_30,n_parameters,ant_factor_v2_x1e5,"
             "corner_deviation";
    default:
      return "model,point,point_value,seed,accuracy,auc,rejection_at_30,n_parameters,ant_factor_v2_x1e5,"
             "max_score_drift";
  }
}

std::string sweep_csv_row(Protocol p, const SweepRow& r) {
  std::ostringstream os;
  if (p == Protocol::certify) {
    os << r.model << ',' << r.contract << ',' << r.seed << ',' << r.n_parameters << ','
       << format_double(r.residual) << ',' << format_double(r.tolerance) << ',' << (r.passed ? 1 : 0) << ",\""
       << r.worst_element << '"';
  } else {
    os << r.model << ',' << r.point << ',' << format_double(r.point_value) << ',' << r.seed << ','
       << format_double(r.accuracy) << ',' << format_double(r.auc) << ',' << format_double(r.rejection) << ','
       << r.n_parameters << ',' << format_double(r.ant_factor_x1e5) << ',' << format_double(r.max_score_drift);
  }
  return os.str();
}

namespace {

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool parse_size(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return false;
  out = std::strtoull(s.c_str(), nullptr, 10);
  return true;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string row_key(const std::string& model, const std::string& point, std::uint64_t seed) {
  return model + '\x1f' + point + '\x1f' + std::to_string(seed);
}

}  // namespace

std::vector<SweepRow> parse_sweep_csv(Protocol p, const std::string& text) {
  std::vector<SweepRow> rows;
  std::istringstream in(text);
  const std::string header = sweep_csv_header(p);
  bool seen_header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) return {};
      seen_header = true;
      continue;
    }
    if (in.eof()) break;  // no trailing newline: possibly torn
    const auto c = split_csv(line);
    SweepRow r;
    std::uint64_t n = 0;
    if (p == Protocol::certify) {
      if (c.size() != 8) continue;
      r.model = c[0];
      r.contract = c[1];
      r.point = c[1];
      std::uint64_t passed = 0;
      if (!parse_size(c[2], r.seed) || !parse_size(c[3], n) || !parse_double(c[4], r.residual) ||
          !parse_double(c[5], r.tolerance) || !parse_size(c[6], passed) || passed > 1) {
        continue;
      }
      r.n_parameters = n;
      r.passed = passed == 1;
      r.worst_element = c[7];
    } else {
      if (c.size() != 10) continue;
      r.model = c[0];
      r.point = c[1];
      if (!parse_double(c[2], r.point_value) || !parse_size(c[3], r.seed) || !parse_double(c[4], r.accuracy) ||
          !parse_double(c[5], r.auc) || !parse_double(c[6], r.rejection) || !parse_size(c[7], n) ||
          !parse_double(c[8], r.ant_factor_x1e5) || !parse_double(c[9], r.max_score_drift)) {
        continue;
      }
      r.n_parameters = n;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sweep driver

namespace {

struct Unit {
  std::string model;
  std::vector<std::string> points;
  std::uint64_t seed = 0;
  std::function<std::vector<SweepRow>()> run;
};

std::string point_label(Protocol p, double v) {
  switch (p) {
    case Protocol::boost_robustness: return "beta=" + format_double(v);
    case Protocol::rotation_robustness: return "theta=" + format_double(v);
    case Protocol::data_efficiency: return "fraction=" + format_double(v);
    default: return format_double(v);
  }
}

std::string width_label(std::size_t eq, std::size_t free) {
  return "eq=" + std::to_string(eq) + " free=" + std::to_string(free);
}

SweepRow metrics_row(const std::string& model, const std::string& point, double value, std::uint64_t seed,
                     const MetricsReport& m, double drift) {
  SweepRow r;
  r.model = model;
  r.point = point;
  r.point_value = value;
  r.seed = seed;
  r.accuracy = m.accuracy;
  r.auc = m.auc;
  r.rejection = m.rejection_at_30.value;
  r.n_parameters = m.n_parameters;
  r.ant_factor_x1e5 = m.ant_factor.display;
  r.max_score_drift = drift;
  return r;
}

Model trained_model(const NamedModel& nm, ModelSpec spec, const Dataset& train_ds, const SweepSpec& sweep,
                    std::uint64_t seed) {
  spec.seed = seed;
  infer_input_dims(spec, train_ds.events.front());
  TrainConfig tc = sweep.train;
  tc.seed = seed;
  if (nm.augment) {
    const std::uint64_t aug_seed = Rng::stream(seed, "augment-train").next_u64();
    return train(Model(spec), augment(train_ds, sweep.augmentation, aug_seed), tc).model;
  }
  return train(Model(spec), train_ds, tc).model;
}

EquivariantGroup eq_group_of(const MessageKind& kind, TaskKind task) {
  if (const auto* h = std::get_if<Hybrid>(&kind)) return h->eq;
  if (std::holds_alternative<EuclidEq>(kind)) return EquivariantGroup::euclid;
  if (std::holds_alternative<LorentzEq>(kind)) return EquivariantGroup::lorentz;
  return task == TaskKind::tracking ? EquivariantGroup::euclid : EquivariantGroup::lorentz;
}

std::vector<Unit> plan_units(const SweepSpec& s, const SweepData& data) {
  std::vector<Unit> units;
  const TaskKind task = data.train.task;
  const Dataset* train_ds = &data.train;
  const Dataset* test_ds = &data.test;
  for (const NamedModel& nm : s.models) {
    switch (s.protocol) {
      case Protocol::boost_robustness:
      case Protocol::rotation_robustness:
      case Protocol::ablation: {
        for (std::uint64_t seed : s.seeds) {
          Unit u;
          u.model = nm.name;
          u.seed = seed;
          if (s.protocol == Protocol::ablation) {
            u.points = {"full"};
          } else {
            for (double v : s.grid) u.points.push_back(point_label(s.protocol, v));
          }
          u.run = [&s, &nm, train_ds, test_ds, seed] {
            const Model model = trained_model(nm, nm.spec, *train_ds, s, seed);
            std::vector<SweepRow> rows;
            if (s.protocol == Protocol::ablation) {
              const MetricsReport m = evaluate(model, *test_ds);
              rows.push_back(metrics_row(nm.name, "full", 1.0, seed, m, 0.0));
              return rows;
            }
            const GroupFamily family =
                s.protocol == Protocol::boost_robustness ? GroupFamily::boost : GroupFamily::rotation;
            for (const RobustnessPoint& p :
                 robustness_curve(model, *test_ds, family, s.grid, s.augmentation.axis)) {
              rows.push_back(metrics_row(nm.name, point_label(s.protocol, p.value), p.value, seed, p.metrics,
                                         p.max_score_drift));
            }
            return rows;
          };
          units.push_back(std::move(u));
        }
        break;
      }
      case Protocol::data_efficiency: {
        for (double f : s.grid) {
          for (std::uint64_t seed : s.seeds) {
            Unit u;
            u.model = nm.name;
            u.seed = seed;
            u.points = {point_label(s.protocol, f)};
            u.run = [&s, &nm, train_ds, test_ds, seed, f] {
              const Dataset sub = f >= 1.0 ? *train_ds : subsample(*train_ds, f, seed);
              const Model model = trained_model(nm, nm.spec, sub, s, seed);
              return std::vector<SweepRow>{
                  metrics_row(nm.name, point_label(s.protocol, f), f, seed, evaluate(model, *test_ds), 0.0)};
            };
            units.push_back(std::move(u));
          }
        }
        break;
      }
      case Protocol::hybrid_scan: {
        for (const auto& [eq, free] : s.width_pairs) {
          for (std::uint64_t seed : s.seeds) {
            Unit u;
            u.model = nm.name;
            u.seed = seed;
            u.points = {width_label(eq, free)};
            u.run = [&s, &nm, train_ds, test_ds, seed, eq = eq, free = free, task] {
              ModelSpec hs = nm.spec;
              const EquivariantGroup group = eq_group_of(nm.spec.message, task);
              hs.message = Hybrid{group, eq, free};
              const Model model = trained_model(nm, hs, *train_ds, s, seed);
              const MetricsReport m = evaluate(model, *test_ds);
              double deviation = nan();
              if (eq == 0 || free == 0) {
                ModelSpec ps = nm.spec;
                ps.hidden = eq == 0 ? free : eq;
                if (eq == 0) {
                  ps.message = Unconstrained{true};
                } else if (group == EquivariantGroup::lorentz) {
                  ps.message = LorentzEq{};
                } else {
                  ps.message = EuclidEq{};
                }
                const Model pure = trained_model(nm, ps, *train_ds, s, seed);
                const auto a = predict(model, *test_ds);
                const auto b = predict(pure, *test_ds);
                deviation = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) {
                  if (a[i] != b[i]) deviation = std::max(deviation, std::abs(a[i] - b[i]));
                  if (std::isnan(a[i]) != std::isnan(b[i])) deviation = std::numeric_limits<double>::infinity();
                }
              }
              const double frac = static_cast<double>(eq) / static_cast<double>(eq + free);
              return std::vector<SweepRow>{metrics_row(nm.name, width_label(eq, free), frac, seed, m, deviation)};
            };
            units.push_back(std::move(u));
          }
        }
        break;
      }
      case Protocol::certify: {
        for (std::uint64_t seed : s.seeds) {
          Unit u;
          u.model = nm.name;
          u.seed = seed;
          u.points = {to_string(Contract::invariance)};
          if (nm.spec.position_update) u.points.push_back(to_string(Contract::equivariance));
          u.run = [&s, &nm, test_ds, seed] {
            ModelSpec spec = nm.spec;
            spec.seed = seed;
            infer_input_dims(spec, test_ds->events.front());
            const Model model(spec);
            const std::size_t n = std::min(s.certify.n_events, test_ds->events.size());
            const std::span<const EventGraph> events(test_ds->events.data(), n);
            const double tol = s.certify.tolerance.value_or(default_tolerance(s.augmentation.family));
            std::vector<Contract> contracts{Contract::invariance};
            if (spec.position_update) contracts.push_back(Contract::equivariance);
            std::vector<SweepRow> rows;
            for (Contract c : contracts) {
              const CertificationReport rep = certify(model, events, c, s.augmentation.family, s.augmentation.range,
                                                      s.certify.n_samples, tol, seed, s.augmentation.axis);
              SweepRow r;
              r.model = nm.name;
              r.contract = to_string(c);
              r.point = r.contract;
              r.seed = seed;
              r.n_parameters = model.parameter_count();
              r.residual = rep.max_residual;
              r.tolerance = rep.tolerance;
              r.passed = rep.passed;
              r.worst_element = rep.worst_element;
              rows.push_back(std::move(r));
            }
            return rows;
          };
          units.push_back(std::move(u));
        }
        break;
      }
    }
  }
  return units;
}

/// Canonical position of every expected row: model order, then point order,
/// then seed order.
std::vector<std::string> canonical_keys(const SweepSpec& s, const std::vector<Unit>& units) {
  std::vector<std::string> keys;
  for (const NamedModel& nm : s.models) {
    std::vector<std::string> points;
    for (const Unit& u : units) {
      if (u.model != nm.name) continue;
      for (const auto& p : u.points) {
        if (std::find(points.begin(), points.end(), p) == points.end()) points.push_back(p);
      }
    }
    for (const auto& p : points) {
      for (std::uint64_t seed : s.seeds) keys.push_back(row_key(nm.name, p, seed));
    }
  }
  return keys;
}

nlohmann::json summarize_sweep(const SweepSpec& s, const std::vector<SweepRow>& rows) {
  nlohmann::json summary;
  summary["protocol"] = to_string(s.protocol);
  summary["spec_hash"] = s.hash();
  summary["rows"] = rows.size();
  summary["seeds"] = s.seeds;

  // Group rows by (model, point) preserving canonical order.
  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::vector<const SweepRow*>> by;
  for (const SweepRow& r : rows) {
    const auto key = std::make_pair(r.model, r.point);
    if (!by.count(key)) groups.push_back(key);
    by[key].push_back(&r);
  }

  nlohmann::json curves = nlohmann::json::array();
  for (const auto& key : groups) {
    const auto& rs = by[key];
    nlohmann::json c{{"model", key.first}, {"point", key.second}, {"n", rs.size()}};
    if (s.protocol == Protocol::certify) {
      std::size_t passed = 0;
      double worst = 0.0;
      for (const SweepRow* r : rs) {
        passed += r->passed ? 1 : 0;
        worst = std::max(worst, r->residual);
      }
      c["passed"] = passed;
      c["pass_rate"] = static_cast<double>(passed) / static_cast<double>(rs.size());
      c["max_residual"] = number_or_null(worst);
      c["tolerance"] = rs.front()->tolerance;
    } else {
      std::vector<double> acc, auc, rej, ant, drift;
      for (const SweepRow* r : rs) {
        acc.push_back(r->accuracy);
        auc.push_back(r->auc);
        rej.push_back(r->rejection);
        ant.push_back(r->ant_factor_x1e5);
        drift.push_back(r->max_score_drift);
      }
      c["point_value"] = rs.front()->point_value;
      c["n_parameters"] = rs.front()->n_parameters;
      c["accuracy_mean"] = number_or_null(mean_of(acc));
      c["accuracy_std"] = number_or_null(std_of(acc));
      c["auc_mean"] = number_or_null(mean_of(auc));
      c["auc_std"] = number_or_null(std_of(auc));
      c["rejection_mean"] = number_or_null(mean_of(rej));
      c["rejection_std"] = number_or_null(std_of(rej));
      c["ant_factor_x1e5_mean"] = number_or_null(mean_of(ant));
      const double max_drift = *std::max_element(drift.begin(), drift.end());
      c[s.protocol == Protocol::hybrid_scan ? "corner_deviation_max" : "max_score_drift"] = number_or_null(max_drift);
    }
    curves.push_back(std::move(c));
  }
  summary["curves"] = curves;

  auto curve_of = [&](const std::string& model, const std::string& point) -> const nlohmann::json* {
    for (const auto& c : curves) {
      if (c["model"] == model && c["point"] == point) return &c;
    }
    return nullptr;
  };

  if (s.protocol == Protocol::boost_robustness || s.protocol == Protocol::rotation_robustness) {
    // Accuracy drop between the first and last grid points, per model and seed.
    nlohmann::json drops = nlohmann::json::object();
    const std::string first = point_label(s.protocol, s.grid.front());
    const std::string last = point_label(s.protocol, s.grid.back());
    for (const NamedModel& nm : s.models) {
      std::vector<double> acc_drop, auc_drop;
      for (std::uint64_t seed : s.seeds) {
        const SweepRow* a = nullptr;
        const SweepRow* b = nullptr;
        for (const SweepRow& r : rows) {
          if (r.model != nm.name || r.seed != seed) continue;
          if (r.point == first) a = &r;
          if (r.point == last) b = &r;
        }
        if (a && b) {
          acc_drop.push_back(a->accuracy - b->accuracy);
          auc_drop.push_back(a->auc - b->auc);
        }
      }
      drops[nm.name] = {{"from", first},
                        {"to", last},
                        {"accuracy_drop", acc_drop},
                        {"accuracy_drop_mean", number_or_null(mean_of(acc_drop))},
                        {"auc_drop", auc_drop},
                        {"auc_drop_mean", number_or_null(mean_of(auc_drop))}};
    }
    summary["drops"] = drops;
  } else if (s.protocol == Protocol::data_efficiency) {
    nlohmann::json flags = nlohmann::json::array();
    for (const NamedModel& nm : s.models) {
      std::vector<std::pair<double, double>> pts;
      for (double f : s.grid) {
        if (const auto* c = curve_of(nm.name, point_label(s.protocol, f)); c && (*c)["auc_mean"].is_number()) {
          pts.emplace_back(f, (*c)["auc_mean"].get<double>());
        }
      }
      std::sort(pts.begin(), pts.end());
      for (std::size_t k = 1; k < pts.size(); ++k) {
        if (pts[k].second < pts[k - 1].second) {
          flags.push_back({{"model", nm.name},
                           {"from_fraction", pts[k - 1].first},
                           {"to_fraction", pts[k].first},
                           {"auc_from", pts[k - 1].second},
                           {"auc_to", pts[k].second}});
        }
      }
    }
    summary["monotonicity_violations"] = flags;
  } else if (s.protocol == Protocol::ablation) {
    const std::string& a = s.models[0].name;
    const std::string& b = s.models[1].name;
    std::vector<double> d_acc, d_auc, d_rej;
    std::size_t pa = 0, pb = 0;
    for (std::uint64_t seed : s.seeds) {
      const SweepRow* ra = nullptr;
      const SweepRow* rb = nullptr;
      for (const SweepRow& r : rows) {
        if (r.seed != seed) continue;
        if (r.model == a) ra = &r;
        if (r.model == b) rb = &r;
      }
      if (ra && rb) {
        d_acc.push_back(ra->accuracy - rb->accuracy);
        d_auc.push_back(ra->auc - rb->auc);
        d_rej.push_back(ra->rejection - rb->rejection);
        pa = ra->n_parameters;
        pb = rb->n_parameters;
      }
    }
    summary["paired"] = {{"eq_model", a},
                         {"stripped_model", b},
                         {"pairs", d_acc.size()},
                         {"accuracy_diff_mean", number_or_null(mean_of(d_acc))},
                         {"accuracy_diff_std", number_or_null(std_of(d_acc))},
                         {"auc_diff_mean", number_or_null(mean_of(d_auc))},
                         {"auc_diff_std", number_or_null(std_of(d_auc))},
                         {"rejection_diff_mean", number_or_null(mean_of(d_rej))},
                         {"rejection_diff_std", number_or_null(std_of(d_rej))},
                         {"eq_parameters", pa},
                         {"stripped_parameters", pb},
                         {"parameter_counts_equal", pa == pb}};
  } else if (s.protocol == Protocol::hybrid_scan) {
    std::string best_auc, best_ant;
    double top_auc = -1.0, top_ant = -1.0;
    bool corners_match = true;
    for (const auto& c : curves) {
      if (c["auc_mean"].is_number() && c["auc_mean"].get<double>() > top_auc) {
        top_auc = c["auc_mean"].get<double>();
        best_auc = c["point"].get<std::string>();
      }
      if (c["ant_factor_x1e5_mean"].is_number() && c["ant_factor_x1e5_mean"].get<double>() > top_ant) {
        top_ant = c["ant_factor_x1e5_mean"].get<double>();
        best_ant = c["point"].get<std::string>();
      }
    }
    for (const SweepRow& r : rows) {
      if (!std::isnan(r.max_score_drift) && r.max_score_drift != 0.0) corners_match = false;
    }
    summary["best_by_auc"] = best_auc;
    summary["best_by_ant_factor"] = best_ant;
    summary["corners_bit_identical"] = corners_match;
  } else if (s.protocol == Protocol::certify) {
    nlohmann::json verdicts = nlohmann::json::object();
    for (const auto& c : curves) {
      verdicts[c["model"].get<std::string>() + "/" + c["point"].get<std::string>()] =
          c["passed"].get<std::size_t>() == c["n"].get<std::size_t>() ? "PASS" : "FAIL";
    }
    summary["verdicts"] = verdicts;
  }
  return summary;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const SweepData& data, const SweepOptions& opts) {
  if (data.train.events.empty() && spec.protocol != Protocol::certify) {
    throw DomainError("sweep needs a non-empty training set");
  }
  if (data.test.events.empty()) throw DomainError("sweep needs a non-empty test set");
  spec.validate(data.test.task);
  if (spec.protocol == Protocol::ablation) check_ablation_pair(spec.models[0].spec, spec.models[1].spec);

  SweepResult result;
  result.spec = spec;
  const std::string stem = to_string(spec.protocol) + "-" + spec.hash();
  if (!opts.out_dir.empty()) {
    result.csv_path = opts.out_dir / (stem + ".csv");
    result.json_path = opts.out_dir / (stem + ".json");
  }

  std::vector<Unit> units = plan_units(spec, data);
  const std::vector<std::string> keys = canonical_keys(spec, units);
  std::map<std::string, std::size_t> position;
  for (std::size_t k = 0; k < keys.size(); ++k) position[keys[k]] = k;
  std::vector<std::optional<SweepRow>> slots(keys.size());

  // Reuse rows from an interrupted run of the same spec.
  if (!result.csv_path.empty() && std::filesystem::exists(result.csv_path)) {
    for (SweepRow& r : parse_sweep_csv(spec.protocol, read_text_file(result.csv_path))) {
      const auto it = position.find(row_key(r.model, r.point, r.seed));
      if (it != position.end()) slots[it->second] = std::move(r);
    }
  }
  std::vector<std::size_t> pending;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const bool done = std::all_of(units[u].points.begin(), units[u].points.end(), [&](const std::string& p) {
      return slots[position.at(row_key(units[u].model, p, units[u].seed))].has_value();
    });
    if (done) {
      ++result.resumed_units;
    } else {
      pending.push_back(u);
    }
  }

  std::mutex mu;
  std::ofstream journal;
  if (!result.csv_path.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    std::ostringstream head;
    if (!opts.header_comment.empty()) head << "# " << opts.header_comment << "\n";
    head << sweep_csv_header(spec.protocol) << "\n";
    for (const auto& slot : slots) {
      if (slot) head << sweep_csv_row(spec.protocol, *slot) << "\n";
    }
    write_text_file(result.csv_path, head.str());
    journal.open(result.csv_path, std::ios::app);
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const Unit& unit = units[pending[k]];
      try {
        std::vector<SweepRow> rows = unit.run();
        std::lock_guard lock(mu);
        for (SweepRow& r : rows) {
          if (journal.is_open()) journal << sweep_csv_row(spec.protocol, r) << "\n";
          slots[position.at(row_key(r.model, r.point, r.seed))] = std::move(r);
        }
        if (journal.is_open()) journal.flush();
        if (opts.log) {
          opts.log(to_string(spec.protocol) + ": done model=" + unit.model + " point=" +
                   (unit.points.size() == 1 ? unit.points.front() : std::to_string(unit.points.size()) + " points") +
                   " seed=" + std::to_string(unit.seed));
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, pending.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (journal.is_open()) journal.close();
  if (failure) std::rethrow_exception(failure);

  for (auto& slot : slots) {
    if (!slot) throw ContractError("sweep finished with a missing row");
    result.rows.push_back(std::move(*slot));
  }
  result.summary = summarize_sweep(spec, result.rows);
  result.summary["spec"] = to_json(spec);
  if (!result.csv_path.empty()) {
    std::ostringstream csv;
    if (!opts.header_comment.empty()) csv << "# " << opts.header_comment << "\n";
    csv << sweep_csv_header(spec.protocol) << "\n";
    for (const SweepRow& r : result.rows) csv << sweep_csv_row(spec.protocol, r) << "\n";
    write_text_file(result.csv_path, csv.str());
    write_json_file(result.json_path, result.summary);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : "inf";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

double json_num(const nlohmann::json& j) { return j.is_number() ? j.get<double>() : nan(); }

}  // namespace

std::string format_sweep_table(const SweepResult& res) {
  const SweepSpec& s = res.spec;
  const auto& curves = res.summary.at("curves");
  std::ostringstream os;
  os << to_string(s.protocol) << " (" << res.rows.size() << " rows, " << s.seeds.size() << " seeds)\n";
  if (s.protocol == Protocol::certify) {
    os << pad("model", 18) << pad("contract", 14) << pad("passed", 10) << pad("max residual", 26) << "verdict\n";
    for (const auto& c : curves) {
      const bool pass = c["passed"].get<std::size_t>() == c["n"].get<std::size_t>();
      std::ostringstream tol;
      tol << c["tolerance"].get<double>();
      os << pad(c["model"].get<std::string>(), 18) << pad(c["point"].get<std::string>(), 14)
         << pad(std::to_string(c["passed"].get<std::size_t>()) + "/" + std::to_string(c["n"].get<std::size_t>()), 10)
         << pad(format_double(json_num(c["max_residual"])), 26) << (pass ? "PASS" : "FAIL") << " tol=" << tol.str()
         << "\n";
    }
    return os.str();
  }
  if (s.protocol == Protocol::data_efficiency) {
    // One row per model, one column group per fraction.
    os << pad("model", 18);
    for (double f : s.grid) os << pad(fixed(100.0 * f, 1) + "% acc", 20) << pad("auc", 18) << pad("1/eB", 18);
    os << "\n";
    for (const NamedModel& nm : s.models) {
      os << pad(nm.name, 18);
      for (double f : s.grid) {
        const nlohmann::json* c = nullptr;
        for (const auto& x : curves) {
          if (x["model"] == nm.name && x["point"] == point_label(s.protocol, f)) c = &x;
        }
        if (!c) {
          os << pad("-", 56);
          continue;
        }
        os << pad(fixed(json_num((*c)["accuracy_mean"]), 4) + "+-" + fixed(json_num((*c)["accuracy_std"]), 4), 20)
           << pad(fixed(json_num((*c)["auc_mean"]), 4) + "+-" + fixed(json_num((*c)["auc_std"]), 4), 18)
           << pad(fixed(json_num((*c)["rejection_mean"]), 1) + "+-" + fixed(json_num((*c)["rejection_std"]), 1), 18);
      }
      os << "\n";
    }
    return os.str();
  }
  std::size_t model_w = 18, point_w = 16;
  for (const auto& c : curves) {
    model_w = std::max(model_w, c["model"].get<std::string>().size() + 2);
    point_w = std::max(point_w, c["point"].get<std::string>().size() + 2);
  }
  os << pad("model", model_w) << pad("point", point_w) << pad("accuracy", 20) << pad("auc", 20) << pad("1/eB", 18)
     << pad("params", 8) << pad("ant x1e5", 12) << (s.protocol == Protocol::hybrid_scan ? "corner dev" : "max drift")
     << "\n";
  for (const auto& c : curves) {
    const std::string drift_key = s.protocol == Protocol::hybrid_scan ? "corner_deviation_max" : "max_score_drift";
    os << pad(c["model"].get<std::string>(), model_w) << pad(c["point"].get<std::string>(), point_w)
       << pad(fixed(json_num(c["accuracy_mean"]), 4) + "+-" + fixed(json_num(c["accuracy_std"]), 4), 20)
       << pad(fixed(json_num(c["auc_mean"]), 4) + "+-" + fixed(json_num(c["auc_std"]), 4), 20)
       << pad(fixed(json_num(c["rejection_mean"]), 1) + "+-" + fixed(json_num(c["rejection_std"]), 1), 18)
       << pad(std::to_string(c["n_parameters"].get<std::size_t>()), 8)
       << pad(fixed(json_num(c["ant_factor_x1e5_mean"]), 0), 12)
       << (c[drift_key].is_null() ? std::string("-") : format_double(c[drift_key].get<double>())) << "\n";
  }
  if (s.protocol == Protocol::hybrid_scan) {
    os << "best by auc: " << res.summary["best_by_auc"].get<std::string>()
       << "; best by ant factor: " << res.summary["best_by_ant_factor"].get<std::string>()
       << "; corners bit-identical: " << (res.summary["corners_bit_identical"].get<bool>() ? "yes" : "no") << "\n";
  }
  if (res.summary.contains("paired")) {
    const auto& p = res.summary["paired"];
    os << "paired difference (" << p["eq_model"].get<std::string>() << " - " << p["stripped_model"].get<std::string>()
       << ", " << p["pairs"].get<std::size_t>() << " seeds): accuracy " << fixed(json_num(p["accuracy_diff_mean"]), 4)
       << "+-" << fixed(json_num(p["accuracy_diff_std"]), 4) << ", auc " << fixed(json_num(p["auc_diff_mean"]), 4)
       << "+-" << fixed(json_num(p["auc_diff_std"]), 4) << "; parameters " << p["eq_parameters"].get<std::size_t>()
       << " vs " << p["stripped_parameters"].get<std::size_t>()
       << (p["parameter_counts_equal"].get<bool>() ? "" : " (unequal)") << "\n";
  }
  if (res.summary.contains("drops")) {
    for (const auto& [name, d] : res.summary["drops"].items()) {
      os << "accuracy drop " << name << " (" << d["from"].get<std::string>() << " -> " << d["to"].get<std::string>()
         << "): " << fixed(json_num(d["accuracy_drop_mean"]), 4) << "\n";
    }
  }
  return os.str();
}

}  // namespace equibench
