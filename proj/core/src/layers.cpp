#include "equibench/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "equibench/error.hpp"

namespace equibench {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("activation", "unknown activation '" + name + "'");
}

Tensor activate(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

std::size_t MLPSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) n += widths[k] * widths[k + 1] + widths[k + 1];
  return n;
}

void MLPSpec::validate() const {
  if (widths.size() < 2) throw ContractError("an MLP needs an input and an output width");
  // Zero-width inputs are legal (e.g. an unconstrained message over
  // featureless nodes); every layer output must be at least 1 wide.
  for (std::size_t k = 1; k < widths.size(); ++k) {
    if (widths[k] == 0) throw ContractError("MLP layer widths must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// ParameterStore / Mlp

std::size_t ParameterStore::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

std::vector<double> ParameterStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const Tensor& t : values_) flat.insert(flat.end(), t.data().begin(), t.data().end());
  return flat;
}

void ParameterStore::assign_flat(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw DimensionError("expected " + std::to_string(scalar_count()) + " parameters, got " +
                         std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (Tensor& t : values_) {
    auto d = t.mutable_data();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), d.size(), d.begin());
    offset += d.size();
  }
}

Mlp Mlp::create(const MLPSpec& spec, ParameterStore& store, const std::string& name, Rng& rng) {
  spec.validate();
  Mlp mlp;
  mlp.spec_ = spec;
  for (std::size_t k = 0; k + 1 < spec.widths.size(); ++k) {
    const std::size_t in = spec.widths[k];
    const std::size_t out = spec.widths[k + 1];
    const double bound = in > 0 ? 1.0 / std::sqrt(static_cast<double>(in)) : 1.0;
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    std::vector<double> b(out);
    for (double& v : b) v = rng.uniform(-bound, bound);
    const std::string prefix = name + "." + std::to_string(k);
    mlp.weights_.push_back(store.add(prefix + ".w", Tensor::matrix(in, out, std::move(w))));
    mlp.biases_.push_back(store.add(prefix + ".b", Tensor::matrix(1, out, std::move(b))));
  }
  return mlp;
}

Tensor Mlp::operator()(const Tensor& input, ParamView params) const {
  if (input.rank() != 2 || input.cols() != spec_.input_width()) {
    throw DimensionError("MLP expects width " + std::to_string(spec_.input_width()) + ", got " +
                         shape_string(input.shape()));
  }
  Tensor x = input;
  const std::size_t layers = weights_.size();
  for (std::size_t k = 0; k < layers; ++k) {
    x = add(matmul(x, params[weights_[k]]), params[biases_[k]]);
    if (k + 1 < layers || spec_.activate_final) x = activate(spec_.activation, x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Specs and JSON

std::string kind_name(const MessageKind& kind) {
  struct Visitor {
    std::string operator()(const Unconstrained& u) const {
      return u.position_leak ? "unconstrained" : "unconstrained(no-leak)";
    }
    std::string operator()(const LorentzEq&) const { return "lorentz"; }
    std::string operator()(const EuclidEq&) const { return "euclid"; }
    std::string operator()(const Hybrid& h) const {
      return std::string("hybrid(") + (h.eq == EquivariantGroup::lorentz ? "lorentz" : "euclid") +
             "," + std::to_string(h.eq_width) + "," + std::to_string(h.free_width) + ")";
    }
  };
  return std::visit(Visitor{}, kind);
}

std::string to_string(HeadKind head) {
  return head == HeadKind::graph_pool_classifier ? "graph" : "edge";
}

HeadKind head_from_string(const std::string& name) {
  if (name == "graph" || name == "graph_pool_classifier") return HeadKind::graph_pool_classifier;
  if (name == "edge" || name == "edge_classifier") return HeadKind::edge_classifier;
  throw ConfigError("head", "unknown head '" + name + "' (expected graph or edge)");
}

TaskKind task_for(HeadKind head) {
  return head == HeadKind::graph_pool_classifier ? TaskKind::jet_tagging : TaskKind::tracking;
}

namespace {

std::vector<ChannelSpec> derive_channels(const ModelSpec& spec) {
  struct Visitor {
    const ModelSpec& spec;
    std::vector<ChannelSpec> operator()(const Unconstrained& u) const {
      return {{"free", ChannelKind::unconstrained, u.position_leak, spec.hidden}};
    }
    std::vector<ChannelSpec> operator()(const LorentzEq&) const {
      return {{"eq", ChannelKind::lorentz, false, spec.hidden}};
    }
    std::vector<ChannelSpec> operator()(const EuclidEq&) const {
      return {{"eq", ChannelKind::euclid, false, spec.hidden}};
    }
    std::vector<ChannelSpec> operator()(const Hybrid& h) const {
      std::vector<ChannelSpec> out;
      if (h.eq_width > 0) {
        out.push_back({"eq",
                       h.eq == EquivariantGroup::lorentz ? ChannelKind::lorentz : ChannelKind::euclid,
                       false, h.eq_width});
      }
      if (h.free_width > 0) out.push_back({"free", ChannelKind::unconstrained, true, h.free_width});
      return out;
    }
  };
  return std::visit(Visitor{spec}, spec.message);
}

}  // namespace

void ModelSpec::validate() const {
  if (const auto* h = std::get_if<Hybrid>(&message); h && h->eq_width == 0 && h->free_width == 0) {
    throw ConfigError("message", "hybrid widths cannot both be zero");
  }
  if (!std::holds_alternative<Hybrid>(message) && hidden == 0) {
    throw ConfigError("hidden", "must be at least 1");
  }
  if (rounds == 0) throw ConfigError("rounds", "must be at least 1");
  for (const ChannelSpec& c : derive_channels(*this)) {
    if (c.kind == ChannelKind::lorentz && input.position_dim != 4) {
      throw ConfigError("input.position_dim", "Lorentz messages need 4-vector positions");
    }
    if (c.kind == ChannelKind::euclid && input.position_dim != 2 && input.position_dim != 3) {
      throw ConfigError("input.position_dim", "Euclidean messages need 2- or 3-vector positions");
    }
  }
  if (!std::isfinite(c_init)) throw ConfigError("c_init", "must be finite");
}

nlohmann::json to_json(const MessageKind& kind) {
  struct Visitor {
    nlohmann::json operator()(const Unconstrained& u) const {
      return {{"kind", "unconstrained"}, {"position_leak", u.position_leak}};
    }
    nlohmann::json operator()(const LorentzEq&) const { return {{"kind", "lorentz"}}; }
    nlohmann::json operator()(const EuclidEq&) const { return {{"kind", "euclid"}}; }
    nlohmann::json operator()(const Hybrid& h) const {
      return {{"kind", "hybrid"},
              {"eq", h.eq == EquivariantGroup::lorentz ? "lorentz" : "euclid"},
              {"eq_width", h.eq_width},
              {"free_width", h.free_width}};
    }
  };
  return std::visit(Visitor{}, kind);
}

MessageKind message_kind_from_json(const nlohmann::json& j, const std::string& prefix) {
  const std::string field = prefix + "message";
  std::string kind;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object() && j.contains("kind") && j["kind"].is_string()) {
    kind = j["kind"].get<std::string>();
  } else {
    throw ConfigError(field, "expected a kind name or an object with a 'kind' key");
  }
  const nlohmann::json obj = j.is_object() ? j : nlohmann::json::object();
  if (kind == "lorentz") return LorentzEq{};
  if (kind == "euclid") return EuclidEq{};
  if (kind == "unconstrained") {
    const auto leak = obj.value("position_leak", true);
    return Unconstrained{leak};
  }
  if (kind == "hybrid") {
    Hybrid h;
    const std::string eq = obj.value("eq", std::string("lorentz"));
    if (eq == "lorentz") {
      h.eq = EquivariantGroup::lorentz;
    } else if (eq == "euclid") {
      h.eq = EquivariantGroup::euclid;
    } else {
      throw ConfigError(field + ".eq", "expected lorentz or euclid");
    }
    for (const char* key : {"eq_width", "free_width"}) {
      if (!obj.contains(key) || !obj[key].is_number_unsigned()) {
        throw ConfigError(field + "." + key, "expected a non-negative integer");
      }
    }
    h.eq_width = obj["eq_width"].get<std::size_t>();
    h.free_width = obj["free_width"].get<std::size_t>();
    if (h.eq_width == 0 && h.free_width == 0) {
      throw ConfigError(field, "hybrid widths cannot both be zero");
    }
    return h;
  }
  throw ConfigError(field + ".kind",
                    "unknown message kind '" + kind + "' (expected unconstrained, lorentz, euclid, hybrid)");
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"message", to_json(s.message)},
          {"hidden", s.hidden},
          {"rounds", s.rounds},
          {"aggregation", to_string(s.aggregation)},
          {"head", to_string(s.head)},
          {"position_update", s.position_update},
          {"c_init", s.c_init},
          {"seed", s.seed},
          {"activation", to_string(s.activation)},
          {"input",
           {{"node_features", s.input.node_features},
            {"position_dim", s.input.position_dim},
            {"edge_features", s.input.edge_features}}}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix.empty() ? "model" : prefix, "expected an object");
  static const std::vector<std::string> known{"message",  "hidden", "rounds",     "aggregation",
                                              "head",     "position_update", "c_init", "seed",
                                              "activation", "input"};
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError(prefix + item.key(), "unknown key");
    }
  }
  ModelSpec s;
  auto count = [&](const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned()) {
      throw ConfigError(prefix + key, "expected a non-negative integer");
    }
    out = j[key].get<std::size_t>();
  };
  if (j.contains("message")) s.message = message_kind_from_json(j["message"], prefix);
  count("hidden", s.hidden);
  count("rounds", s.rounds);
  try {
    if (j.contains("aggregation")) s.aggregation = reduce_op_from_string(j["aggregation"].get<std::string>());
    if (j.contains("head")) s.head = head_from_string(j["head"].get<std::string>());
    if (j.contains("activation")) s.activation = activation_from_string(j["activation"].get<std::string>());
    if (j.contains("position_update")) s.position_update = j["position_update"].get<bool>();
    if (j.contains("c_init")) s.c_init = j["c_init"].get<double>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  } catch (const DomainError& e) {
    throw ConfigError(prefix + "aggregation", e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(prefix.empty() ? "model" : prefix, std::string("wrong value type: ") + e.what());
  }
  if (j.contains("input")) {
    const auto& in = j["input"];
    if (!in.is_object()) throw ConfigError(prefix + "input", "expected an object");
    s.input.node_features = in.value("node_features", s.input.node_features);
    s.input.position_dim = in.value("position_dim", s.input.position_dim);
    s.input.edge_features = in.value("edge_features", s.input.edge_features);
  }
  return s;
}

std::vector<std::string> differing_fields(const ModelSpec& a, const ModelSpec& b) {
  const nlohmann::json ja = to_json(a);
  const nlohmann::json jb = to_json(b);
  std::vector<std::string> out;
  for (const auto& item : ja.items()) {
    if (!jb.contains(item.key()) || jb[item.key()] != item.value()) out.push_back(item.key());
  }
  return out;
}

void infer_input_dims(ModelSpec& spec, const EventGraph& sample) {
  spec.input.node_features = sample.node_feat_dim();
  spec.input.position_dim = sample.position_dim();
  spec.input.edge_features = sample.edge_feat_dim();
}

// ---------------------------------------------------------------------------
// GraphBatch

GraphBatch GraphBatch::from_events(std::span<const EventGraph* const> events, TaskKind task) {
  if (events.empty()) throw DomainError("cannot batch zero events");
  GraphBatch b;
  b.task = task;
  b.num_graphs = events.size();
  const std::size_t d = events.front()->position_dim();
  const std::size_t f = events.front()->node_feat_dim();
  const std::size_t k = events.front()->edge_feat_dim();
  std::vector<double> pos;
  std::vector<double> feats;
  std::vector<double> efeats;
  struct Directed {
    std::uint32_t recv;
    std::uint32_t send;
    std::uint32_t edge;
  };
  std::vector<Directed> directed;
  std::uint32_t offset = 0;
  for (std::size_t g = 0; g < events.size(); ++g) {
    const EventGraph& e = *events[g];
    if (e.position_dim() != d || e.node_feat_dim() != f || e.edge_feat_dim() != k) {
      throw DimensionError("events in a batch disagree on feature dimensionality");
    }
    if (task == TaskKind::jet_tagging) {
      if (!e.graph_label) throw ContractError("graph head needs events with a graph label");
      b.targets.push_back(static_cast<double>(*e.graph_label));
    } else {
      if (!e.edge_labels) throw ContractError("edge head needs events with edge labels");
      for (int l : *e.edge_labels) b.targets.push_back(static_cast<double>(l));
    }
    pos.insert(pos.end(), e.positions.data().begin(), e.positions.data().end());
    feats.insert(feats.end(), e.node_feats.data().begin(), e.node_feats.data().end());
    efeats.insert(efeats.end(), e.edge_feats.data().begin(), e.edge_feats.data().end());
    const std::size_t n = e.num_nodes();
    for (std::size_t i = 0; i < n; ++i) b.node_graph.push_back(static_cast<std::uint32_t>(g));
    for (const Edge& edge : e.edges) {
      if (edge.i >= n || edge.j >= n) throw DimensionError("edge index out of range");
      const auto id = static_cast<std::uint32_t>(b.edge_i.size());
      b.edge_i.push_back(offset + edge.i);
      b.edge_j.push_back(offset + edge.j);
      directed.push_back({offset + edge.i, offset + edge.j, id});
      directed.push_back({offset + edge.j, offset + edge.i, id});
    }
    offset += static_cast<std::uint32_t>(n);
  }
  std::stable_sort(directed.begin(), directed.end(), [](const Directed& x, const Directed& y) {
    return x.recv != y.recv ? x.recv < y.recv : x.send < y.send;
  });
  for (const Directed& m : directed) {
    b.receivers.push_back(m.recv);
    b.senders.push_back(m.send);
    b.directed_edge.push_back(m.edge);
  }
  const std::size_t n = b.node_graph.size();
  b.positions = Tensor::matrix(n, d, std::move(pos));
  b.node_feats = Tensor::matrix(n, f, std::move(feats));
  b.edge_feats = Tensor::matrix(b.edge_i.size(), k, std::move(efeats));
  return b;
}

GraphBatch GraphBatch::from_event(const EventGraph& event, TaskKind task) {
  const EventGraph* one[] = {&event};
  return from_events(one, task);
}

// ---------------------------------------------------------------------------
// Layer primitives

namespace {

Tensor column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor::matrix(n, 1, std::move(values));
}

Tensor metric_column() { return column({1.0, -1.0, -1.0, -1.0}); }

void require_same_rows(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw DimensionError(std::string(what) + ": row mismatch between " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
}

}  // namespace

Tensor lorentz_invariants(const Tensor& x_i, const Tensor& x_j) {
  require_same_rows(x_i, x_j, "lorentz_invariants");
  if (x_i.cols() != 4 || x_j.cols() != 4) {
    throw DimensionError("Lorentz messages need 4-vectors, got " + shape_string(x_i.shape()) +
                         " and " + shape_string(x_j.shape()));
  }
  const Tensor metric = metric_column();
  const Tensor diff = sub(x_i, x_j);
  const Tensor interval = matmul(mul(diff, diff), metric);
  const Tensor dot = matmul(mul(x_i, x_j), metric);
  return concat_cols({interval, dot});
}

Tensor euclid_invariants(const Tensor& x_i, const Tensor& x_j) {
  require_same_rows(x_i, x_j, "euclid_invariants");
  if (x_i.cols() != x_j.cols() || (x_i.cols() != 2 && x_i.cols() != 3)) {
    throw DimensionError("Euclidean messages need 2- or 3-vectors, got " + shape_string(x_i.shape()) +
                         " and " + shape_string(x_j.shape()));
  }
  const Tensor diff = sub(x_i, x_j);
  return matmul(mul(diff, diff), Tensor::full({x_i.cols(), 1}, 1.0));
}

Tensor message_unconstrained(const Tensor& h_i, const Tensor& h_j, const Tensor& e_ij,
                             const Tensor& x_i, const Tensor& x_j, bool position_leak,
                             const Mlp& phi, ParamView params) {
  std::vector<Tensor> parts{h_i, h_j, e_ij};
  if (position_leak) {
    parts.push_back(x_i);
    parts.push_back(x_j);
  }
  return phi(concat_cols(parts), params);
}

Tensor message_lorentz(const Tensor& h_i, const Tensor& h_j, const Tensor& x_i, const Tensor& x_j,
                       const Mlp& phi, ParamView params) {
  return phi(concat_cols({h_i, h_j, signed_log1p(lorentz_invariants(x_i, x_j))}), params);
}

Tensor message_euclid(const Tensor& h_i, const Tensor& h_j, const Tensor& x_i, const Tensor& x_j,
                      const Mlp& phi, ParamView params) {
  return phi(concat_cols({h_i, h_j, euclid_invariants(x_i, x_j)}), params);
}

Tensor aggregate(ReduceOp op, const Tensor& messages, std::span<const std::uint32_t> receivers,
                 std::size_t num_nodes) {
  return segment_reduce(op, messages, receivers, num_nodes);
}

Tensor node_update(const Tensor& h, const Tensor& aggregated, const Mlp& psi, ParamView params) {
  return psi(concat_cols({h, aggregated}), params);
}

Tensor position_update(const Tensor& x, std::span<const std::uint32_t> senders,
                       std::span<const std::uint32_t> receivers, const Tensor& messages,
                       const Mlp& phi_x, const Tensor& c, ParamView params) {
  if (senders.size() != receivers.size() || messages.rows() != senders.size()) {
    throw DimensionError("position_update: one message per directed edge required");
  }
  if (c.size() != 1) throw DimensionError("position_update: C must be a single scalar");
  const Tensor gate = phi_x(messages, params);
  if (gate.cols() != 1) throw DimensionError("position_update: phi_x must emit one scalar per message");
  const Tensor x_j = gather_rows(x, senders);
  const Tensor moved = segment_reduce(ReduceOp::sum, mul(gate, x_j), receivers, x.rows());
  return add(x, mul(c.rank() == 2 ? c : Tensor::matrix(1, 1, {c.item()}), moved));
}

// ---------------------------------------------------------------------------
// Model

std::size_t Model::edge_input_width(const ChannelSpec& c) const {
  switch (c.kind) {
    case ChannelKind::lorentz: return 2;
    case ChannelKind::euclid: return 1;
    case ChannelKind::unconstrained:
      return spec_.input.edge_features + (c.position_leak ? 2 * spec_.input.position_dim : 0);
  }
  return 0;
}

Tensor Model::edge_inputs(const ChannelSpec& c, const Tensor& x_i, const Tensor& x_j,
                          const Tensor& e_ij) const {
  switch (c.kind) {
    case ChannelKind::lorentz: return signed_log1p(lorentz_invariants(x_i, x_j));
    case ChannelKind::euclid: return euclid_invariants(x_i, x_j);
    case ChannelKind::unconstrained:
      if (c.position_leak) return concat_cols({e_ij, x_i, x_j});
      return e_ij;
  }
  return e_ij;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  channel_specs_ = derive_channels(spec_);
  std::size_t total_width = 0;
  std::size_t edge_head_width = 0;
  for (const ChannelSpec& cs : channel_specs_) {
    Rng rng = Rng::stream(spec_.seed, cs.name);
    Channel ch;
    ch.spec = cs;
    const std::size_t w = cs.width;
    ch.embed = Mlp::create({{spec_.input.node_features, w}, spec_.activation, false}, store_,
                           cs.name + ".embed", rng);
    const std::size_t msg_in = 2 * w + edge_input_width(cs);
    for (std::size_t r = 0; r < spec_.rounds; ++r) {
      const std::string base = cs.name + ".round" + std::to_string(r);
      Round round;
      round.phi = Mlp::create({{msg_in, w, w}, spec_.activation, true}, store_, base + ".phi", rng);
      round.psi = Mlp::create({{2 * w, w}, spec_.activation, true}, store_, base + ".psi", rng);
      if (spec_.position_update) {
        round.phi_x = Mlp::create({{w, 1}, spec_.activation, false}, store_, base + ".phi_x", rng);
        round.c = store_.add(base + ".c", Tensor::matrix(1, 1, {spec_.c_init}));
      }
      ch.rounds.push_back(std::move(round));
    }
    total_width += w;
    edge_head_width += 2 * w + edge_input_width(cs);
    channels_.push_back(std::move(ch));
  }
  Rng head_rng = Rng::stream(spec_.seed, "head");
  const std::size_t head_in =
      spec_.head == HeadKind::graph_pool_classifier ? total_width : edge_head_width;
  head_ = Mlp::create({{head_in, total_width, 1}, spec_.activation, false}, store_, "head", head_rng);
}

std::map<std::string, std::size_t> Model::parameter_breakdown() const {
  std::map<std::string, std::size_t> out;
  const auto& names = store_.names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    out[names[k].substr(0, names[k].find('.'))] += store_.values()[k].size();
  }
  return out;
}

ForwardResult Model::forward_detailed(const GraphBatch& batch, ParamView params) const {
  if (batch.task != task_for(spec_.head)) {
    throw ContractError("model head '" + to_string(spec_.head) + "' cannot score a " +
                        to_string(batch.task) + " batch");
  }
  if (params.size() != store_.size()) throw ContractError("parameter view does not match the model");
  if (batch.positions.cols() != spec_.input.position_dim ||
      batch.node_feats.cols() != spec_.input.node_features ||
      batch.edge_feats.cols() != spec_.input.edge_features) {
    throw DimensionError("batch dimensions do not match the model input dimensions");
  }
  const std::size_t n = batch.num_nodes();
  ForwardResult result;
  std::vector<Tensor> head_parts;
  const Tensor e_dir = gather_rows(batch.edge_feats, batch.directed_edge);
  for (const Channel& ch : channels_) {
    Tensor h = ch.embed(batch.node_feats, params);
    Tensor x = batch.positions;
    for (const Round& round : ch.rounds) {
      const Tensor h_i = gather_rows(h, batch.receivers);
      const Tensor h_j = gather_rows(h, batch.senders);
      const Tensor x_i = gather_rows(x, batch.receivers);
      const Tensor x_j = gather_rows(x, batch.senders);
      Tensor m;
      switch (ch.spec.kind) {
        case ChannelKind::lorentz: m = message_lorentz(h_i, h_j, x_i, x_j, round.phi, params); break;
        case ChannelKind::euclid: m = message_euclid(h_i, h_j, x_i, x_j, round.phi, params); break;
        case ChannelKind::unconstrained:
          m = message_unconstrained(h_i, h_j, e_dir, x_i, x_j, ch.spec.position_leak, round.phi, params);
          break;
      }
      const Tensor agg = aggregate(spec_.aggregation, m, batch.receivers, n);
      if (spec_.position_update) {
        x = position_update(x, batch.senders, batch.receivers, m, round.phi_x, params[round.c], params);
      }
      h = node_update(h, agg, round.psi, params);
    }
    if (spec_.head == HeadKind::graph_pool_classifier) {
      head_parts.push_back(segment_reduce(ReduceOp::mean, h, batch.node_graph, batch.num_graphs));
    } else {
      const Tensor x_i = gather_rows(x, batch.edge_i);
      const Tensor x_j = gather_rows(x, batch.edge_j);
      head_parts.push_back(gather_rows(h, batch.edge_i));
      head_parts.push_back(gather_rows(h, batch.edge_j));
      head_parts.push_back(edge_inputs(ch.spec, x_i, x_j, batch.edge_feats));
    }
    result.positions.push_back(x);
    result.channels.push_back(ch.spec.name);
  }
  result.scores = head_(concat_cols(head_parts), params);
  return result;
}

Tensor Model::forward(const GraphBatch& batch, ParamView params) const {
  return forward_detailed(batch, params).scores;
}

Tensor Model::forward(const GraphBatch& batch) const { return forward(batch, store_.values()); }

std::vector<double> Model::scores(const EventGraph& event) const {
  const Tensor s = forward(GraphBatch::from_event(event, task_for(spec_.head)));
  return {s.data().begin(), s.data().end()};
}

Tensor Model::updated_positions(const EventGraph& event) const {
  if (!spec_.position_update) {
    throw ContractError("position updates are disabled in this model spec");
  }
  return forward_detailed(GraphBatch::from_event(event, task_for(spec_.head)), store_.values())
      .positions.front();
}

std::size_t count_parameters(const Model& model) { return model.parameter_count(); }

nlohmann::json checkpoint_json(const Model& model) {
  return {{"model_spec", to_json(model.spec())},
          {"seed", model.spec().seed},
          {"parameters", model.parameters().flatten()},
          {"parameter_count", model.parameter_count()}};
}

Model model_from_checkpoint(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("model_spec") || !j.contains("parameters")) {
    throw ConfigError("checkpoint", "missing model_spec or parameters");
  }
  Model model(model_spec_from_json(j.at("model_spec"), "model_spec."));
  const auto flat = j.at("parameters").get<std::vector<double>>();
  model.parameters().assign_flat(flat);
  if (j.contains("parameter_count") && j.at("parameter_count").get<std::size_t>() != model.parameter_count()) {
    throw ConfigError("parameter_count", "does not match the rebuilt model");
  }
  return model;
}

}  // namespace equibench
