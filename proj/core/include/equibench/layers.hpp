#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "equibench/event_graph.hpp"
#include "equibench/rng.hpp"
#include "equibench/tensor.hpp"

namespace equibench {

enum class Activation { identity, relu, sigmoid, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);
Tensor activate(Activation a, const Tensor& x);

/// Fully connected stack. `widths` includes the input width, so {4, 8}
/// is a single 4 -> 8 dense layer.
struct MLPSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::tanh;
  bool activate_final = false;

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  /// Sum over layers of in*out + out.
  std::size_t parameter_count() const;
  void validate() const;
};

/// Named learnable tensors in creation order.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value);

  std::span<const Tensor> values() const { return values_; }
  std::vector<Tensor>& mutable_values() { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return values_.size(); }
  /// Total number of learnable scalars.
  std::size_t scalar_count() const;

  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Parameters as seen by a forward pass: either the stored tensors or their
/// tape-attached copies during training.
using ParamView = std::span<const Tensor>;

class Mlp {
 public:
  Mlp() = default;
  /// Registers weights `<name>.<k>.w` / `<name>.<k>.b`, initialised uniform in
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)] from `rng`.
  static Mlp create(const MLPSpec& spec, ParameterStore& store, const std::string& name, Rng& rng);

  Tensor operator()(const Tensor& input, ParamView params) const;
  const MLPSpec& spec() const { return spec_; }

 private:
  MLPSpec spec_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

// ---------------------------------------------------------------------------
// Message kinds

struct Unconstrained {
  /// Concatenate raw positions into the message input (the non-equivariant
  /// baseline). Without it the model never sees coordinates.
  bool position_leak = true;
  friend bool operator==(const Unconstrained&, const Unconstrained&) = default;
};
struct LorentzEq {
  friend bool operator==(const LorentzEq&, const LorentzEq&) = default;
};
struct EuclidEq {
  friend bool operator==(const EuclidEq&, const EuclidEq&) = default;
};

enum class EquivariantGroup { lorentz, euclid };

/// Parallel equivariant and unconstrained (position-leaking) channels merged
/// at the head input.
struct Hybrid {
  EquivariantGroup eq = EquivariantGroup::lorentz;
  std::size_t eq_width = 0;
  std::size_t free_width = 0;
  friend bool operator==(const Hybrid&, const Hybrid&) = default;
};

using MessageKind = std::variant<Unconstrained, LorentzEq, EuclidEq, Hybrid>;

std::string kind_name(const MessageKind& kind);

enum class HeadKind { graph_pool_classifier, edge_classifier };

std::string to_string(HeadKind head);
HeadKind head_from_string(const std::string& name);
TaskKind task_for(HeadKind head);

struct InputDims {
  std::size_t node_features = 1;
  std::size_t position_dim = 4;
  std::size_t edge_features = 0;
  friend bool operator==(const InputDims&, const InputDims&) = default;
};

/// Everything needed to rebuild a model bit-for-bit.
struct ModelSpec {
  MessageKind message = LorentzEq{};
  std::size_t hidden = 8;
  std::size_t rounds = 2;
  ReduceOp aggregation = ReduceOp::sum;
  HeadKind head = HeadKind::graph_pool_classifier;
  bool position_update = false;
  double c_init = 0.1;
  std::uint64_t seed = 0;
  Activation activation = Activation::tanh;
  InputDims input{};

  void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& prefix = "");
nlohmann::json to_json(const MessageKind& kind);
MessageKind message_kind_from_json(const nlohmann::json& j, const std::string& prefix = "");

/// Top-level ModelSpec fields whose values differ.
std::vector<std::string> differing_fields(const ModelSpec& a, const ModelSpec& b);

/// Fill `spec.input` from the first event of a dataset-like sample.
void infer_input_dims(ModelSpec& spec, const EventGraph& sample);

// ---------------------------------------------------------------------------
// Batched graph view

/// Several events merged into one disjoint graph. Every undirected edge
/// (i, j) becomes two directed messages, sorted by (receiver, sender) so that
/// neighbours are aggregated in ascending index order.
struct GraphBatch {
  TaskKind task = TaskKind::jet_tagging;
  Tensor positions;   // N x d
  Tensor node_feats;  // N x f
  Tensor edge_feats;  // E x k (undirected)
  std::vector<std::uint32_t> senders;    // directed, size 2E
  std::vector<std::uint32_t> receivers;  // directed, size 2E
  std::vector<std::uint32_t> directed_edge;  // undirected edge index per directed message
  std::vector<std::uint32_t> edge_i;     // undirected endpoints, size E
  std::vector<std::uint32_t> edge_j;
  std::vector<std::uint32_t> node_graph;  // graph index per node
  std::size_t num_graphs = 0;
  std::vector<double> targets;  // graph labels, or edge labels in event order

  std::size_t num_nodes() const { return node_graph.size(); }
  std::size_t num_edges() const { return edge_i.size(); }

  static GraphBatch from_events(std::span<const EventGraph* const> events, TaskKind task);
  static GraphBatch from_event(const EventGraph& event, TaskKind task);
};

// ---------------------------------------------------------------------------
// Layer primitives. All operate on row-stacked edges: row e of h_i/h_j/x_i/x_j
// belongs to the same (receiver, sender) pair.

/// Raw Lorentz invariants per row: [<x_i - x_j, x_i - x_j>, <x_i, x_j>].
Tensor lorentz_invariants(const Tensor& x_i, const Tensor& x_j);
/// Squared Euclidean distance per row.
Tensor euclid_invariants(const Tensor& x_i, const Tensor& x_j);

/// phi([h_i, h_j, e_ij]) with [x_i, x_j] appended when `position_leak` is set.
Tensor message_unconstrained(const Tensor& h_i, const Tensor& h_j, const Tensor& e_ij,
                             const Tensor& x_i, const Tensor& x_j, bool position_leak,
                             const Mlp& phi, ParamView params);
/// phi([h_i, h_j, slog(interval), slog(dot)]); slog(v) = sign(v) log(1 + |v|)
/// tames the dynamic range of the invariants without affecting invariance.
Tensor message_lorentz(const Tensor& h_i, const Tensor& h_j, const Tensor& x_i, const Tensor& x_j,
                       const Mlp& phi, ParamView params);
/// phi([h_i, h_j, |x_i - x_j|^2]).
Tensor message_euclid(const Tensor& h_i, const Tensor& h_j, const Tensor& x_i, const Tensor& x_j,
                      const Mlp& phi, ParamView params);

/// Aggregate directed messages onto their receivers.
Tensor aggregate(ReduceOp op, const Tensor& messages, std::span<const std::uint32_t> receivers,
                 std::size_t num_nodes);

/// psi([h, aggregated]).
Tensor node_update(const Tensor& h, const Tensor& aggregated, const Mlp& psi, ParamView params);

/// x_i + C * sum_j phi_x(m_ij) x_j, phi_x producing one scalar gate per
/// message. Equivariant whenever the messages are invariant. `c` is 1x1.
Tensor position_update(const Tensor& x, std::span<const std::uint32_t> senders,
                       std::span<const std::uint32_t> receivers, const Tensor& messages,
                       const Mlp& phi_x, const Tensor& c, ParamView params);

// ---------------------------------------------------------------------------
// Model

enum class ChannelKind { unconstrained, lorentz, euclid };

struct ChannelSpec {
  std::string name;  // "eq" or "free"; also the init stream name
  ChannelKind kind = ChannelKind::lorentz;
  bool position_leak = false;
  std::size_t width = 0;
};

struct ForwardResult {
  Tensor scores;                      // G x 1 or E x 1 logits
  std::vector<Tensor> positions;      // final positions per channel
  std::vector<std::string> channels;  // channel names, same order
};

class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const ParameterStore& parameters() const { return store_; }
  ParameterStore& parameters() { return store_; }
  const std::vector<ChannelSpec>& channels() const { return channel_specs_; }

  std::size_t parameter_count() const { return store_.scalar_count(); }
  /// Learnable scalars per top-level submodule ("eq", "free", "head").
  std::map<std::string, std::size_t> parameter_breakdown() const;

  /// Logits for one event: one per graph, or one per edge in edge order.
  std::vector<double> scores(const EventGraph& event) const;
  Tensor forward(const GraphBatch& batch) const;
  Tensor forward(const GraphBatch& batch, ParamView params) const;
  ForwardResult forward_detailed(const GraphBatch& batch, ParamView params) const;

  /// Final positions of the first channel. ContractError unless the spec
  /// enables position updates.
  Tensor updated_positions(const EventGraph& event) const;

 private:
  struct Round {
    Mlp phi;
    Mlp psi;
    Mlp phi_x;
    std::size_t c = 0;
  };
  struct Channel {
    ChannelSpec spec;
    Mlp embed;
    std::vector<Round> rounds;
  };

  std::size_t edge_input_width(const ChannelSpec& c) const;
  Tensor edge_inputs(const ChannelSpec& c, const Tensor& x_i, const Tensor& x_j,
                     const Tensor& e_ij) const;

  ModelSpec spec_;
  ParameterStore store_;
  std::vector<ChannelSpec> channel_specs_;
  std::vector<Channel> channels_;
  Mlp head_;
};

/// Exact number of learnable scalars.
std::size_t count_parameters(const Model& model);

/// {model_spec, seed, parameters (flat), parameter_count}.
nlohmann::json checkpoint_json(const Model& model);
Model model_from_checkpoint(const nlohmann::json& j);

}  // namespace equibench
