#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "equibench/tensor.hpp"

namespace equibench {

enum class TaskKind { jet_tagging, tracking };

std::string to_string(TaskKind task);
TaskKind task_from_string(const std::string& name);

/// Undirected candidate segment between two nodes.
struct Edge {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// One event as a graph: node positions x_i, scalar node features h_i, an
/// edge list with optional edge features e_ij, and either a graph label (jet
/// tagging) or one label per edge (tracking).
struct EventGraph {
  Tensor positions;   // N x d
  Tensor node_feats;  // N x f
  std::vector<Edge> edges;
  Tensor edge_feats;  // E x k, k may be 0
  std::optional<int> graph_label;
  std::optional<std::vector<int>> edge_labels;

  std::size_t num_nodes() const { return positions.rank() == 2 ? positions.rows() : 0; }
  std::size_t position_dim() const { return positions.rank() == 2 ? positions.cols() : 0; }
  std::size_t node_feat_dim() const { return node_feats.rank() == 2 ? node_feats.cols() : 0; }
  std::size_t edge_feat_dim() const { return edge_feats.rank() == 2 ? edge_feats.cols() : 0; }

  /// Throws DimensionError/ContractError when the structural invariants fail:
  /// edge indices in range, feature rows consistent, exactly one label kind
  /// matching `task`.
  void validate(TaskKind task) const;
};

}  // namespace equibench
