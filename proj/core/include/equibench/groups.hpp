#pragma once

#include <span>
#include <string>
#include <variant>

#include "equibench/event_graph.hpp"
#include "equibench/rng.hpp"
#include "equibench/tensor.hpp"

namespace equibench {

enum class SpatialAxis { x = 1, y = 2, z = 3 };

/// Pure boost along one coordinate axis (default z, the beamline).
struct LorentzBoost {
  double beta = 0.0;
  SpatialAxis axis = SpatialAxis::z;

  /// Validating constructor; |beta| >= 1 is a DomainError.
  static LorentzBoost make(double beta, SpatialAxis axis = SpatialAxis::z);
  double gamma() const;
};

/// Rotation of the transverse (x, y) plane.
struct Rotation2D {
  double theta = 0.0;
};

using GroupElement = std::variant<LorentzBoost, Rotation2D>;

enum class GroupFamily { boost, rotation };

std::string to_string(GroupFamily family);
GroupFamily group_family_from_string(const std::string& name);
GroupFamily family_of(const GroupElement& g);
std::string describe(const GroupElement& g);

/// Closed parameter interval for sampling: beta for boosts, theta for rotations.
struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// diag(+1, -1, -1, -1), coordinates ordered (t, x, y, z).
Tensor minkowski_metric();

/// u0 v0 - u1 v1 - u2 v2 - u3 v3.
double minkowski_dot(std::span<const double> u, std::span<const double> v);

/// Boost acting on column 4-vectors as x' = B x. Convention: the time row and
/// the boosted-axis row carry gamma on the diagonal and -gamma*beta off it, so
/// a positive beta moves the frame along +axis.
Tensor boost_matrix(const LorentzBoost& b);

/// [[cos, -sin], [sin, cos]].
Tensor rotation_matrix(const Rotation2D& r);

/// Matrix acting on the event's position space (4x4 or 2x2).
Tensor group_matrix(const GroupElement& g);
GroupElement inverse(const GroupElement& g);
bool is_identity(const GroupElement& g);

/// Action on a row-major batch of positions (N x d). Boosts need d = 4;
/// rotations act on the first two columns of d = 2 or 3.
Tensor apply_to_positions(const GroupElement& g, const Tensor& positions);

/// Transform every node position; features, edges and labels are untouched.
EventGraph apply_to_event(const GroupElement& g, const EventGraph& event);

/// Uniform draw of beta or theta in `range`.
GroupElement sample_group_element(Rng& rng, GroupFamily family, ParamRange range,
                                  SpatialAxis axis = SpatialAxis::z);

}  // namespace equibench
