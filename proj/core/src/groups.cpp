#include "equibench/groups.hpp"

#include <cmath>
#include <sstream>

#include "equibench/error.hpp"

namespace equibench {

LorentzBoost LorentzBoost::make(double beta, SpatialAxis axis) {
  if (!(std::abs(beta) < 1.0)) {
    throw DomainError("boost needs |beta| < 1, got " + std::to_string(beta));
  }
  return LorentzBoost{beta, axis};
}

double LorentzBoost::gamma() const { return 1.0 / std::sqrt(1.0 - beta * beta); }

std::string to_string(GroupFamily family) {
  return family == GroupFamily::boost ? "boost" : "rotation";
}

GroupFamily group_family_from_string(const std::string& name) {
  if (name == "boost") return GroupFamily::boost;
  if (name == "rotation") return GroupFamily::rotation;
  throw DomainError("unknown group family '" + name + "' (expected boost or rotation)");
}

GroupFamily family_of(const GroupElement& g) {
  return std::holds_alternative<LorentzBoost>(g) ? GroupFamily::boost : GroupFamily::rotation;
}

std::string describe(const GroupElement& g) {
  std::ostringstream os;
  os.precision(17);
  if (const auto* b = std::get_if<LorentzBoost>(&g)) {
    const char axis = "txyz"[static_cast<int>(b->axis)];
    os << "boost(axis=" << axis << ", beta=" << b->beta << ")";
  } else {
    os << "rotation(theta=" << std::get<Rotation2D>(g).theta << ")";
  }
  return os.str();
}

Tensor minkowski_metric() {
  return Tensor::matrix({{1, 0, 0, 0}, {0, -1, 0, 0}, {0, 0, -1, 0}, {0, 0, 0, -1}});
}

double minkowski_dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != 4 || v.size() != 4) {
    throw DimensionError("minkowski_dot needs two 4-vectors, got lengths " +
                         std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  return u[0] * v[0] - u[1] * v[1] - u[2] * v[2] - u[3] * v[3];
}

Tensor boost_matrix(const LorentzBoost& b) {
  const LorentzBoost checked = LorentzBoost::make(b.beta, b.axis);
  const double gamma = checked.gamma();
  const auto k = static_cast<std::size_t>(checked.axis);
  Tensor m = Tensor::identity(4);
  auto d = m.mutable_data();
  d[0] = gamma;
  d[k * 4 + k] = gamma;
  d[k] = -gamma * checked.beta;
  d[k * 4] = -gamma * checked.beta;
  return m;
}

Tensor rotation_matrix(const Rotation2D& r) {
  const double c = std::cos(r.theta);
  const double s = std::sin(r.theta);
  return Tensor::matrix({{c, -s}, {s, c}});
}

Tensor group_matrix(const GroupElement& g) {
  if (const auto* b = std::get_if<LorentzBoost>(&g)) return boost_matrix(*b);
  return rotation_matrix(std::get<Rotation2D>(g));
}

GroupElement inverse(const GroupElement& g) {
  if (const auto* b = std::get_if<LorentzBoost>(&g)) return LorentzBoost{-b->beta, b->axis};
  return Rotation2D{-std::get<Rotation2D>(g).theta};
}

bool is_identity(const GroupElement& g) {
  if (const auto* b = std::get_if<LorentzBoost>(&g)) return b->beta == 0.0;
  return std::get<Rotation2D>(g).theta == 0.0;
}

Tensor apply_to_positions(const GroupElement& g, const Tensor& positions) {
  if (positions.rank() != 2) {
    throw DimensionError("positions must be N x d, got " + shape_string(positions.shape()));
  }
  const std::size_t n = positions.rows();
  const std::size_t d = positions.cols();
  const bool boost = family_of(g) == GroupFamily::boost;
  if (boost && d != 4) {
    throw DomainError("a Lorentz boost acts on 4-vectors, positions have dimension " +
                      std::to_string(d));
  }
  if (!boost && d != 2 && d != 3) {
    throw DomainError("a transverse rotation acts on 2- or 3-vectors, positions have dimension " +
                      std::to_string(d));
  }
  if (is_identity(g)) return positions.detach();
  const Tensor m = group_matrix(g);
  const std::size_t k = m.rows();
  const auto md = m.data();
  const auto in = positions.data();
  std::vector<double> out(in.begin(), in.end());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t a = 0; a < k; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < k; ++b) acc += md[a * k + b] * in[r * d + b];
      out[r * d + a] = acc;
    }
  }
  return Tensor(positions.shape(), std::move(out));
}

EventGraph apply_to_event(const GroupElement& g, const EventGraph& event) {
  EventGraph out = event;
  out.positions = apply_to_positions(g, event.positions);
  return out;
}

GroupElement sample_group_element(Rng& rng, GroupFamily family, ParamRange range,
                                  SpatialAxis axis) {
  if (!(range.lo <= range.hi) || !std::isfinite(range.lo) || !std::isfinite(range.hi)) {
    throw DomainError("invalid parameter range [" + std::to_string(range.lo) + ", " +
                      std::to_string(range.hi) + "]");
  }
  if (family == GroupFamily::boost && !(std::abs(range.lo) < 1.0 && std::abs(range.hi) < 1.0)) {
    throw DomainError("boost range must lie inside (-1, 1)");
  }
  const double value = range.lo == range.hi ? range.lo : rng.uniform(range.lo, range.hi);
  if (family == GroupFamily::boost) return LorentzBoost{value, axis};
  return Rotation2D{value};
}

}  // namespace equibench
