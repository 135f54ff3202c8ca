#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "equibench/error.hpp"
#include "equibench/groups.hpp"
#include "equibench/rng.hpp"

using namespace equibench;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

std::vector<double> col_apply(const Tensor& m, std::vector<double> v) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r] += m.at(r, c) * v[c];
  return out;
}

EventGraph jet_event(Rng& rng, std::size_t n) {
  std::vector<double> pos;
  for (std::size_t i = 0; i < n; ++i) {
    const double px = rng.uniform(-1, 1), py = rng.uniform(-1, 1), pz = rng.uniform(-3, 3);
    const double m = rng.uniform(0.0, 0.2);
    pos.insert(pos.end(), {std::sqrt(m * m + px * px + py * py + pz * pz), px, py, pz});
  }
  EventGraph e;
  e.positions = Tensor::matrix(n, 4, pos);
  e.node_feats = Tensor::full({n, 1}, 0.1);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j) e.edges.push_back({i, j});
  e.edge_feats = Tensor::zeros({e.edges.size(), 0});
  e.graph_label = 1;
  return e;
}

}  // namespace

TEST(MinkowskiDot, Examples) {
  const std::vector<double> t{1, 0, 0, 0};
  const std::vector<double> l{1, 1, 0, 0};
  EXPECT_EQ(minkowski_dot(t, t), 1.0);
  EXPECT_EQ(minkowski_dot(l, l), 0.0);
  const std::vector<double> shorter{1, 0, 0};
  EXPECT_THROW(minkowski_dot(t, shorter), DimensionError);
}

TEST(MinkowskiDot, MetricIsMinkowski) {
  const Tensor j = minkowski_metric();
  const Tensor expected = Tensor::matrix({{1, 0, 0, 0}, {0, -1, 0, 0}, {0, 0, -1, 0}, {0, 0, 0, -1}});
  EXPECT_EQ(max_abs_diff(j, expected), 0.0);
}

TEST(MinkowskiDot, InvariantUnderFastBoost) {
  Rng rng(11);
  const Tensor b = boost_matrix(LorentzBoost::make(0.95));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> u(4), v(4);
    for (auto& x : u) x = rng.uniform(-10, 10);
    for (auto& x : v) x = rng.uniform(-10, 10);
    const double before = minkowski_dot(u, v);
    const double after = minkowski_dot(col_apply(b, u), col_apply(b, v));
    // gamma^2 ~ 10 amplifies cancellation; scale by the Euclidean magnitudes.
    double scale = 0.0;
    for (int k = 0; k < 4; ++k) scale += std::abs(u[k] * v[k]);
    EXPECT_NEAR(after, before, 1e-9 * std::max(1.0, scale * 10.0));
  }
}

TEST(Boost, ZeroIsIdentity) {
  EXPECT_EQ(max_abs_diff(boost_matrix(LorentzBoost::make(0.0)), Tensor::identity(4)), 0.0);
}

TEST(Boost, ClosedFormAtPointSix) {
  const auto out = col_apply(boost_matrix(LorentzBoost::make(0.6)), {1, 0, 0, 0});
  EXPECT_NEAR(out[0], 1.25, 1e-15);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_EQ(out[2], 0.0);
  EXPECT_NEAR(out[3], -0.75, 1e-15);
}

TEST(Boost, OtherAxes) {
  const auto ox = col_apply(boost_matrix(LorentzBoost::make(0.6, SpatialAxis::x)), {1, 0, 0, 0});
  EXPECT_NEAR(ox[1], -0.75, 1e-15);
  EXPECT_EQ(ox[3], 0.0);
}

TEST(Boost, InverseElement) {
  const Tensor p = matmul(boost_matrix(LorentzBoost::make(0.7)), boost_matrix(LorentzBoost::make(-0.7)));
  EXPECT_LT(max_abs_diff(p, Tensor::identity(4)), 1e-12);
}

TEST(Boost, RejectsSuperluminal) {
  EXPECT_THROW(LorentzBoost::make(1.0), DomainError);
  EXPECT_THROW(LorentzBoost::make(-1.5), DomainError);
  EXPECT_THROW(boost_matrix(LorentzBoost{1.0}), DomainError);
}

TEST(Boost, PreservesMetricForRandomBetas) {
  Rng rng(12);
  const Tensor j = minkowski_metric();
  for (int trial = 0; trial < 1000; ++trial) {
    const auto axis = static_cast<SpatialAxis>(1 + rng.below(3));
    const Tensor b = boost_matrix(LorentzBoost::make(rng.uniform(-0.99, 0.99), axis));
    EXPECT_LT(max_abs_diff(matmul(matmul(transpose(b), j), b), j), 1e-9);
  }
}

TEST(Rotation, Examples) {
  EXPECT_EQ(max_abs_diff(rotation_matrix({0.0}), Tensor::identity(2)), 0.0);
  const auto q = col_apply(rotation_matrix({std::numbers::pi / 2}), {1, 0});
  EXPECT_NEAR(q[0], 0.0, 1e-15);
  EXPECT_NEAR(q[1], 1.0, 1e-15);
}

TEST(Rotation, GroupLaw) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = rng.uniform(-4, 4), b = rng.uniform(-4, 4);
    const Tensor lhs = matmul(rotation_matrix({a}), rotation_matrix({b}));
    EXPECT_LT(max_abs_diff(lhs, rotation_matrix({a + b})), 1e-12);
  }
}

TEST(Rotation, PreservesNorm) {
  Rng rng(14);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<double> p{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const auto q = col_apply(rotation_matrix({rng.uniform(-10, 10)}), p);
    EXPECT_NEAR(std::hypot(q[0], q[1]), std::hypot(p[0], p[1]), 1e-12);
  }
}

TEST(ApplyToEvent, IdentityIsBitIdentical) {
  Rng rng(15);
  const EventGraph e = jet_event(rng, 6);
  const EventGraph b = apply_to_event(LorentzBoost::make(0.0), e);
  for (std::size_t i = 0; i < e.positions.size(); ++i) EXPECT_EQ(b.positions.data()[i], e.positions.data()[i]);
  EXPECT_EQ(b.edges, e.edges);
  EXPECT_EQ(b.graph_label, e.graph_label);
}

TEST(ApplyToEvent, BoostPreservesPairwiseDots) {
  Rng rng(16);
  const EventGraph e = jet_event(rng, 8);
  const EventGraph b = apply_to_event(LorentzBoost::make(0.3), e);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      EXPECT_NEAR(minkowski_dot(b.positions.row(i), b.positions.row(j)),
                  minkowski_dot(e.positions.row(i), e.positions.row(j)), 1e-9);
  for (std::size_t i = 0; i < e.node_feats.size(); ++i) EXPECT_EQ(b.node_feats.data()[i], e.node_feats.data()[i]);
}

TEST(ApplyToEvent, HalfTurnNegatesTransverse) {
  EventGraph e;
  e.positions = Tensor::matrix({{0.3, -0.4}, {1.0, 2.0}});
  e.node_feats = Tensor::zeros({2, 1});
  e.edges = {{0, 1}};
  e.edge_feats = Tensor::zeros({1, 0});
  e.edge_labels = std::vector<int>{1};
  const EventGraph r = apply_to_event(Rotation2D{std::numbers::pi}, e);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.positions.data()[i], -e.positions.data()[i], 1e-15);
  EXPECT_EQ(r.edge_labels, e.edge_labels);
}

TEST(ApplyToEvent, InverseRecoversPositions) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const EventGraph e = jet_event(rng, 5);
    const GroupElement g = sample_group_element(rng, GroupFamily::boost, {-0.95, 0.95});
    const EventGraph back = apply_to_event(inverse(g), apply_to_event(g, e));
    EXPECT_LT(max_abs_diff(back.positions, e.positions), 1e-9);
  }
}

TEST(ApplyToEvent, DimensionMismatchIsDomainError) {
  Rng rng(18);
  const EventGraph jet = jet_event(rng, 3);
  EXPECT_THROW(apply_to_event(Rotation2D{0.1}, jet), DomainError);
  EventGraph planar;
  planar.positions = Tensor::matrix({{1, 2}});
  planar.node_feats = Tensor::zeros({1, 1});
  planar.edge_feats = Tensor::zeros({0, 0});
  EXPECT_THROW(apply_to_event(LorentzBoost::make(0.2), planar), DomainError);
}

TEST(Sampling, DeterministicUnderSeed) {
  Rng a(7), b(7);
  EXPECT_EQ(describe(sample_group_element(a, GroupFamily::boost, {-0.5, 0.5})),
            describe(sample_group_element(b, GroupFamily::boost, {-0.5, 0.5})));
}

TEST(Sampling, UniformMean) {
  Rng rng(19);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += std::get<LorentzBoost>(sample_group_element(rng, GroupFamily::boost, {0.0, 0.9})).beta;
  EXPECT_NEAR(sum / 10000.0, 0.45, 0.02);
}

TEST(Sampling, DegenerateRangeIsIdentity) {
  Rng rng(20);
  EXPECT_TRUE(is_identity(sample_group_element(rng, GroupFamily::rotation, {0.0, 0.0})));
  EXPECT_TRUE(is_identity(sample_group_element(rng, GroupFamily::boost, {0.0, 0.0})));
}

TEST(Sampling, InvalidRange) {
  Rng rng(21);
  EXPECT_THROW(sample_group_element(rng, GroupFamily::boost, {0.0, 1.0}), DomainError);
  EXPECT_THROW(sample_group_element(rng, GroupFamily::rotation, {1.0, 0.0}), DomainError);
}
