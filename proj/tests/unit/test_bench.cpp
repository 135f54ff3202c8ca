#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "equibench/bench.hpp"
#include "equibench/error.hpp"
#include "equibench/io.hpp"

using namespace equibench;

namespace {

SweepData jet_data(std::size_t n, std::uint64_t seed) {
  JetGenConfig c;
  c.n_events = n;
  c.max_particles = 6;
  auto [train, test] = split(generate_jets(c, seed), 0.3, seed);
  return {train, test};
}

SweepData track_data(std::size_t n, std::uint64_t seed) {
  TrackGenConfig c;
  c.n_events = n;
  auto [train, test] = split(generate_tracks(c, seed), 0.3, seed);
  return {train, test};
}

ModelSpec tiny(MessageKind kind, TaskKind task = TaskKind::jet_tagging) {
  ModelSpec s;
  s.message = kind;
  s.hidden = 4;
  s.rounds = 1;
  if (task == TaskKind::tracking) {
    s.head = HeadKind::edge_classifier;
    s.input = {1, 2, 0};
  }
  return s;
}

TrainConfig quick() {
  TrainConfig t;
  t.epochs = 2;
  t.patience = 0;
  return t;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("equibench-bench-" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Protocol, NamesRoundTrip) {
  for (const auto& n : protocol_names()) EXPECT_EQ(to_string(protocol_from_string(n)), n);
  try {
    protocol_from_string("boosts");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data_efficiency"), std::string::npos);
  }
}

TEST(Defaults, GridsAndSeeds) {
  EXPECT_EQ(default_beta_grid().size(), 11u);
  EXPECT_EQ(default_beta_grid().back(), 0.99);
  EXPECT_EQ(default_theta_grid().size(), 5u);
  EXPECT_EQ(default_fraction_grid(), (std::vector<double>{0.005, 0.01, 0.05, 1.0}));
  EXPECT_EQ(default_seeds(Protocol::data_efficiency, TaskKind::jet_tagging).size(), 6u);
  EXPECT_EQ(default_seeds(Protocol::rotation_robustness, TaskKind::tracking).size(), 5u);
}

TEST(SweepSpec, Validation) {
  SweepSpec s;
  s.models = {{"l", tiny(LorentzEq{})}};
  s.seeds = {0};
  s.grid = {0.0, 1.0};
  EXPECT_THROW(s.validate(TaskKind::jet_tagging), ConfigError);
  s.grid = {};
  EXPECT_THROW(s.validate(TaskKind::jet_tagging), ConfigError);
  s.grid = {0.0, 0.5};
  EXPECT_NO_THROW(s.validate(TaskKind::jet_tagging));
  EXPECT_THROW(s.validate(TaskKind::tracking), ConfigError);
}

TEST(SweepSpec, JsonRoundTripKeepsHash) {
  SweepSpec s;
  s.protocol = Protocol::hybrid_scan;
  s.width_pairs = {{4, 0}, {2, 2}, {0, 4}};
  s.seeds = {3, 9};
  s.models = {{"h", tiny(LorentzEq{})}};
  s.train = quick();
  const SweepSpec back = sweep_spec_from_json(to_json(s), TaskKind::jet_tagging);
  EXPECT_EQ(back.hash(), s.hash());
  s.seeds = {3};
  EXPECT_NE(back.hash(), s.hash());
}

TEST(Robustness, ZeroBoostEqualsPlainEvaluation) {
  const SweepData d = jet_data(120, 1);
  const Model m(tiny(Unconstrained{true}));
  const auto curve = robustness_curve(m, d.test, GroupFamily::boost, {0.0, 0.6});
  const MetricsReport plain = evaluate(m, d.test);
  EXPECT_EQ(curve[0].metrics.accuracy, plain.accuracy);
  EXPECT_EQ(curve[0].metrics.auc, plain.auc);
  EXPECT_EQ(curve[0].max_score_drift, 0.0);
  EXPECT_GT(curve[1].max_score_drift, 1e-6);
}

TEST(Robustness, LorentzCurveIsFlat) {
  const SweepData d = jet_data(120, 2);
  const Model m(tiny(LorentzEq{}));
  for (const auto& p : robustness_curve(m, d.test, GroupFamily::boost, default_beta_grid())) {
    if (p.value > 0.9) continue;
    EXPECT_LE(p.max_score_drift, 1e-9) << p.value;
  }
}

TEST(Robustness, EuclidAucIdenticalAcrossTheta) {
  const SweepData d = track_data(40, 3);
  const Model m(tiny(EuclidEq{}, TaskKind::tracking));
  const auto curve = robustness_curve(m, d.test, GroupFamily::rotation, default_theta_grid());
  for (const auto& p : curve) {
    EXPECT_NEAR(p.metrics.auc, curve[0].metrics.auc, 1e-12);
    EXPECT_LE(p.max_score_drift, 1e-12);
  }
}

TEST(Ablation, RejectsConfoundedPairs) {
  const ModelSpec eq = tiny(LorentzEq{});
  ModelSpec stripped = eq;
  stripped.message = Unconstrained{true};
  EXPECT_NO_THROW(check_ablation_pair(eq, stripped));
  EXPECT_NO_THROW(check_ablation_pair(eq, eq));
  stripped.hidden = 5;
  EXPECT_THROW(check_ablation_pair(eq, stripped), ContractError);
}

TEST(Ablation, SelfPairHasZeroDifference) {
  SweepSpec s;
  s.protocol = Protocol::ablation;
  s.models = {{"a", tiny(LorentzEq{})}, {"b", tiny(LorentzEq{})}};
  s.seeds = {0, 1};
  s.train = quick();
  const SweepResult r = run_sweep(s, jet_data(80, 4), {});
  const auto& p = r.summary.at("paired");
  EXPECT_EQ(p.at("pairs").get<std::size_t>(), 2u);
  EXPECT_EQ(p.at("auc_diff_mean").get<double>(), 0.0);
  EXPECT_TRUE(p.at("parameter_counts_equal").get<bool>());
}

TEST(Certify, IdentityOnlySamplingHasZeroResidual) {
  const SweepData d = jet_data(40, 5);
  const Model m(tiny(Unconstrained{true}));
  const auto rep = certify(m, d.test.events, Contract::invariance, GroupFamily::boost, {0.0, 0.0}, 5, 1e-9, 1);
  EXPECT_EQ(rep.max_residual, 0.0);
  EXPECT_TRUE(rep.passed);
}

TEST(Certify, LorentzPassesUnconstrainedFails) {
  const SweepData d = jet_data(80, 6);
  ModelSpec eq = tiny(LorentzEq{});
  eq.position_update = true;
  const Model lm(eq);
  const auto inv = certify(lm, d.test.events, Contract::invariance, GroupFamily::boost, {-0.9, 0.9}, 100, 1e-9, 2);
  EXPECT_TRUE(inv.passed) << inv.max_residual;
  const auto equi = certify(lm, d.test.events, Contract::equivariance, GroupFamily::boost, {-0.9, 0.9}, 100, 1e-9, 2);
  EXPECT_TRUE(equi.passed) << equi.max_residual;
  const auto bad = certify(Model(tiny(Unconstrained{true})), d.test.events, Contract::invariance, GroupFamily::boost,
                           {-0.9, 0.9}, 20, 1e-9, 3);
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.max_residual, 1e-9);
  EXPECT_FALSE(bad.worst_element.empty());
}

TEST(Certify, DimensionMismatch) {
  const SweepData d = jet_data(20, 7);
  EXPECT_THROW(certify(Model(tiny(LorentzEq{})), d.test.events, Contract::invariance, GroupFamily::rotation,
                       {0.0, 1.0}, 3, 1e-12, 1),
               DimensionError);
}

TEST(Sweep, RowCountAndDeterminism) {
  SweepSpec s;
  s.protocol = Protocol::boost_robustness;
  s.grid = {0.0, 0.5, 0.9};
  s.seeds = {0, 1};
  s.models = {{"l", tiny(LorentzEq{})}, {"u", tiny(Unconstrained{true})}};
  s.train = quick();
  const SweepData d = jet_data(100, 8);
  const SweepResult a = run_sweep(s, d, {});
  EXPECT_EQ(a.rows.size(), 3u * 2u * 2u);
  SweepOptions two;
  two.jobs = 2;
  const SweepResult b = run_sweep(s, d, two);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) EXPECT_EQ(sweep_csv_row(s.protocol, a.rows[k]), sweep_csv_row(s.protocol, b.rows[k]));
  for (const auto& r : a.rows) {
    if (r.model == "l") {
      EXPECT_LE(r.max_score_drift, 1e-9);
    }
  }
}

TEST(Sweep, ResumeSkipsCompletedUnitsAndMatchesFreshRun) {
  SweepSpec s;
  s.protocol = Protocol::data_efficiency;
  s.grid = {0.5, 1.0};
  s.seeds = {0, 1};
  s.models = {{"l", tiny(LorentzEq{})}};
  s.train = quick();
  const SweepData d = jet_data(120, 9);
  const auto dir = fresh_dir("resume");
  SweepOptions o;
  o.out_dir = dir;
  o.header_comment = "test";
  const SweepResult full = run_sweep(s, d, o);
  const std::string fresh = read_text_file(full.csv_path);
  EXPECT_EQ(fresh.rfind("# test\n", 0), 0u);

  // Simulate an interruption: keep two complete rows and a torn line.
  std::istringstream in(fresh);
  std::string line, kept;
  for (int k = 0; k < 4 && std::getline(in, line); ++k) kept += line + "\n";
  kept += "l,fraction=1,1,0,0.5";
  write_text_file(full.csv_path, kept);
  const SweepResult resumed = run_sweep(s, d, o);
  EXPECT_EQ(resumed.resumed_units, 2u);
  EXPECT_EQ(read_text_file(resumed.csv_path), fresh);
  EXPECT_EQ(run_sweep(s, d, o).resumed_units, 4u);
  std::filesystem::remove_all(dir);
}

TEST(Sweep, DataEfficiencyFullFractionMatchesPlainTraining) {
  SweepSpec s;
  s.protocol = Protocol::data_efficiency;
  s.grid = {1.0};
  s.seeds = {4};
  s.models = {{"l", tiny(LorentzEq{})}};
  s.train = quick();
  const SweepData d = jet_data(100, 10);
  const SweepResult r = run_sweep(s, d, {});
  ModelSpec spec = s.models[0].spec;
  spec.seed = 4;
  TrainConfig t = s.train;
  t.seed = 4;
  const TrainResult tr = train(Model(spec), d.train, t);
  EXPECT_EQ(r.rows.at(0).auc, evaluate(tr.model, d.test).auc);
  EXPECT_TRUE(r.summary.at("monotonicity_violations").is_array());
}

TEST(Sweep, HybridCornersBitIdentical) {
  SweepSpec s;
  s.protocol = Protocol::hybrid_scan;
  s.width_pairs = {{4, 0}, {2, 2}, {0, 4}};
  s.seeds = {0};
  s.models = {{"h", tiny(LorentzEq{})}};
  s.train = quick();
  const SweepResult r = run_sweep(s, jet_data(80, 11), {});
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_TRUE(r.summary.at("corners_bit_identical").get<bool>());
  EXPECT_EQ(r.rows[0].max_score_drift, 0.0);
  EXPECT_TRUE(std::isnan(r.rows[1].max_score_drift));
  EXPECT_EQ(r.rows[2].max_score_drift, 0.0);
  EXPECT_FALSE(format_sweep_table(r).empty());
}

TEST(Sweep, CsvRoundTrip) {
  SweepRow r;
  r.model = "m";
  r.point = "beta=0.5";
  r.point_value = 0.5;
  r.seed = 3;
  r.accuracy = 0.1 + 0.2;
  r.auc = 2.0 / 3.0;
  r.rejection = 7.25;
  r.n_parameters = 99;
  r.ant_factor_x1e5 = 1234.5;
  r.max_score_drift = 1e-17;
  const auto back = parse_sweep_csv(Protocol::boost_robustness,
                                    sweep_csv_header(Protocol::boost_robustness) + "\n" +
                                        sweep_csv_row(Protocol::boost_robustness, r) + "\n");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(sweep_csv_row(Protocol::boost_robustness, back[0]), sweep_csv_row(Protocol::boost_robustness, r));
  EXPECT_EQ(back[0].accuracy, r.accuracy);
}

TEST(Transform, DatasetTransformKeepsLabels) {
  const SweepData d = jet_data(30, 12);
  const Dataset t = transform_dataset(d.test, LorentzBoost::make(0.4));
  ASSERT_EQ(t.events.size(), d.test.events.size());
  for (std::size_t k = 0; k < t.events.size(); ++k) EXPECT_EQ(t.events[k].graph_label, d.test.events[k].graph_label);
}
