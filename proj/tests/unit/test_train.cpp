#include <cmath>

#include <gtest/gtest.h>

#include "equibench/error.hpp"
#include "equibench/graphdata.hpp"
#include "equibench/metrics.hpp"
#include "equibench/train.hpp"

using namespace equibench;

namespace {

Dataset small_jets(std::size_t n, std::uint64_t seed) {
  JetGenConfig c;
  c.n_events = n;
  return generate_jets(c, seed);
}

// Label carried by the sign of the first node feature.
Dataset separable_toy(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.task = TaskKind::jet_tagging;
  for (std::size_t k = 0; k < n; ++k) {
    const int label = static_cast<int>(k % 2);
    EventGraph e;
    const double f = (label == 1 ? 1.0 : -1.0) * rng.uniform(0.2, 1.0);
    e.positions = Tensor::matrix(3, 4, std::vector<double>(12, 0.0));
    e.node_feats = Tensor::matrix({{f}, {f}, {f}});
    e.edges = {{0, 1}, {0, 2}, {1, 2}};
    e.edge_feats = Tensor::zeros({3, 0});
    e.graph_label = label;
    ds.events.push_back(std::move(e));
  }
  ds.report = summarize(ds);
  return ds;
}

ModelSpec small_spec(MessageKind kind, std::uint64_t seed) {
  ModelSpec s;
  s.message = kind;
  s.hidden = 4;
  s.rounds = 1;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(BceLoss, ZeroLogitIsLn2) {
  const std::vector<double> y{0, 1, 1};
  EXPECT_NEAR(bce_loss(Tensor::matrix(3, 1, {0, 0, 0}), y).item(), std::log(2.0), 1e-15);
}

TEST(BceLoss, LargeLogitIsStable) {
  const std::vector<double> one{1};
  const double l = bce_loss(Tensor::matrix(1, 1, {40.0}), one).item();
  EXPECT_GE(l, 0.0);
  EXPECT_LT(l, 1e-15);
  for (double z : {1e4, -1e4}) {
    for (double y : {0.0, 1.0}) {
      const std::vector<double> lab{y};
      EXPECT_TRUE(std::isfinite(bce_loss(Tensor::matrix(1, 1, {z}), lab).item()));
    }
  }
}

TEST(BceLoss, MatchesDirectFormula) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double z = rng.uniform(-10, 10);
    const double y = static_cast<double>(rng.below(2));
    const double s = 1.0 / (1.0 + std::exp(-z));
    const double direct = -(y * std::log(s) + (1 - y) * std::log(1 - s));
    const std::vector<double> lab{y};
    EXPECT_NEAR(bce_loss(Tensor::matrix(1, 1, {z}), lab).item(), direct, 1e-12 * std::max(1.0, direct));
  }
}

TEST(BceLoss, Errors) {
  const std::vector<double> none;
  EXPECT_THROW(bce_loss(Tensor::zeros({0, 1}), none), DomainError);
  const std::vector<double> bad{0.5};
  EXPECT_THROW(bce_loss(Tensor::matrix(1, 1, {0.0}), bad), DomainError);
  const std::vector<double> two{0, 1};
  EXPECT_THROW(bce_loss(Tensor::matrix(1, 1, {0.0}), two), DimensionError);
}

TEST(Optimizer, SmallStepDecreasesLoss) {
  const Dataset ds = small_jets(40, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Model model(small_spec(seed % 2 ? MessageKind{LorentzEq{}} : MessageKind{Unconstrained{true}}, seed));
    std::vector<const EventGraph*> ptrs;
    for (std::size_t k = seed; k < seed + 8; ++k) ptrs.push_back(&ds.events[k]);
    const GraphBatch batch = GraphBatch::from_events(ptrs, TaskKind::jet_tagging);
    const BatchGradient before = batch_gradient(model, batch);
    Adam adam(1e-4, 0.9, 0.999, 1e-8);
    adam.step(model.parameters(), before.grads);
    EXPECT_LT(batch_gradient(model, batch).loss, before.loss) << "instance " << seed;
  }
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  const Model model(small_spec(LorentzEq{}, 3));
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train(model, small_jets(20, 3), cfg);
  EXPECT_EQ(r.model.parameters().flatten(), model.parameters().flatten());
  EXPECT_EQ(r.history.epochs(), 0u);
  EXPECT_EQ(r.best_epoch, 0u);
}

TEST(Train, Deterministic) {
  const Dataset ds = small_jets(60, 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 11;
  const Model model(small_spec(LorentzEq{}, 5));
  const TrainResult a = train(model, ds, cfg);
  const TrainResult b = train(model, ds, cfg);
  EXPECT_EQ(a.model.parameters().flatten(), b.model.parameters().flatten());
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  EXPECT_EQ(a.validation_indices, b.validation_indices);
  cfg.seed = 12;
  EXPECT_NE(train(model, ds, cfg).model.parameters().flatten(), a.model.parameters().flatten());
}

TEST(Train, SeparableToyReachesHighAccuracy) {
  const Dataset ds = separable_toy(200, 6);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.validation_fraction = 0.0;
  cfg.patience = 0;
  cfg.learning_rate = 0.01;
  const TrainResult r = train(Model(small_spec(Unconstrained{false}, 7)), ds, cfg);
  EXPECT_GE(accuracy(predict(r.model, ds), targets(ds)), 0.99);
}

TEST(Train, HistoryLengthsAndCsv) {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.patience = 0;
  const TrainResult r = train(Model(small_spec(LorentzEq{}, 8)), small_jets(50, 8), cfg);
  EXPECT_EQ(r.history.train_loss.size(), 4u);
  EXPECT_EQ(r.history.val_loss.size(), 4u);
  EXPECT_EQ(r.history.val_auc.size(), 4u);
  EXPECT_GE(r.best_epoch, 1u);
  const std::string csv = r.history.to_csv("note");
  EXPECT_EQ(csv.rfind("# note\nepoch,train_loss,val_loss,val_auc\n1,", 0), 0u) << csv;
  EXPECT_EQ(r.validation_indices.size(), 10u);
  EXPECT_EQ(r.train_indices.size(), 40u);
}

TEST(Train, EarlyStoppingHonoursPatience) {
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.patience = 2;
  cfg.learning_rate = 0.05;
  const TrainResult r = train(Model(small_spec(LorentzEq{}, 9)), small_jets(40, 9), cfg);
  EXPECT_LT(r.history.epochs(), 200u);
  EXPECT_EQ(r.history.epochs(), r.best_epoch + 2);
}

TEST(Train, NonFiniteLossAborts) {
  Dataset ds = small_jets(20, 10);
  for (auto& e : ds.events) {
    auto v = e.positions.detach();
    v.mutable_data()[0] = std::numeric_limits<double>::infinity();
    e.positions = v;
  }
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(Model(small_spec(Unconstrained{true}, 10)), ds, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Train, TaskMismatch) {
  TrackGenConfig tc;
  tc.n_events = 10;
  EXPECT_ANY_THROW(train(Model(small_spec(LorentzEq{}, 11)), generate_tracks(tc, 1), TrainConfig{}));
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig cfg;
  cfg.seed = 18446744073709551615ull;
  cfg.learning_rate = 0.0125;
  const TrainConfig back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back).dump(), to_json(cfg).dump());
  EXPECT_THROW(train_config_from_json({{"learning_rate", -1.0}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"batch_size", 0}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"validation_fraction", 0.6}}), ConfigError);
  try {
    train_config_from_json({{"epoch", 3}}, "train.");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "train.epoch");
  }
}
