#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "equibench/cli.hpp"
#include "equibench/error.hpp"
#include "equibench/io.hpp"
#include "equibench/layers.hpp"

using namespace equibench;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("equibench-cli-") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const nlohmann::json& j, const std::string& name = "config.json") {
    const fs::path p = dir_ / name;
    write_json_file(p, j);
    return p.string();
  }

  static nlohmann::json base_config() {
    return nlohmann::json::parse(R"({
      "task": "jet_tagging",
      "seed": 5,
      "generator": {"n_events": 120, "max_particles": 6},
      "test_fraction": 0.25,
      "models": {
        "lorentz": {"message": "lorentz", "hidden": 4, "rounds": 1, "position_update": true},
        "free": {"message": {"kind": "unconstrained", "position_leak": true}, "hidden": 4, "rounds": 1}
      },
      "train": {"epochs": 2, "batch_size": 16, "patience": 0},
      "sweeps": [
        {"protocol": "boost_robustness", "models": ["lorentz", "free"], "seeds": [0], "grid": [0, 0.8]},
        {"protocol": "certify", "models": ["lorentz", "free"], "seeds": [0, 1],
         "certify": {"n_samples": 10, "n_events": 5}}
      ]
    })");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenerateIsReproducibleAndCreatesDirectories) {
  const std::string cfg = write_config(base_config());
  const fs::path out = dir_ / "a" / "b" / "c";
  const Outcome first = run_cli({"generate", "--config", cfg, "--out", out.string()});
  ASSERT_EQ(first.code, 0) << first.err;
  const fs::path file = out / "dataset.json";
  ASSERT_TRUE(fs::exists(file));
  const std::string sum = file_checksum(file);
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", out.string()}).code, 0);
  EXPECT_EQ(file_checksum(file), sum);
  const auto j = read_json_file(file);
  EXPECT_EQ(j.at("provenance").at("seed").get<std::uint64_t>(), 5u);
  EXPECT_NE(first.out.find("class balance"), std::string::npos);

  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", out.string(), "--seed", "6"}).code, 0);
  EXPECT_NE(file_checksum(file), sum);
}

TEST_F(CliTest, MalformedConfigNamesKey) {
  auto j = base_config();
  j["generator"]["n_evnts"] = 10;
  const Outcome o = run_cli({"generate", "--config", write_config(j), "--out", (dir_ / "o").string()});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("n_evnts"), std::string::npos) << o.err;

  auto k = base_config();
  k["trian"] = nlohmann::json::object();
  const Outcome p = run_cli({"generate", "--config", write_config(k), "--out", (dir_ / "o").string()});
  EXPECT_EQ(p.code, 2);
  EXPECT_NE(p.err.find("trian"), std::string::npos) << p.err;

  fs::path bad = dir_ / "bad.json";
  write_text_file(bad, "{ not json");
  EXPECT_EQ(run_cli({"generate", "--config", bad.string()}).code, 2);
  EXPECT_EQ(run_cli({"generate", "--config", (dir_ / "missing.json").string()}).code, 2);
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
}

TEST_F(CliTest, EnvironmentOutputRoot) {
  auto j = base_config();
  j["output_dir"] = "named";
  const std::string cfg = write_config(j);
  ::setenv("EQUIBENCH_OUT", (dir_ / "root").string().c_str(), 1);
  const Outcome o = run_cli({"generate", "--config", cfg});
  ::unsetenv("EQUIBENCH_OUT");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(dir_ / "root" / "named" / "dataset.json"));
}

TEST_F(CliTest, TrainEvalRoundTrip) {
  const std::string cfg = write_config(base_config());
  const std::string out = (dir_ / "o").string();
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", out}).code, 0);
  const Outcome t = run_cli({"train", "--config", cfg, "--out", out, "--model", "lorentz"});
  ASSERT_EQ(t.code, 0) << t.err;
  const fs::path ckpt = fs::path(out) / "models" / "lorentz.checkpoint.json";
  const auto cj = read_json_file(ckpt);
  const Model m = model_from_checkpoint(cj);
  EXPECT_NE(t.out.find("parameters: " + std::to_string(count_parameters(m))), std::string::npos) << t.out;
  const std::string sum = file_checksum(ckpt);
  const std::string hist = file_checksum(fs::path(out) / "models" / "lorentz.history.csv");
  ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", out, "--model", "lorentz"}).code, 0);
  EXPECT_EQ(file_checksum(ckpt), sum);
  EXPECT_EQ(file_checksum(fs::path(out) / "models" / "lorentz.history.csv"), hist);

  // Validation split reproduces the checkpointed epoch's AUC.
  const Outcome e = run_cli({"eval", "--config", cfg, "--out", out, "--checkpoint", ckpt.string(), "--split", "validation"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto mj = read_json_file(fs::path(out) / "eval" / "lorentz-validation.metrics.json");
  const std::string csv = read_text_file(fs::path(out) / "models" / "lorentz.history.csv");
  const std::size_t best = cj.at("training").at("best_epoch").get<std::size_t>();
  std::istringstream in(csv);
  std::string line;
  double hist_auc = -1.0;
  while (std::getline(in, line)) {
    if (line.rfind(std::to_string(best) + ",", 0) == 0) hist_auc = std::stod(line.substr(line.rfind(',') + 1));
  }
  EXPECT_NEAR(mj.at("auc").get<double>(), hist_auc, 1e-12);
  EXPECT_FALSE(mj.contains("timing") && !mj.at("timing").is_null());

  const Outcome timed = run_cli({"eval", "--config", cfg, "--out", out, "--checkpoint", ckpt.string(), "--split", "test", "--timing"});
  ASSERT_EQ(timed.code, 0) << timed.err;
  const auto tj = read_json_file(fs::path(out) / "eval" / "lorentz-test.metrics.json");
  ASSERT_TRUE(tj.contains("timing"));
  for (const char* k : {"mean_ms", "std_ms", "runs", "batch_size", "hardware_profile"}) EXPECT_TRUE(tj.at("timing").contains(k)) << k;
  EXPECT_EQ(tj.at("timing").at("runs").get<std::size_t>(), 300u);
  EXPECT_NE(read_text_file(fs::path(out) / "eval" / "lorentz-test.metrics.csv").find("mean_ms"), std::string::npos);
}

TEST_F(CliTest, TrainWithoutDatasetExits2) {
  const std::string cfg = write_config(base_config());
  const Outcome o = run_cli({"train", "--config", cfg, "--out", (dir_ / "nothing").string(), "--model", "lorentz"});
  EXPECT_EQ(o.code, 2);
  EXPECT_EQ(run_cli({"train", "--config", cfg, "--out", (dir_ / "nothing").string(), "--model", "nope"}).code, 2);
}

TEST_F(CliTest, EmptyDatasetExits2) {
  const std::string cfg = write_config(base_config());
  const std::string out = (dir_ / "o").string();
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", out}).code, 0);
  ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", out, "--model", "free"}).code, 0);
  auto ds = read_json_file(fs::path(out) / "dataset.json");
  ds["events"] = nlohmann::json::array();
  const fs::path empty = dir_ / "empty.json";
  write_json_file(empty, ds);
  const Outcome o = run_cli({"eval", "--checkpoint", (fs::path(out) / "models" / "free.checkpoint.json").string(),
                             "--dataset", empty.string(), "--out", out});
  EXPECT_EQ(o.code, 2) << o.err;
}

TEST_F(CliTest, HeadTaskMismatchExits2) {
  const std::string cfg = write_config(base_config());
  const std::string out = (dir_ / "o").string();
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", out}).code, 0);
  ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", out, "--model", "free"}).code, 0);
  auto t = base_config();
  t["task"] = "tracking";
  t["generator"] = {{"n_events", 5}};
  t["models"] = {{"e", {{"message", "euclid"}, {"head", "edge"}}}};
  t["sweeps"] = nlohmann::json::array();
  const std::string tcfg = write_config(t, "tracking.json");
  const std::string tout = (dir_ / "t").string();
  ASSERT_EQ(run_cli({"generate", "--config", tcfg, "--out", tout}).code, 0);
  const Outcome o = run_cli({"eval", "--checkpoint", (fs::path(out) / "models" / "free.checkpoint.json").string(),
                             "--dataset", (fs::path(tout) / "dataset.json").string(), "--out", out});
  EXPECT_EQ(o.code, 2) << o.err;
}

TEST_F(CliTest, NonFiniteLossExits3) {
  auto j = base_config();
  j["train"]["learning_rate"] = 1e300;
  j["train"]["epochs"] = 3;
  const std::string cfg = write_config(j);
  const std::string out = (dir_ / "o").string();
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", out}).code, 0);
  const Outcome o = run_cli({"train", "--config", cfg, "--out", out, "--model", "free"});
  EXPECT_EQ(o.code, 3) << o.out << o.err;
  EXPECT_NE(o.err.find("epoch"), std::string::npos);
}

TEST_F(CliTest, SweepsRunSequentiallyIntoSeparateDirectories) {
  const std::string cfg = write_config(base_config());
  const std::string out = (dir_ / "o").string();
  const Outcome o = run_cli({"sweep", "--config", cfg, "--out", out});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::is_directory(fs::path(out) / "sweeps" / "boost_robustness"));
  EXPECT_TRUE(fs::is_directory(fs::path(out) / "sweeps" / "certify"));
  EXPECT_NE(o.out.find("PASS tol=1e-9 model=lorentz contract=invariance"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("PASS tol=1e-9 model=lorentz contract=equivariance"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("FAIL tol=1e-9 model=free"), std::string::npos) << o.out;
  EXPECT_LT(o.out.find("boost_robustness"), o.out.find("certify"));

  std::vector<std::string> sums;
  for (const auto& e : fs::recursive_directory_iterator(fs::path(out) / "sweeps")) {
    if (e.is_regular_file()) sums.push_back(e.path().string() + file_checksum(e.path()));
  }
  const Outcome again = run_cli({"sweep", "--config", cfg, "--out", out, "--protocol", "boost_robustness"});
  ASSERT_EQ(again.code, 0);
  EXPECT_NE(again.out.find("resumed 2 completed units"), std::string::npos) << again.out;
  std::vector<std::string> after;
  for (const auto& e : fs::recursive_directory_iterator(fs::path(out) / "sweeps")) {
    if (e.is_regular_file()) after.push_back(e.path().string() + file_checksum(e.path()));
  }
  std::sort(sums.begin(), sums.end());
  std::sort(after.begin(), after.end());
  EXPECT_EQ(sums, after);
}

TEST_F(CliTest, CertifyAlias) {
  const std::string cfg = write_config(base_config());
  const Outcome o = run_cli({"certify", "--config", cfg, "--out", (dir_ / "o").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("PASS tol=1e-9 model=lorentz"), std::string::npos);
  EXPECT_EQ(o.out.find("boost_robustness"), std::string::npos);
}

TEST_F(CliTest, UnknownProtocolListsValidNames) {
  const std::string cfg = write_config(base_config());
  const Outcome o = run_cli({"sweep", "--config", cfg, "--out", (dir_ / "o").string(), "--protocol", "spin"});
  EXPECT_EQ(o.code, 2);
  for (const auto& n : protocol_names()) EXPECT_NE(o.err.find(n), std::string::npos) << n;
  auto j = base_config();
  j["sweeps"] = {{{"protocol", "spin"}, {"models", {"lorentz"}}}};
  EXPECT_EQ(run_cli({"sweep", "--config", write_config(j, "b.json"), "--out", (dir_ / "o").string()}).code, 2);
}

TEST(ConfigParsing, DefaultsAndHash) {
  const auto j = nlohmann::json::parse(R"({"task":"tracking","seed":3,"models":{"e":{"message":"euclid","head":"edge"}}})");
  const cli::ExperimentConfig a = cli::parse_experiment_config(j);
  EXPECT_EQ(a.model("e").spec.input.position_dim, 2u);
  EXPECT_EQ(a.provenance(), "config_hash=" + a.hash + " seed=3");
  const cli::ExperimentConfig b = cli::parse_experiment_config(j, 4);
  EXPECT_NE(a.hash, b.hash);
  EXPECT_NE(a.model("e").spec.seed, b.model("e").spec.seed);
  EXPECT_THROW(a.model("missing"), ConfigError);
}

TEST_F(CliTest, AblationPairSharesInitSeed) {
  nlohmann::json j = base_config();
  j["models"]["eq"] = {{"message", "lorentz"}, {"hidden", 4}, {"rounds", 1}};
  j["models"]["eq_wo"] = {{"message", {{"kind", "unconstrained"}, {"position_leak", true}}}, {"hidden", 4}, {"rounds", 1}};
  j["sweeps"] = nlohmann::json::array({{{"protocol", "ablation"}, {"models", {"eq", "eq_wo"}}, {"seeds", {0, 1}}}});
  const std::string cfg = write_config(j);
  const Outcome r = run_cli({"sweep", "--config", cfg, "--out", (dir_ / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("paired difference (eq - eq_wo, 2 seeds)"), std::string::npos) << r.out;
}
