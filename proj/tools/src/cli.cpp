#include "equibench/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "equibench/error.hpp"
#include "equibench/io.hpp"
#include "equibench/layers.hpp"
#include "equibench/metrics.hpp"
#include "equibench/rng.hpp"

namespace equibench::cli {

namespace fs = std::filesystem;

namespace {

/// Missing input files are user errors, reported like config errors.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::uint64_t substream_seed(std::uint64_t seed, const std::string& name) {
  return Rng::stream(seed, name).next_u64();
}

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& prefix) {
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError(prefix + item.key(), "unknown key");
    }
  }
}

/// Input widths produced by the built-in generators.
nlohmann::json default_input(TaskKind task) {
  return {{"node_features", 1}, {"position_dim", task == TaskKind::jet_tagging ? 4 : 2}, {"edge_features", 0}};
}

}  // namespace

const NamedModel& ExperimentConfig::model(const std::string& name) const {
  for (const NamedModel& m : models) {
    if (m.name == name) return m;
  }
  std::string known;
  for (const NamedModel& m : models) known += (known.empty() ? "" : ", ") + m.name;
  throw ConfigError("models", "no model named '" + name + "' (defined: " + known + ")");
}

std::string ExperimentConfig::provenance() const {
  return "config_hash=" + hash + " seed=" + std::to_string(seed);
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j, std::optional<std::uint64_t> seed_override) {
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  reject_unknown(j, {"task", "seed", "generator", "test_fraction", "output_dir", "models", "train", "sweeps"}, "");
  ExperimentConfig c;
  if (!j.contains("task") || !j["task"].is_string()) throw ConfigError("task", "expected \"jet_tagging\" or \"tracking\"");
  c.task = task_from_string(j["task"].get<std::string>());
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (seed_override) c.seed = *seed_override;

  const nlohmann::json gen = j.value("generator", nlohmann::json::object());
  c.generator = c.task == TaskKind::jet_tagging ? to_json(jet_config_from_json(gen, "generator."))
                                                : to_json(track_config_from_json(gen, "generator."));
  if (j.contains("test_fraction")) {
    if (!j["test_fraction"].is_number()) throw ConfigError("test_fraction", "expected a number");
    c.test_fraction = j["test_fraction"].get<double>();
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ConfigError("test_fraction", "must be in (0, 1)");
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("output_dir", "expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("models")) {
    if (!j["models"].is_object()) throw ConfigError("models", "expected an object of name -> model spec");
    for (const auto& [name, spec_json] : j["models"].items()) {
      const std::string field = "models." + name;
      if (!spec_json.is_object()) throw ConfigError(field, "expected a model spec object");
      NamedModel nm;
      nm.name = name;
      nlohmann::json sj = spec_json;
      if (!sj.contains("seed")) sj["seed"] = substream_seed(c.seed, "init/" + name);
      if (!sj.contains("input")) sj["input"] = default_input(c.task);
      nm.spec = model_spec_from_json(sj, field + ".");
      if (task_for(nm.spec.head) != c.task) {
        throw ConfigError(field + ".head", "head '" + to_string(nm.spec.head) + "' does not fit task " + to_string(c.task));
      }
      c.models.push_back(std::move(nm));
    }
  }
  nlohmann::json tj = j.value("train", nlohmann::json::object());
  if (!tj.is_object()) throw ConfigError("train", "expected an object");
  if (!tj.contains("seed")) tj["seed"] = substream_seed(c.seed, "shuffle");
  c.train = train_config_from_json(tj, "train.");
  if (j.contains("sweeps")) {
    if (!j["sweeps"].is_array()) throw ConfigError("sweeps", "expected an array");
    for (const auto& s : j["sweeps"]) c.sweeps.push_back(s);
  }
  nlohmann::json hashed = j;
  hashed["seed"] = c.seed;
  c.hash = content_hash(hashed);
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
  return parse_experiment_config(read_json_file(path), seed_override);
}

fs::path resolve_output_dir(const std::optional<std::string>& out_flag, const std::string& config_output_dir) {
  if (out_flag) return fs::path(*out_flag);
  fs::path root = ".";
  if (const char* env = std::getenv("EQUIBENCH_OUT"); env && *env) root = env;
  return root / (config_output_dir.empty() ? std::string("equibench-out") : config_output_dir);
}

Dataset generate_dataset(const ExperimentConfig& cfg) {
  const std::uint64_t seed = substream_seed(cfg.seed, "generator");
  if (cfg.task == TaskKind::jet_tagging) return generate_jets(jet_config_from_json(cfg.generator), seed);
  return generate_tracks(track_config_from_json(cfg.generator), seed);
}

std::pair<Dataset, Dataset> train_test_split(const ExperimentConfig& cfg, const Dataset& ds) {
  return split(ds, cfg.test_fraction, substream_seed(cfg.seed, "test-split"));
}

SweepSpec resolve_sweep(const ExperimentConfig& cfg, const nlohmann::json& sweep, std::size_t index,
                        const EventGraph& sample) {
  const std::string prefix = "sweeps[" + std::to_string(index) + "].";
  if (!sweep.is_object()) throw ConfigError(prefix.substr(0, prefix.size() - 1), "expected an object");
  nlohmann::json s = sweep;
  if (!s.contains("train")) s["train"] = to_json(cfg.train);
  if (s.contains("models") && s["models"].is_array()) {
    for (std::size_t m = 0; m < s["models"].size(); ++m) {
      auto& entry = s["models"][m];
      if (entry.is_string()) entry = nlohmann::json{{"name", entry.get<std::string>()}};
      if (!entry.is_object()) continue;
      const std::string field = prefix + "models[" + std::to_string(m) + "]";
      // {"name": "x", "model": "ref"} or {"name": "ref"} borrow a spec from the config.
      if (!entry.contains("spec")) {
        std::string ref;
        if (entry.contains("model") && entry["model"].is_string()) {
          ref = entry["model"].get<std::string>();
        } else if (entry.contains("name") && entry["name"].is_string()) {
          ref = entry["name"].get<std::string>();
        } else {
          throw ConfigError(field + ".name", "missing");
        }
        try {
          entry["spec"] = to_json(cfg.model(ref).spec);
        } catch (const ConfigError& e) {
          throw ConfigError(field + ".name", std::string(e.what()).substr(e.field().size() + 2));
        }
        entry.erase("model");
      }
      if (entry["spec"].is_object() && !entry["spec"].contains("input")) entry["spec"]["input"] = default_input(cfg.task);
      ModelSpec spec = model_spec_from_json(entry["spec"], field + ".spec.");
      infer_input_dims(spec, sample);
      entry["spec"] = to_json(spec);
    }
    // Config models get distinct init seeds; an ablation pair must share one.
    if (s.value("protocol", "") == "ablation" && s["models"].size() == 2 && s["models"][0].is_object() &&
        s["models"][1].is_object() && s["models"][0]["spec"].contains("seed")) {
      s["models"][1]["spec"]["seed"] = s["models"][0]["spec"]["seed"];
    }
  }
  return sweep_spec_from_json(s, cfg.task, prefix);
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

Dataset load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("dataset not found: " + path.string());
  return dataset_from_json(read_json_file(path));
}

/// 1e-9 rather than 1e-09.
std::string short_double(double v) {
  std::string s = format_double(v);
  for (const char* pat : {"e-0", "e+0"}) {
    if (const auto pos = s.find(pat); pos != std::string::npos) s.erase(pos + 2, 1);
  }
  if (const auto pos = s.find("e+"); pos != std::string::npos) s.erase(pos + 1, 1);
  return s;
}

nlohmann::json provenance_block(const ExperimentConfig& cfg) {
  return {{"config_hash", cfg.hash}, {"seed", cfg.seed}};
}

int cmd_generate(const Common& common, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_config(common.config, common.seed);
  const fs::path dir = resolve_output_dir(common.out, cfg.output_dir);
  const Dataset ds = generate_dataset(cfg);
  nlohmann::json j = to_json(ds);
  j["provenance"] = provenance_block(cfg);
  const fs::path path = dir / "dataset.json";
  write_json_file(path, j);
  const GenerationReport& r = ds.report;
  out << "wrote " << path.string() << " (" << cfg.provenance() << ")\n";
  out << "events: " << r.n_events << "\n";
  if (ds.task == TaskKind::jet_tagging) {
    out << "class balance: " << r.class_balance << "\n";
  } else {
    out << "edges: " << r.n_edges << ", edge truth fraction: " << r.edge_truth_fraction
        << ", tracks without edges: " << r.tracks_without_edges << "\n";
  }
  return kOk;
}

fs::path dataset_path(const std::optional<std::string>& flag, const fs::path& dir) {
  return flag ? fs::path(*flag) : dir / "dataset.json";
}

int cmd_train(const Common& common, const std::string& model_name, const std::optional<std::string>& dataset_flag,
              std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_config(common.config, common.seed);
  const fs::path dir = resolve_output_dir(common.out, cfg.output_dir);
  const NamedModel& nm = cfg.model(model_name);
  const fs::path data_file = dataset_path(dataset_flag, dir);
  const Dataset ds = load_dataset(data_file);
  if (ds.task != cfg.task) {
    throw ConfigError("task", "dataset task " + to_string(ds.task) + " differs from config task " + to_string(cfg.task));
  }
  if (ds.events.empty()) throw UsageError("dataset is empty: " + data_file.string());
  const auto [train_part, test_part] = train_test_split(cfg, ds);
  ModelSpec spec = nm.spec;
  infer_input_dims(spec, ds.events.front());
  const Model initial(spec);
  const TrainResult res = train(initial, train_part, cfg.train);

  nlohmann::json ckpt = checkpoint_json(res.model);
  ckpt["provenance"] = provenance_block(cfg);
  ckpt["training"] = {{"model_name", nm.name},
                      {"dataset_checksum", file_checksum(data_file)},
                      {"test_fraction", cfg.test_fraction},
                      {"split_seed", substream_seed(cfg.seed, "test-split")},
                      {"validation_indices", res.validation_indices},
                      {"best_epoch", res.best_epoch},
                      {"epochs_run", res.history.epochs()},
                      {"train_config", to_json(cfg.train)}};
  const fs::path models = dir / "models";
  const fs::path ckpt_path = models / (nm.name + ".checkpoint.json");
  const fs::path hist_path = models / (nm.name + ".history.csv");
  write_json_file(ckpt_path, ckpt);
  write_text_file(hist_path, res.history.to_csv(cfg.provenance()));

  out << "model " << nm.name << " (" << kind_name(spec.message) << "), parameters: " << count_parameters(res.model)
      << "\n";
  out << "epochs run: " << res.history.epochs() << ", best epoch: " << res.best_epoch << "\n";
  if (res.best_epoch > 0) {
    const std::size_t e = res.best_epoch - 1;
    out << "validation loss: " << format_double(res.history.val_loss[e])
        << ", validation auc: " << format_double(res.history.val_auc[e]) << "\n";
  }
  out << "wrote " << ckpt_path.string() << "\n" << "wrote " << hist_path.string() << "\n";
  return kOk;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::optional<std::string>& dataset_flag,
             const std::string& split_name, bool timing, std::ostream& out) {
  const fs::path ckpt_path(checkpoint);
  if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: " + ckpt_path.string());
  const nlohmann::json ckpt = read_json_file(ckpt_path);
  const Model model = model_from_checkpoint(ckpt);

  std::optional<ExperimentConfig> cfg;
  if (!common.config.empty()) cfg = load_experiment_config(common.config, common.seed);
  const fs::path dir = resolve_output_dir(common.out, cfg ? cfg->output_dir : std::string());
  fs::path data_file;
  if (dataset_flag) {
    data_file = *dataset_flag;
  } else if (cfg) {
    data_file = dir / "dataset.json";
  } else {
    throw UsageError("eval needs --dataset or --config");
  }
  const Dataset full = load_dataset(data_file);
  if (full.events.empty()) throw UsageError("dataset is empty: " + data_file.string());
  if (full.task != task_for(model.spec().head)) {
    throw ConfigError("dataset", "task " + to_string(full.task) + " does not match checkpoint head " +
                                     to_string(model.spec().head));
  }

  Dataset ds;
  if (split_name == "all") {
    ds = full;
  } else {
    if (!ckpt.contains("training")) throw ConfigError("split", "checkpoint carries no split information");
    const auto& t = ckpt["training"];
    const auto parts = split(full, t.at("test_fraction").get<double>(), t.at("split_seed").get<std::uint64_t>());
    if (split_name == "test") {
      ds = parts.second;
    } else {
      const auto idx = t.at("validation_indices").get<std::vector<std::size_t>>();
      for (std::size_t i : idx) {
        if (i >= parts.first.events.size()) throw ConfigError("split", "validation indices do not fit this dataset");
      }
      ds = select(parts.first, idx);
    }
  }
  if (ds.events.empty()) throw UsageError("selected split '" + split_name + "' is empty");

  MetricsReport report = evaluate(model, ds);
  if (timing) report.timing = time_inference(model, ds, std::min<std::size_t>(100, ds.events.size()), 300);

  nlohmann::json j = to_json(report);
  const nlohmann::json prov = ckpt.value("provenance", nlohmann::json::object());
  j["provenance"] = prov;
  j["checkpoint_checksum"] = file_checksum(ckpt_path);
  j["dataset_checksum"] = file_checksum(data_file);
  j["split"] = split_name;
  j["n_events"] = ds.events.size();

  std::string stem = ckpt_path.filename().string();
  if (const auto pos = stem.find(".checkpoint.json"); pos != std::string::npos) stem = stem.substr(0, pos);
  const fs::path eval_dir = dir / "eval";
  const fs::path json_path = eval_dir / (stem + "-" + split_name + ".metrics.json");
  const fs::path csv_path = eval_dir / (stem + "-" + split_name + ".metrics.csv");
  write_json_file(json_path, j);
  std::ostringstream csv;
  csv << "# config_hash=" << prov.value("config_hash", std::string("none"))
      << " seed=" << prov.value("seed", std::uint64_t{0}) << "\n";
  csv << "split," << metrics_csv_header(report.timing.has_value()) << "\n";
  csv << split_name << ',' << metrics_csv_row(report) << "\n";
  write_text_file(csv_path, csv.str());

  out << "split: " << split_name << " (" << ds.events.size() << " events)\n";
  out << "accuracy: " << format_double(report.accuracy) << "\n";
  out << "auc: " << format_double(report.auc) << "\n";
  out << "rejection at 30% signal efficiency: " << format_double(report.rejection_at_30.value)
      << (report.rejection_at_30.zero_fpr ? " (capped, zero false positives)" : "") << "\n";
  out << "parameters: " << report.n_parameters << "\n";
  out << "ant factor v2 (x1e5): "
      << (report.ant_factor.infinite ? std::string("inf") : format_double(report.ant_factor.display)) << "\n";
  if (report.timing) {
    out << "inference: " << report.timing->mean_ms << " +- " << report.timing->std_ms << " ms/batch ("
        << report.timing->runs << " runs, batch " << report.timing->batch_size << ", "
        << report.timing->hardware_profile << ")\n";
  }
  out << "wrote " << json_path.string() << "\n" << "wrote " << csv_path.string() << "\n";
  return kOk;
}

int cmd_sweep(const Common& common, const std::optional<std::string>& protocol_filter,
              const std::optional<std::string>& dataset_flag, std::size_t jobs, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_config(common.config, common.seed);
  if (protocol_filter) protocol_from_string(*protocol_filter);
  const fs::path dir = resolve_output_dir(common.out, cfg.output_dir);
  if (cfg.sweeps.empty()) throw ConfigError("sweeps", "config defines no sweeps");

  std::vector<std::size_t> selected;
  for (std::size_t k = 0; k < cfg.sweeps.size(); ++k) {
    const auto& s = cfg.sweeps[k];
    if (!s.is_object() || !s.contains("protocol") || !s["protocol"].is_string()) {
      throw ConfigError("sweeps[" + std::to_string(k) + "].protocol", "missing");
    }
    if (!protocol_filter || s["protocol"].get<std::string>() == *protocol_filter) selected.push_back(k);
  }
  if (selected.empty()) throw ConfigError("protocol", "no sweep in the config uses protocol '" + *protocol_filter + "'");

  Dataset full;
  nlohmann::json data_ref{{"task", to_string(cfg.task)}, {"test_fraction", cfg.test_fraction}};
  const fs::path default_data = dir / "dataset.json";
  if (dataset_flag || fs::exists(default_data)) {
    const fs::path p = dataset_path(dataset_flag, dir);
    full = load_dataset(p);
    data_ref["dataset_checksum"] = file_checksum(p);
  } else {
    full = generate_dataset(cfg);
    data_ref["generator"] = cfg.generator;
    data_ref["generator_seed"] = substream_seed(cfg.seed, "generator");
  }
  if (full.events.empty()) throw UsageError("dataset is empty");
  if (full.task != cfg.task) throw ConfigError("task", "dataset task differs from config task");
  auto [train_part, test_part] = train_test_split(cfg, full);
  const SweepData data{std::move(train_part), std::move(test_part)};

  for (std::size_t k : selected) {
    SweepSpec spec = resolve_sweep(cfg, cfg.sweeps[k], k, full.events.front());
    spec.data_ref = data_ref;
    SweepOptions opts;
    opts.jobs = jobs;
    opts.out_dir = dir / "sweeps" / to_string(spec.protocol);
    opts.header_comment = cfg.provenance();
    opts.log = [&out](const std::string& line) { out << line << std::endl; };
    SweepResult res = run_sweep(spec, data, opts);
    res.summary["provenance"] = provenance_block(cfg);
    write_json_file(res.json_path, res.summary);
    out << format_sweep_table(res);
    if (spec.protocol == Protocol::certify) {
      for (const auto& c : res.summary["curves"]) {
        const bool pass = c["passed"].get<std::size_t>() == c["n"].get<std::size_t>();
        out << (pass ? "PASS" : "FAIL") << " tol=" << short_double(c["tolerance"].get<double>()) << " model=" << c["model"].get<std::string>()
            << " contract=" << c["point"].get<std::string>() << "\n";
      }
    }
    if (res.resumed_units > 0) out << "resumed " << res.resumed_units << " completed units\n";
    out << "wrote " << res.csv_path.string() << "\n" << "wrote " << res.json_path.string() << "\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Equivariant GNN benchmarking toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "equibench 0.1.0");

  Common common;
  std::size_t jobs = 1;
  bool timing = false;
  std::string model_name;
  std::string checkpoint;
  std::string split_name = "all";
  std::optional<std::string> dataset;
  std::optional<std::string> protocol;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "Experiment config (JSON)");
    if (config_required) opt->required();
    sub->add_option("--out", common.out, "Output directory (default: $EQUIBENCH_OUT/<output_dir>)");
    sub->add_option("--seed", common.seed, "Override the config's global seed");
  };

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  add_common(gen, true);

  auto* tr = app.add_subcommand("train", "Train one named model");
  add_common(tr, true);
  tr->add_option("--model", model_name, "Model name from the config")->required();
  tr->add_option("--dataset", dataset, "Dataset file (default: <out>/dataset.json)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, false);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--dataset", dataset, "Dataset file");
  ev->add_option("--split", split_name, "Events to evaluate")->check(CLI::IsMember({"all", "test", "validation"}));
  ev->add_flag("--timing", timing, "Add inference timing (batch 100, 300 runs)");

  auto* sw = app.add_subcommand("sweep", "Run the config's sweeps");
  add_common(sw, true);
  sw->add_option("--protocol", protocol, "Only run sweeps with this protocol");
  sw->add_option("--dataset", dataset, "Dataset file (default: <out>/dataset.json or generated)");
  sw->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* cert = app.add_subcommand("certify", "Run the config's certify sweeps");
  add_common(cert, true);
  cert->add_option("--dataset", dataset, "Dataset file");
  cert->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store{"equibench"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(common, out);
    if (tr->parsed()) return cmd_train(common, model_name, dataset, out);
    if (ev->parsed()) return cmd_eval(common, checkpoint, dataset, split_name, timing, out);
    if (sw->parsed()) return cmd_sweep(common, protocol, dataset, jobs, out);
    if (cert->parsed()) return cmd_sweep(common, std::string("certify"), dataset, jobs, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    err << "incompatible inputs: " << e.what() << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    err << "incompatible inputs: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace equibench::cli
