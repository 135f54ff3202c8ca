#include "equibench/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "equibench/error.hpp"
#include "equibench/io.hpp"
#include "equibench/metrics.hpp"

namespace equibench {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5)) {
    throw ConfigError("validation_fraction", "must be in [0, 0.5]");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"validation_fraction", c.validation_fraction},
          {"patience", c.patience}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix.empty() ? "train" : prefix, "expected an object");
  TrainConfig c;
  const std::vector<std::string> known{"epochs", "batch_size", "learning_rate", "beta1",   "beta2",
                                       "epsilon", "seed",      "validation_fraction", "patience"};
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError(prefix + item.key(), "unknown key");
    }
  }
  auto integer = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned()) {
      throw ConfigError(prefix + key, "expected a non-negative integer");
    }
    out = j[key].get<std::remove_reference_t<decltype(out)>>();
  };
  auto number = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(prefix + key, "expected a number");
    out = j[key].get<double>();
  };
  integer("epochs", c.epochs);
  integer("batch_size", c.batch_size);
  integer("seed", c.seed);
  integer("patience", c.patience);
  number("learning_rate", c.learning_rate);
  number("beta1", c.beta1);
  number("beta2", c.beta2);
  number("epsilon", c.epsilon);
  number("validation_fraction", c.validation_fraction);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

std::string TrainHistory::to_csv(const std::string& comment) const {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << "\n";
  os << "epoch,train_loss,val_loss,val_auc\n";
  for (std::size_t e = 0; e < epochs(); ++e) {
    os << (e + 1) << ',' << format_double(train_loss[e]) << ',' << format_double(val_loss[e]) << ','
       << format_double(val_auc[e]) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Loss

Tensor bce_loss(const Tensor& logits, std::span<const double> labels) {
  if (logits.size() == 0) throw DomainError("bce_loss on an empty batch");
  if (logits.size() != labels.size()) {
    throw DimensionError("bce_loss: " + std::to_string(logits.size()) + " logits vs " +
                         std::to_string(labels.size()) + " labels");
  }
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw DomainError("bce_loss labels must be 0 or 1");
  }
  const Tensor y(logits.shape(), std::vector<double>(labels.begin(), labels.end()));
  return mean_all(sub(softplus(logits), mul(y, logits)));
}

double bce_loss_value(std::span<const double> logits, std::span<const double> labels) {
  return bce_loss(Tensor::vector({logits.begin(), logits.end()}), labels).item();
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(ParameterStore& params, std::span<const Tensor> grads) {
  auto& values = params.mutable_values();
  if (grads.size() != values.size()) throw DimensionError("Adam: one gradient per parameter required");
  if (m_.empty()) {
    for (const Tensor& p : values) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto p = values[k].mutable_data();
    const auto g = grads[k].data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Training

BatchGradient batch_gradient(const Model& model, const GraphBatch& batch) {
  GradTape tape;
  std::vector<Tensor> watched;
  watched.reserve(model.parameters().size());
  for (const Tensor& p : model.parameters().values()) watched.push_back(tape.watch(p));
  const Tensor logits = model.forward(batch, watched);
  const Tensor loss = bce_loss(logits, batch.targets);
  const Gradients g = tape.backward(loss);
  BatchGradient out;
  out.loss = loss.item();
  out.grads.reserve(watched.size());
  for (const Tensor& w : watched) out.grads.push_back(g.of(w));
  return out;
}

namespace {

std::vector<GraphBatch> make_batches(const Dataset& ds, std::span<const std::size_t> order,
                                     std::size_t batch_size) {
  std::vector<GraphBatch> batches;
  std::vector<const EventGraph*> chunk;
  for (std::size_t k = 0; k < order.size(); k += batch_size) {
    chunk.clear();
    for (std::size_t i = k; i < std::min(order.size(), k + batch_size); ++i) {
      chunk.push_back(&ds.events[order[i]]);
    }
    batches.push_back(GraphBatch::from_events(chunk, ds.task));
  }
  return batches;
}

double parameter_norm(const ParameterStore& store) {
  double acc = 0.0;
  for (const Tensor& t : store.values()) {
    for (double v : t.data()) acc += v * v;
  }
  return std::sqrt(acc);
}

struct Evaluation {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
};

Evaluation evaluate_batches(const Model& model, const std::vector<GraphBatch>& batches) {
  std::vector<double> logits;
  std::vector<double> labels;
  for (const GraphBatch& b : batches) {
    const Tensor s = model.forward(b);
    logits.insert(logits.end(), s.data().begin(), s.data().end());
    labels.insert(labels.end(), b.targets.begin(), b.targets.end());
  }
  Evaluation e;
  if (logits.empty()) return e;
  e.loss = bce_loss_value(logits, labels);
  if (!std::isfinite(e.loss)) return e;
  const bool both = std::find(labels.begin(), labels.end(), 0.0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1.0) != labels.end();
  if (both) e.auc = roc_auc(logits, labels);
  return e;
}

}  // namespace

std::vector<double> predict(const Model& model, const Dataset& ds, std::size_t batch_size) {
  std::vector<std::size_t> order(ds.events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> out;
  for (const GraphBatch& b : make_batches(ds, order, batch_size)) {
    const Tensor s = model.forward(b);
    out.insert(out.end(), s.data().begin(), s.data().end());
  }
  return out;
}

std::vector<double> targets(const Dataset& ds) {
  std::vector<double> out;
  for (const EventGraph& e : ds.events) {
    if (ds.task == TaskKind::jet_tagging) {
      out.push_back(static_cast<double>(e.graph_label.value()));
    } else {
      for (int l : e.edge_labels.value()) out.push_back(static_cast<double>(l));
    }
  }
  return out;
}

TrainResult train(const Model& model, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.task != task_for(model.spec().head)) {
    throw ContractError("dataset task " + to_string(ds.task) + " does not match model head " +
                        to_string(model.spec().head));
  }
  TrainResult result{model, {}, 0, {}, {}};
  if (ds.events.empty()) throw DomainError("cannot train on an empty dataset");

  std::vector<std::size_t> order(ds.events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = Rng::stream(cfg.seed, "validation");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(order.size())));
  result.validation_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  result.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(result.validation_indices.begin(), result.validation_indices.end());
  std::sort(result.train_indices.begin(), result.train_indices.end());
  if (result.train_indices.empty()) throw DomainError("validation split leaves no training events");

  const std::vector<GraphBatch> val_batches =
      make_batches(ds, result.validation_indices, std::max<std::size_t>(cfg.batch_size, 128));

  Model current = model;
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Rng shuffle = Rng::stream(cfg.seed, "shuffle");
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> epoch_order = result.train_indices;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = epoch_order.size(); i > 1; --i) {
      std::swap(epoch_order[i - 1], epoch_order[shuffle.below(i)]);
    }
    double loss_sum = 0.0;
    double weight = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t k = 0; k < epoch_order.size(); k += cfg.batch_size, ++batch_index) {
      std::vector<const EventGraph*> chunk;
      for (std::size_t i = k; i < std::min(epoch_order.size(), k + cfg.batch_size); ++i) {
        chunk.push_back(&ds.events[epoch_order[i]]);
      }
      const GraphBatch batch = GraphBatch::from_events(chunk, ds.task);
      if (batch.targets.empty()) continue;
      BatchGradient bg = batch_gradient(current, batch);
      const bool grads_finite = std::all_of(bg.grads.begin(), bg.grads.end(), [](const Tensor& g) {
        return std::all_of(g.data().begin(), g.data().end(), [](double v) { return std::isfinite(v); });
      });
      if (!std::isfinite(bg.loss) || !grads_finite) {
        std::ostringstream os;
        os << "non-finite " << (grads_finite ? "loss" : "gradient") << " at epoch " << epoch << ", batch "
           << batch_index
           << " (parameter norm " << parameter_norm(current.parameters()) << ")";
        throw NumericalError(os.str());
      }
      adam.step(current.parameters(), bg.grads);
      loss_sum += bg.loss * static_cast<double>(batch.targets.size());
      weight += static_cast<double>(batch.targets.size());
    }
    const double train_loss = weight > 0.0 ? loss_sum / weight : std::numeric_limits<double>::quiet_NaN();
    const Evaluation val = evaluate_batches(current, val_batches);
    if (!std::isfinite(train_loss) || (!val_batches.empty() && !std::isfinite(val.loss))) {
      std::ostringstream os;
      os << "non-finite loss at end of epoch " << epoch << " (parameter norm "
         << parameter_norm(current.parameters()) << ")";
      throw NumericalError(os.str());
    }
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val.loss);
    result.history.val_auc.push_back(val.auc);

    const double monitored = val_batches.empty() ? train_loss : val.loss;
    if (monitored < best) {
      best = monitored;
      since_best = 0;
      result.model = current;
      result.best_epoch = epoch;
    } else {
      ++since_best;
      if (cfg.patience > 0 && since_best >= cfg.patience) break;
    }
  }
  return result;
}

}  // namespace equibench
