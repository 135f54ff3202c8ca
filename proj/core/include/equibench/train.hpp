#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "equibench/graphdata.hpp"
#include "equibench/layers.hpp"

namespace equibench {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  /// Stop after this many epochs without a validation-loss improvement; 0 disables.
  std::size_t patience = 5;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix = "");

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_auc;

  std::size_t epochs() const { return train_loss.size(); }
  /// "epoch,train_loss,val_loss,val_auc" rows, full round-trip precision.
  std::string to_csv(const std::string& comment = "") const;
};

struct TrainResult {
  Model model;
  TrainHistory history;
  /// 1-based epoch of the returned checkpoint; 0 when no epoch ran.
  std::size_t best_epoch = 0;
  std::vector<std::size_t> validation_indices;
  std::vector<std::size_t> train_indices;
};

/// Mean binary cross-entropy on logits in the stable form
/// softplus(z) - y z. Labels must be 0 or 1.
Tensor bce_loss(const Tensor& logits, std::span<const double> labels);
double bce_loss_value(std::span<const double> logits, std::span<const double> labels);

/// Adaptive-moment optimizer over a parameter store.
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  void step(ParameterStore& params, std::span<const Tensor> grads);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Loss and gradients of a batch at the model's current parameters.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};
BatchGradient batch_gradient(const Model& model, const GraphBatch& batch);

/// Logits of every event, batched; one entry per graph or per edge.
std::vector<double> predict(const Model& model, const Dataset& ds, std::size_t batch_size = 128);
/// Targets aligned with `predict`.
std::vector<double> targets(const Dataset& ds);

/// Seeded split into train/validation, shuffled mini-batches, Adam updates,
/// early stopping on validation loss. Returns the best-validation checkpoint.
/// Throws NumericalError when the loss goes non-finite.
TrainResult train(const Model& model, const Dataset& ds, const TrainConfig& cfg);

}  // namespace equibench
