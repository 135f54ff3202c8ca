#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "equibench/graphdata.hpp"
#include "equibench/layers.hpp"

namespace equibench {

/// Mann-Whitney AUC from average ranks; ties count one half.
/// Labels are 0/1; DomainError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

/// Fraction of events with (score > threshold) == label.
double accuracy(std::span<const double> scores, std::span<const double> labels,
                double threshold = 0.0);

struct Rejection {
  double value = 0.0;  // 1 / FPR, or n_background + 1 when capped
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  bool zero_fpr = false;
};

/// Events with score >= threshold count as signal. The threshold is the
/// highest achieved score whose TPR reaches `signal_efficiency`; no
/// interpolation between operating points.
Rejection background_rejection(std::span<const double> scores, std::span<const double> labels,
                               double signal_efficiency = 0.3);

struct AntFactor {
  double raw = 0.0;
  double display = 0.0;  // raw * 1e5
  bool infinite = false;
};

/// 1 / ((1 - auc) * n_parameters). auc == 1 gives the infinite sentinel.
AntFactor ant_factor_v2(double auc, std::size_t n_parameters);

/// Number of untimed forward passes run before measurement starts.
inline constexpr std::size_t kTimingWarmupRuns = 10;

struct TimingStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;  // sample std; 0 when runs == 1
  std::size_t runs = 0;
  std::size_t warmup = kTimingWarmupRuns;
  std::size_t batch_size = 0;
  bool single_run = false;
  std::string hardware_profile;

  /// mean +- 2 std intervals intersect.
  bool overlaps(const TimingStats& other) const;
};

/// "<cpu model> | <n> logical cpus | <compiler> | <build>", measured on the
/// calling thread only.
std::string hardware_profile();

/// Wall-clock forward time of one batch made from the first `batch_size`
/// events, repeated `runs` times after the warmup.
TimingStats time_inference(const Model& model, const Dataset& ds, std::size_t batch_size = 100,
                           std::size_t runs = 300);

struct MetricsReport {
  double accuracy = 0.0;
  double auc = 0.0;
  Rejection rejection_at_30;
  std::size_t n_parameters = 0;
  AntFactor ant_factor;
  std::optional<TimingStats> timing;
};

MetricsReport evaluate(const Model& model, const Dataset& ds);
MetricsReport report_from_scores(std::span<const double> scores, std::span<const double> labels,
                                 std::size_t n_parameters);

nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const TimingStats& t);
std::string metrics_csv_header(bool with_timing);
std::string metrics_csv_row(const MetricsReport& r);

}  // namespace equibench
