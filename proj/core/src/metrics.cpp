#include "equibench/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "equibench/error.hpp"
#include "equibench/io.hpp"
#include "equibench/train.hpp"

namespace equibench {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check_labels(std::span<const double> scores, std::span<const double> labels,
                         const char* what) {
  if (scores.size() != labels.size()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  ClassCounts c;
  for (double y : labels) {
    if (y == 1.0) {
      ++c.pos;
    } else if (y == 0.0) {
      ++c.neg;
    } else {
      throw DomainError(std::string(what) + ": labels must be 0 or 1");
    }
  }
  return c;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  const ClassCounts c = check_labels(scores, labels, "roc_auc");
  if (c.pos == 0 || c.neg == 0) throw DomainError("roc_auc needs both classes");
  for (double s : scores) {
    if (std::isnan(s)) throw DomainError("roc_auc: NaN score");
  }
  const auto order = order_by_score(scores);
  // Sum of positive ranks, each tie group sharing its average rank. Ranks are
  // doubled so the sum stays an exact integer.
  double rank_sum2 = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    std::size_t end = k;
    while (end < order.size() && scores[order[end]] == scores[order[k]]) ++end;
    const double avg2 = static_cast<double>(k + 1 + end);  // 2 * average of ranks k+1..end
    for (std::size_t t = k; t < end; ++t) {
      if (labels[order[t]] == 1.0) rank_sum2 += avg2;
    }
    k = end;
  }
  const double np = static_cast<double>(c.pos);
  const double nn = static_cast<double>(c.neg);
  const double u2 = rank_sum2 - np * (np + 1.0);
  return u2 / (2.0 * np * nn);
}

double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold) {
  check_labels(scores, labels, "accuracy");
  if (scores.empty()) throw DomainError("accuracy of an empty set");
  std::size_t right = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if ((scores[i] > threshold) == (labels[i] == 1.0)) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(scores.size());
}

Rejection background_rejection(std::span<const double> scores, std::span<const double> labels,
                               double signal_efficiency) {
  const ClassCounts c = check_labels(scores, labels, "background_rejection");
  if (c.pos == 0 || c.neg == 0) throw DomainError("background_rejection needs both classes");
  if (!(signal_efficiency > 0.0 && signal_efficiency <= 1.0)) {
    throw DomainError("signal efficiency must be in (0, 1]");
  }
  const auto needed = static_cast<std::size_t>(std::ceil(signal_efficiency * static_cast<double>(c.pos) - 1e-12));
  const auto order = order_by_score(scores);
  // Walk thresholds from the top; stop at the first tie group where enough
  // signal is accepted.
  std::size_t sig = 0;
  std::size_t bg = 0;
  std::size_t k = order.size();
  double threshold = 0.0;
  while (k > 0) {
    const double s = scores[order[k - 1]];
    while (k > 0 && scores[order[k - 1]] == s) {
      if (labels[order[k - 1]] == 1.0) {
        ++sig;
      } else {
        ++bg;
      }
      --k;
    }
    threshold = s;
    if (sig >= needed) break;
  }
  Rejection r;
  r.threshold = threshold;
  r.tpr = static_cast<double>(sig) / static_cast<double>(c.pos);
  r.fpr = static_cast<double>(bg) / static_cast<double>(c.neg);
  if (bg == 0) {
    r.zero_fpr = true;
    r.value = static_cast<double>(c.neg) + 1.0;
  } else {
    r.value = static_cast<double>(c.neg) / static_cast<double>(bg);
  }
  return r;
}

AntFactor ant_factor_v2(double auc, std::size_t n_parameters) {
  if (n_parameters < 1) throw DomainError("ant_factor_v2 needs at least one parameter");
  if (!(auc >= 0.0 && auc <= 1.0)) throw DomainError("auc must be in [0, 1]");
  AntFactor a;
  if (auc == 1.0) {
    a.infinite = true;
    a.raw = std::numeric_limits<double>::infinity();
    a.display = a.raw;
    return a;
  }
  a.raw = 1.0 / ((1.0 - auc) * static_cast<double>(n_parameters));
  a.display = a.raw * 1e5;
  return a;
}

// ---------------------------------------------------------------------------
// Timing

bool TimingStats::overlaps(const TimingStats& o) const {
  const double lo = std::max(mean_ms - 2.0 * std_ms, o.mean_ms - 2.0 * o.std_ms);
  const double hi = std::min(mean_ms + 2.0 * std_ms, o.mean_ms + 2.0 * o.std_ms);
  return lo <= hi;
}

std::string hardware_profile() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        cpu = line.substr(colon + 1);
        cpu.erase(0, cpu.find_first_not_of(' '));
      }
      break;
    }
  }
  std::ostringstream os;
  os << cpu << " | " << std::thread::hardware_concurrency() << " logical cpus | ";
#if defined(__clang__)
  os << "clang " << __clang_major__ << '.' << __clang_minor__;
#elif defined(__GNUC__)
  os << "gcc " << __GNUC__ << '.' << __GNUC_MINOR__;
#else
  os << "unknown compiler";
#endif
#ifdef NDEBUG
  os << " | optimized";
#else
  os << " | debug";
#endif
  os << " | single thread";
  return os.str();
}

TimingStats time_inference(const Model& model, const Dataset& ds, std::size_t batch_size,
                           std::size_t runs) {
  if (batch_size < 1) throw DomainError("batch size must be at least 1");
  if (runs < 1) throw DomainError("runs must be at least 1");
  if (ds.events.size() < batch_size) {
    throw DomainError("dataset has " + std::to_string(ds.events.size()) +
                      " events, fewer than one batch of " + std::to_string(batch_size));
  }
  std::vector<const EventGraph*> events;
  for (std::size_t i = 0; i < batch_size; ++i) events.push_back(&ds.events[i]);
  const GraphBatch batch = GraphBatch::from_events(events, ds.task);

  volatile double sink = 0.0;
  for (std::size_t w = 0; w < kTimingWarmupRuns; ++w) sink = sink + model.forward(batch).data()[0];

  std::vector<double> ms(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor out = model.forward(batch);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + out.data()[0];
    ms[r] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }

  TimingStats t;
  t.runs = runs;
  t.batch_size = batch_size;
  t.hardware_profile = hardware_profile();
  t.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(runs);
  if (runs == 1) {
    t.single_run = true;
  } else {
    double ss = 0.0;
    for (double v : ms) ss += (v - t.mean_ms) * (v - t.mean_ms);
    t.std_ms = std::sqrt(ss / static_cast<double>(runs - 1));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reports

MetricsReport report_from_scores(std::span<const double> scores, std::span<const double> labels,
                                 std::size_t n_parameters) {
  MetricsReport r;
  r.accuracy = accuracy(scores, labels);
  r.auc = roc_auc(scores, labels);
  r.rejection_at_30 = background_rejection(scores, labels, 0.3);
  r.n_parameters = n_parameters;
  r.ant_factor = ant_factor_v2(r.auc, n_parameters);
  return r;
}

MetricsReport evaluate(const Model& model, const Dataset& ds) {
  if (ds.events.empty()) throw DomainError("cannot evaluate on an empty dataset");
  if (ds.task != task_for(model.spec().head)) {
    throw ContractError("dataset task " + to_string(ds.task) + " does not match model head " +
                        to_string(model.spec().head));
  }
  const auto scores = predict(model, ds);
  const auto labels = targets(ds);
  return report_from_scores(scores, labels, model.parameter_count());
}

nlohmann::json to_json(const TimingStats& t) {
  return {{"mean_ms", t.mean_ms},   {"std_ms", t.std_ms},         {"runs", t.runs},
          {"warmup", t.warmup},     {"batch_size", t.batch_size}, {"single_run", t.single_run},
          {"hardware_profile", t.hardware_profile}};
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j{{"accuracy", r.accuracy},
                   {"auc", r.auc},
                   {"rejection_at_30", r.rejection_at_30.value},
                   {"rejection_zero_fpr", r.rejection_at_30.zero_fpr},
                   {"n_parameters", r.n_parameters},
                   {"ant_factor_v2", r.ant_factor.infinite ? nlohmann::json("inf") : nlohmann::json(r.ant_factor.raw)},
                   {"ant_factor_v2_x1e5", r.ant_factor.infinite ? nlohmann::json("inf") : nlohmann::json(r.ant_factor.display)}};
  if (r.timing) j["timing"] = to_json(*r.timing);
  return j;
}

std::string metrics_csv_header(bool with_timing) {
  std::string h = "accuracy,auc,rejection_at_30,rejection_zero_fpr,n_parameters,ant_factor_v2,ant_factor_v2_x1e5";
  if (with_timing) h += ",mean_ms,std_ms,runs,batch_size,hardware_profile";
  return h;
}

std::string metrics_csv_row(const MetricsReport& r) {
  std::ostringstream os;
  const auto ant = [&](double v) { return r.ant_factor.infinite ? std::string("inf") : format_double(v); };
  os << format_double(r.accuracy) << ',' << format_double(r.auc) << ','
     << format_double(r.rejection_at_30.value) << ',' << (r.rejection_at_30.zero_fpr ? 1 : 0) << ','
     << r.n_parameters << ',' << ant(r.ant_factor.raw) << ',' << ant(r.ant_factor.display);
  if (r.timing) {
    std::string profile = r.timing->hardware_profile;
    std::replace(profile.begin(), profile.end(), ',', ';');
    os << ',' << format_double(r.timing->mean_ms) << ',' << format_double(r.timing->std_ms) << ','
       << r.timing->runs << ',' << r.timing->batch_size << ",\"" << profile << '"';
  }
  return os.str();
}

}  // namespace equibench
