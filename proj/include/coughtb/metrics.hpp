#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coughtb {

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

enum class Metric { Auroc, Sensitivity, Specificity, Ppv, Npv, F1 };
inline constexpr std::array<Metric, 6> kAllMetrics = {Metric::Auroc, Metric::Sensitivity, Metric::Specificity,
                                                      Metric::Ppv,   Metric::Npv,         Metric::F1};
std::string_view to_string(Metric m);

// Undefined ratios (zero denominators) are std::nullopt, never 0.
struct MetricSet {
  std::optional<double> auroc, sensitivity, specificity, ppv, npv, f1;
  std::array<std::optional<Interval>, 6> ci95{};

  std::optional<double> get(Metric m) const;
  void set(Metric m, std::optional<double> v);
  std::optional<Interval>& ci(Metric m) { return ci95[static_cast<std::size_t>(m)]; }
  const std::optional<Interval>& ci(Metric m) const { return ci95[static_cast<std::size_t>(m)]; }
};

// Positive iff score >= tau.
ConfusionCounts confusion_at_threshold(std::span<const ScoredLabel> scores, double tau);
MetricSet metrics_from_confusion(const ConfusionCounts& c);

// Mann-Whitney AUROC by rank sums with mid-ranks for ties.
double auroc(std::span<const ScoredLabel> scores);
std::optional<double> auroc_or_null(std::span<const ScoredLabel> scores);

// Full point estimate: AUROC plus the threshold metrics at tau.
MetricSet evaluate_scores(std::span<const ScoredLabel> scores, double tau);

using MetricFn = std::function<std::optional<double>(std::span<const ScoredLabel>)>;
MetricFn metric_function(Metric m, double tau);

struct BootstrapResult {
  Interval ci;
  int n_resamples = 0;
  int n_undefined = 0;
};

// Percentile bootstrap (2.5th, 97.5th) resampling rows with replacement.
// Resample i draws from its own generator seeded by derive_seed(seed, i), so
// results do not depend on `jobs`.
BootstrapResult bootstrap_ci(std::span<const ScoredLabel> scores, const MetricFn& metric,
                             int n_resamples = 10000, std::uint64_t seed = 0, int jobs = 1);

struct MetricSetBootstrap {
  MetricSet metrics;  // point estimates with ci95 filled
  std::array<int, 6> undefined{};
  int n_resamples = 0;
};

// All six metrics over a shared set of resamples. Metrics undefined on the
// original sample get no interval. More than 50% undefined resamples for a
// defined metric raises UndefinedMetricError, or with `strict` off leaves
// that metric without an interval (the count stays in `undefined`).
MetricSetBootstrap bootstrap_metric_set(std::span<const ScoredLabel> scores, double tau, int n_resamples,
                                        std::uint64_t seed, int jobs = 1, bool strict = true);

enum class TppProfile { Who2021, Who2025 };
std::string_view to_string(TppProfile p);

struct TppVerdict {
  TppProfile profile = TppProfile::Who2021;
  bool pass = false;
  double sensitivity_margin = 0.0;
  double specificity_margin = 0.0;
};

struct TppFloors {
  double sensitivity;
  double specificity;
};
TppFloors tpp_floors(TppProfile p);

// Strict inequalities against each profile's floors.
std::array<TppVerdict, 2> tpp_check(double sensitivity, double specificity);

struct SweepRow {
  double tau = 0.0;
  ConfusionCounts counts;
  MetricSet metrics;
  std::array<TppVerdict, 2> tpp{};
};

inline const std::vector<double> kDefaultThresholds = {0.36, 0.38, 0.40, 0.45, 0.50};

// One row per tau; checks sensitivity non-increasing and specificity
// non-decreasing down the table. n_resamples = 0 skips the intervals.
std::vector<SweepRow> threshold_sweep(std::span<const ScoredLabel> scores, std::span<const double> taus,
                                      int n_resamples = 10000, std::uint64_t seed = 0, int jobs = 1);

}  // namespace coughtb
