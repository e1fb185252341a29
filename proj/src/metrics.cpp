#include "coughtb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "coughtb/errors.hpp"
#include "coughtb/util.hpp"

namespace coughtb {
namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

double sorted_percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval percentile_interval(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return {sorted_percentile(values, 0.025), sorted_percentile(values, 0.975)};
}

void resample_into(std::span<const ScoredLabel> scores, std::uint64_t seed, std::vector<ScoredLabel>& out) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, scores.size() - 1);
  out.resize(scores.size());
  for (auto& s : out) s = scores[pick(rng)];
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Auroc: return "auroc";
    case Metric::Sensitivity: return "sensitivity";
    case Metric::Specificity: return "specificity";
    case Metric::Ppv: return "ppv";
    case Metric::Npv: return "npv";
    case Metric::F1: return "f1";
  }
  return "?";
}

std::optional<double> MetricSet::get(Metric m) const {
  switch (m) {
    case Metric::Auroc: return auroc;
    case Metric::Sensitivity: return sensitivity;
    case Metric::Specificity: return specificity;
    case Metric::Ppv: return ppv;
    case Metric::Npv: return npv;
    case Metric::F1: return f1;
  }
  return std::nullopt;
}

void MetricSet::set(Metric m, std::optional<double> v) {
  switch (m) {
    case Metric::Auroc: auroc = v; break;
    case Metric::Sensitivity: sensitivity = v; break;
    case Metric::Specificity: specificity = v; break;
    case Metric::Ppv: ppv = v; break;
    case Metric::Npv: npv = v; break;
    case Metric::F1: f1 = v; break;
  }
}

ConfusionCounts confusion_at_threshold(std::span<const ScoredLabel> scores, double tau) {
  if (scores.empty()) throw EmptyInputError("confusion counts need at least one score");
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
  ConfusionCounts c;
  for (const auto& s : scores) {
    const bool predicted = s.score >= tau;
    if (s.positive) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

MetricSet metrics_from_confusion(const ConfusionCounts& c) {
  MetricSet m;
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.npv = ratio(c.tn, c.tn + c.fn);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

std::optional<double> auroc_or_null(std::span<const ScoredLabel> scores) {
  std::vector<ScoredLabel> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score < b.score; });
  double rank_sum = 0.0;
  long n_pos = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1].score == sorted[i].score) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (sorted[k].positive) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const long n_neg = static_cast<long>(sorted.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auroc(std::span<const ScoredLabel> scores) {
  const auto v = auroc_or_null(scores);
  if (!v) throw SingleClassError("AUROC needs at least one positive and one negative");
  return *v;
}

MetricSet evaluate_scores(std::span<const ScoredLabel> scores, double tau) {
  MetricSet m = metrics_from_confusion(confusion_at_threshold(scores, tau));
  m.auroc = auroc_or_null(scores);
  return m;
}

MetricFn metric_function(Metric m, double tau) {
  if (m == Metric::Auroc) {
    return [](std::span<const ScoredLabel> s) { return auroc_or_null(s); };
  }
  return [m, tau](std::span<const ScoredLabel> s) {
    return metrics_from_confusion(confusion_at_threshold(s, tau)).get(m);
  };
}

BootstrapResult bootstrap_ci(std::span<const ScoredLabel> scores, const MetricFn& metric, int n_resamples,
                             std::uint64_t seed, int jobs) {
  if (scores.empty()) throw EmptyInputError("bootstrap needs at least one score");
  if (n_resamples < 1) throw InvalidArgument("bootstrap needs at least one resample");
  if (!metric(scores)) throw UndefinedMetricError("metric undefined on the original sample");

  std::vector<std::optional<double>> values(static_cast<std::size_t>(n_resamples));
  parallel_for(values.size(), jobs, [&](std::size_t i) {
    std::vector<ScoredLabel> sample;
    resample_into(scores, derive_seed(seed, i), sample);
    values[i] = metric(sample);
  });

  BootstrapResult r;
  r.n_resamples = n_resamples;
  std::vector<double> defined;
  defined.reserve(values.size());
  for (const auto& v : values) {
    if (v) {
      defined.push_back(*v);
    } else {
      ++r.n_undefined;
    }
  }
  if (2 * r.n_undefined > n_resamples) {
    throw UndefinedMetricError("metric undefined in " + std::to_string(r.n_undefined) + " of " +
                               std::to_string(n_resamples) + " bootstrap resamples");
  }
  r.ci = percentile_interval(std::move(defined));
  return r;
}

MetricSetBootstrap bootstrap_metric_set(std::span<const ScoredLabel> scores, double tau, int n_resamples,
                                        std::uint64_t seed, int jobs, bool strict) {
  MetricSetBootstrap out;
  out.metrics = evaluate_scores(scores, tau);
  out.n_resamples = n_resamples;
  if (n_resamples <= 0) return out;

  std::vector<MetricSet> draws(static_cast<std::size_t>(n_resamples));
  parallel_for(draws.size(), jobs, [&](std::size_t i) {
    std::vector<ScoredLabel> sample;
    resample_into(scores, derive_seed(seed, i), sample);
    draws[i] = evaluate_scores(sample, tau);
  });

  for (Metric m : kAllMetrics) {
    const auto idx = static_cast<std::size_t>(m);
    if (!out.metrics.get(m)) continue;
    std::vector<double> defined;
    defined.reserve(draws.size());
    for (const auto& d : draws) {
      if (const auto v = d.get(m)) defined.push_back(*v);
    }
    out.undefined[idx] = n_resamples - static_cast<int>(defined.size());
    if (2 * out.undefined[idx] > n_resamples) {
      if (!strict) continue;
      throw UndefinedMetricError(std::string(to_string(m)) + " undefined in " +
                                 std::to_string(out.undefined[idx]) + " of " + std::to_string(n_resamples) +
                                 " bootstrap resamples");
    }
    out.metrics.ci(m) = percentile_interval(std::move(defined));
  }
  return out;
}

std::string_view to_string(TppProfile p) { return p == TppProfile::Who2021 ? "WHO-2021" : "WHO-2025"; }

TppFloors tpp_floors(TppProfile p) {
  return p == TppProfile::Who2021 ? TppFloors{0.90, 0.70} : TppFloors{0.90, 0.60};
}

std::array<TppVerdict, 2> tpp_check(double sensitivity, double specificity) {
  std::array<TppVerdict, 2> out;
  const std::array<TppProfile, 2> profiles = {TppProfile::Who2021, TppProfile::Who2025};
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const TppFloors f = tpp_floors(profiles[i]);
    out[i].profile = profiles[i];
    out[i].sensitivity_margin = sensitivity - f.sensitivity;
    out[i].specificity_margin = specificity - f.specificity;
    out[i].pass = sensitivity > f.sensitivity && specificity > f.specificity;
  }
  return out;
}

std::vector<SweepRow> threshold_sweep(std::span<const ScoredLabel> scores, std::span<const double> taus,
                                      int n_resamples, std::uint64_t seed, int jobs) {
  if (taus.empty()) throw InvalidArgument("threshold list is empty");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] < 1.0)) throw InvalidArgument("thresholds must lie in (0, 1)");
    if (i > 0 && !(taus[i] > taus[i - 1])) throw InvalidArgument("thresholds must be sorted ascending");
  }
  std::vector<SweepRow> rows;
  rows.reserve(taus.size());
  for (double tau : taus) {
    SweepRow row;
    row.tau = tau;
    row.counts = confusion_at_threshold(scores, tau);
    row.metrics = bootstrap_metric_set(scores, tau, n_resamples, seed, jobs).metrics;
    row.tpp = tpp_check(row.metrics.sensitivity.value_or(0.0), row.metrics.specificity.value_or(0.0));
    rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1].metrics;
    const auto& b = rows[i].metrics;
    if ((a.sensitivity && b.sensitivity && *b.sensitivity > *a.sensitivity) ||
        (a.specificity && b.specificity && *b.specificity < *a.specificity)) {
      throw std::logic_error("threshold sweep monotonicity violated");
    }
  }
  return rows;
}

}  // namespace coughtb
