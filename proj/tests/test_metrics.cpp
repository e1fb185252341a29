#include <doctest.h>

#include <algorithm>

#include <cmath>
#include <random>

#include "coughtb/errors.hpp"
#include "coughtb/metrics.hpp"

using namespace coughtb;

namespace {

// Pairwise oracle: P(s+ > s-) + 0.5 P(s+ = s-).
double pairwise_auroc(const std::vector<ScoredLabel>& s) {
  double wins = 0, pairs = 0;
  for (const auto& a : s) {
    if (!a.positive) continue;
    for (const auto& b : s) {
      if (b.positive) continue;
      wins += a.score > b.score ? 1.0 : (a.score == b.score ? 0.5 : 0.0);
      pairs += 1;
    }
  }
  return wins / pairs;
}

std::vector<ScoredLabel> labelled(std::initializer_list<std::pair<double, bool>> xs) {
  std::vector<ScoredLabel> v;
  for (auto [s, p] : xs) v.push_back({s, p});
  return v;
}

std::vector<ScoredLabel> random_scores(int n, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<ScoredLabel> v;
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    const double z = nd(rng) + (pos ? shift : 0.0);
    v.push_back({1.0 / (1.0 + std::exp(-z)), pos});
  }
  return v;
}

}  // namespace

TEST_CASE("confusion counts") {
  const auto s = labelled({{0.9, true}, {0.4, true}, {0.38, false}, {0.1, false}, {0.38, true}});
  const ConfusionCounts c = confusion_at_threshold(s, 0.38);
  CHECK(c == ConfusionCounts{3, 1, 0, 1});
  CHECK_THROWS_AS(confusion_at_threshold(s, 0.0), InvalidArgument);
  CHECK_THROWS_AS(confusion_at_threshold(s, 1.0), InvalidArgument);
  CHECK_THROWS_AS(confusion_at_threshold({}, 0.5), EmptyInputError);
}

TEST_CASE("metrics from (TP, FP, FN, TN) = (2, 1, 0, 1)") {
  const MetricSet m = metrics_from_confusion({2, 1, 0, 1});
  CHECK(*m.sensitivity == 1.0);
  CHECK(*m.specificity == 0.5);
  CHECK(*m.ppv == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(*m.npv == 1.0);
  CHECK(*m.f1 == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("undefined ratios are null, never zero") {
  const MetricSet m = metrics_from_confusion({0, 0, 0, 3});
  CHECK_FALSE(m.sensitivity.has_value());
  CHECK_FALSE(m.ppv.has_value());
  CHECK_FALSE(m.f1.has_value());
  CHECK(*m.specificity == 1.0);
}

TEST_CASE("AUROC worked examples") {
  CHECK(auroc(labelled({{0.1, false}, {0.2, false}, {0.8, true}, {0.9, true}})) == 1.0);
  CHECK(auroc(labelled({{0.9, false}, {0.8, false}, {0.2, true}, {0.1, true}})) == 0.0);
  CHECK(auroc(labelled({{0.5, false}, {0.5, true}, {0.5, false}, {0.5, true}})) == 0.5);
  CHECK(auroc(labelled({{0.1, false}, {0.3, true}, {0.35, false}, {0.8, true}})) == 0.75);
  CHECK_THROWS_AS(auroc(labelled({{0.1, true}, {0.2, true}})), SingleClassError);
  CHECK_FALSE(auroc_or_null(labelled({{0.1, false}})).has_value());
}

TEST_CASE("AUROC matches the pairwise oracle with ties") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    std::uniform_int_distribution<int> grid(0, 9);
    std::vector<ScoredLabel> s;
    for (int i = 0; i < 40; ++i) s.push_back({grid(rng) / 10.0, (grid(rng) % 3) == 0});
    if (!auroc_or_null(s)) continue;
    CHECK(std::abs(auroc(s) - pairwise_auroc(s)) < 1e-12);
  }
}

TEST_CASE("bootstrap intervals") {
  const auto s = random_scores(60, 1.0, 3);
  const MetricFn f = metric_function(Metric::Auroc, 0.5);
  const BootstrapResult a = bootstrap_ci(s, f, 500, 42, 1);
  const BootstrapResult b = bootstrap_ci(s, f, 500, 42, 4);
  CHECK(a.ci.lo == b.ci.lo);
  CHECK(a.ci.hi == b.ci.hi);
  CHECK(a.ci.lo <= auroc(s));
  CHECK(a.ci.hi >= auroc(s));

  SUBCASE("perfect separation gives a zero-width interval") {
    const auto perfect = labelled({{0.1, false}, {0.2, false}, {0.3, false}, {0.7, true}, {0.8, true}, {0.9, true}});
    const BootstrapResult r = bootstrap_ci(perfect, f, 500, 1);
    CHECK(r.ci.lo == 1.0);
    CHECK(r.ci.hi == 1.0);
    CHECK(r.n_undefined > 0);
  }
  SUBCASE("metric set shares resamples and respects strict mode") {
    const MetricSetBootstrap m = bootstrap_metric_set(s, 0.5, 300, 9);
    for (Metric met : kAllMetrics) {
      REQUIRE(m.metrics.ci(met).has_value());
      CHECK(m.metrics.ci(met)->lo <= *m.metrics.get(met));
      CHECK(m.metrics.ci(met)->hi >= *m.metrics.get(met));
    }
    // Two rows: about half the resamples lose a class.
    const auto two = labelled({{0.2, false}, {0.8, true}});
    const MetricSetBootstrap lax = bootstrap_metric_set(two, 0.5, 200, 1, 1, false);
    CHECK(lax.undefined[0] > 0);
    CHECK(lax.metrics.ci(Metric::Auroc).has_value() == (2 * lax.undefined[0] <= 200));
  }
  SUBCASE("mostly undefined resamples abort") {
    // Defined only when the resample keeps exactly three positives: P = 0.3125.
    const auto six = labelled({{0.1, false}, {0.2, false}, {0.3, false}, {0.7, true}, {0.8, true}, {0.9, true}});
    const MetricFn picky = [](std::span<const ScoredLabel> x) -> std::optional<double> {
      const auto pos = std::count_if(x.begin(), x.end(), [](const ScoredLabel& l) { return l.positive; });
      if (pos != 3) return std::nullopt;
      return 1.0;
    };
    CHECK_THROWS_AS(bootstrap_ci(six, picky, 400, 2), UndefinedMetricError);
  }
}

TEST_CASE("TPP gating is strict") {
  const auto v = tpp_check(0.903, 0.731);
  CHECK(v[0].pass);
  CHECK(v[1].pass);
  CHECK(v[0].sensitivity_margin == doctest::Approx(0.003));
  const auto w = tpp_check(0.85, 0.70);
  CHECK_FALSE(w[0].pass);
  CHECK_FALSE(w[1].pass);
  CHECK_FALSE(tpp_check(0.90, 0.75)[0].pass);
  CHECK_FALSE(tpp_check(0.95, 0.70)[0].pass);
  CHECK(tpp_check(0.95, 0.65)[1].pass);
  CHECK_FALSE(tpp_check(0.95, 0.65)[0].pass);
}

TEST_CASE("threshold sweep") {
  const auto s = random_scores(80, 1.2, 5);
  const auto rows = threshold_sweep(s, kDefaultThresholds, 0);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(*rows[i].metrics.sensitivity <= *rows[i - 1].metrics.sensitivity);
    CHECK(*rows[i].metrics.specificity >= *rows[i - 1].metrics.specificity);
  }
  for (const auto& r : rows) {
    const MetricSet direct = metrics_from_confusion(confusion_at_threshold(s, r.tau));
    CHECK(r.metrics.sensitivity == direct.sensitivity);
    CHECK(r.tpp[0].pass == (*direct.sensitivity > 0.9 && *direct.specificity > 0.7));
  }
  const std::vector<double> unsorted = {0.5, 0.4};
  CHECK_THROWS_AS(threshold_sweep(s, unsorted, 0), InvalidArgument);
  const std::vector<double> out_of_range = {0.0, 0.4};
  CHECK_THROWS_AS(threshold_sweep(s, out_of_range, 0), InvalidArgument);
}
