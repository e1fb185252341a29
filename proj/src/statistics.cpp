#include "coughtb/statistics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "coughtb/errors.hpp"

namespace coughtb {
namespace {

// Continued fraction for I_x(a, b), modified Lentz. Converges quickly for
// x < (a + 1) / (a + b + 2); the caller reflects otherwise.
double beta_continued_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double incomplete_beta_direct(double x, double a, double b) {
  const double log_prefactor = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                               b * std::log1p(-x);
  return std::exp(log_prefactor) * beta_continued_fraction(x, a, b) / a;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta_direct(1.0 - x, b, a);
  return incomplete_beta_direct(x, a, b);
}

double f_survival(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw InvalidArgument("F distribution needs positive degrees of freedom");
  if (std::isinf(f)) return 0.0;
  if (f <= 0.0) return 1.0;
  return regularized_incomplete_beta(d2 / (d2 + d1 * f), 0.5 * d2, 0.5 * d1);
}

AnovaResult one_way_anova(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw InvalidArgument("ANOVA needs at least two groups");
  AnovaResult r;
  double grand = 0.0;
  std::size_t total = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw InvalidArgument("every ANOVA group needs at least two observations");
    double sum = 0.0;
    for (double v : g) {
      if (!std::isfinite(v)) throw InvalidArgument("ANOVA observations must be finite");
      sum += v;
    }
    r.group_means.push_back(sum / static_cast<double>(g.size()));
    grand += sum;
    total += g.size();
  }
  grand /= static_cast<double>(total);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double m = r.group_means[i];
    r.ss_between += static_cast<double>(groups[i].size()) * (m - grand) * (m - grand);
    for (double v : groups[i]) r.ss_within += (v - m) * (v - m);
  }
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(total - groups.size());
  // Round-off below this relative size is treated as exact zero spread.
  const double scale = std::max(1.0, grand * grand) * static_cast<double>(total) * 1e-24;
  const bool no_between = r.ss_between <= scale;
  const bool no_within = r.ss_within <= scale;
  if (no_between) {
    r.f = 0.0;
    r.p = 1.0;
  } else if (no_within) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.f = (r.ss_between / r.df_between) / (r.ss_within / r.df_within);
    r.p = f_survival(r.f, r.df_between, r.df_within);
  }
  return r;
}

}  // namespace coughtb
