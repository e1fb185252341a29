#pragma once

#include <span>
#include <vector>

namespace coughtb {

// I_x(a, b) by adaptive Gauss-Kronrod integration of
//   I_x(a, b) = x^a / (a B(a, b)) * int_0^1 (1 - x u^(1/a))^(b-1) du,
// using I_x(a, b) = 1 - I_{1-x}(b, a) when x > a / (a + b).
double regularized_incomplete_beta(double x, double a, double b);

// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_survival(double f, double d1, double d2);

struct AnovaResult {
  double f = 0.0;
  double p = 1.0;
  int df_between = 0;
  int df_within = 0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::vector<double> group_means;
};

// One-way ANOVA. Needs >= 2 groups with >= 2 observations each. Zero
// between-group spread gives F = 0, p = 1; zero within-group spread with
// non-zero between-group spread gives F = inf, p = 0.
AnovaResult one_way_anova(std::span<const std::vector<double>> groups);

}  // namespace coughtb
