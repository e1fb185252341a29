#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "coughtb/errors.hpp"
#include "coughtb/statistics.hpp"

#ifdef COUGHTB_HAVE_BOOST
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/beta.hpp>
#endif

using namespace coughtb;

TEST_CASE("incomplete beta closed forms") {
  CHECK(regularized_incomplete_beta(0.0, 2, 3) == 0.0);
  CHECK(regularized_incomplete_beta(1.0, 2, 3) == 1.0);
  for (double x : {0.1, 0.37, 0.5, 0.93}) {
    // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1 - x)^b.
    CHECK(std::abs(regularized_incomplete_beta(x, 1, 1) - x) < 1e-12);
    CHECK(std::abs(regularized_incomplete_beta(x, 3.5, 1) - std::pow(x, 3.5)) < 1e-12);
    CHECK(std::abs(regularized_incomplete_beta(x, 1, 4.2) - (1 - std::pow(1 - x, 4.2))) < 1e-12);
    CHECK(std::abs(regularized_incomplete_beta(x, 2.5, 7) + regularized_incomplete_beta(1 - x, 7, 2.5) - 1) < 1e-12);
  }
}

#ifdef COUGHTB_HAVE_BOOST
TEST_CASE("incomplete beta and F tail agree with Boost.Math") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> x(0.0, 1.0), ab(0.5, 300.0);
  for (int i = 0; i < 300; ++i) {
    const double a = ab(rng), b = ab(rng), xx = x(rng);
    CHECK(std::abs(regularized_incomplete_beta(xx, a, b) - boost::math::ibeta(a, b, xx)) < 1e-10);
  }
  for (double f : {0.01, 0.5, 1.0, 3.2, 12.0}) {
    for (auto [d1, d2] : {std::pair{2.0, 10.0}, {2.0, 127.0}, {5.0, 40.0}}) {
      const boost::math::fisher_f dist(d1, d2);
      CHECK(std::abs(f_survival(f, d1, d2) - boost::math::cdf(boost::math::complement(dist, f))) < 1e-10);
    }
  }
}
#endif

TEST_CASE("one-way ANOVA hand case") {
  const std::vector<std::vector<double>> g = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  const AnovaResult r = one_way_anova(g);
  // Grand mean 5; SSB = 3 (16 + 0 + 16) = 54 over 2 df; SSW = 6 over 6 df.
  CHECK(r.ss_between == doctest::Approx(54.0).epsilon(1e-12));
  CHECK(r.ss_within == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(r.df_between == 2);
  CHECK(r.df_within == 6);
  CHECK(std::abs(r.f - 27.0) < 1e-9);
  // F(2, 6) upper tail closed form: (1 + 2F/6)^(-3).
  CHECK(std::abs(r.p - std::pow(1.0 + 2.0 * 27.0 / 6.0, -3.0)) < 1e-12);
  CHECK(r.group_means == std::vector<double>{2, 5, 8});
}

TEST_CASE("ANOVA degenerate spreads") {
  const std::vector<std::vector<double>> same = {{1, 2}, {1, 2}, {2, 1}};
  const AnovaResult a = one_way_anova(same);
  CHECK(a.f == 0.0);
  CHECK(a.p == 1.0);
  const std::vector<std::vector<double>> rigid = {{1, 1}, {3, 3}};
  const AnovaResult b = one_way_anova(rigid);
  CHECK(b.f == std::numeric_limits<double>::infinity());
  CHECK(b.p == 0.0);
  const std::vector<std::vector<double>> small = {{1}, {2, 3}};
  CHECK_THROWS_AS(one_way_anova(small), InvalidArgument);
  const std::vector<std::vector<double>> one = {{1, 2, 3}};
  CHECK_THROWS_AS(one_way_anova(one), InvalidArgument);
}
