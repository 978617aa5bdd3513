#include <doctest.h>

#include <cmath>

#include "setsum/metrics.hpp"
#include "support/oracles.hpp"

using namespace setsum;

namespace {

std::vector<double> random_series(std::size_t n, Rng& rng, double lo = 0.0, double hi = 10.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_SUITE("mse and mae") {
  TEST_CASE("arithmetic") {
    const std::vector<double> truth{0, 0}, pred{1, 3};
    CHECK(mse(truth, pred) == 5.0);
    CHECK(mae(truth, pred) == 2.0);
    CHECK(mse(pred, pred) == 0.0);
    CHECK(mae(pred, pred) == 0.0);
  }

  TEST_CASE("match a direct loop") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = random_series(17, rng, -5, 5);
      const auto b = random_series(17, rng, -5, 5);
      double sq = 0.0, ab = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        sq += (a[i] - b[i]) * (a[i] - b[i]);
        ab += std::abs(a[i] - b[i]);
      }
      CHECK(std::abs(mse(a, b) - sq / 17) < 1e-12);
      CHECK(std::abs(mae(a, b) - ab / 17) < 1e-12);
      CHECK(mse(a, b) > 0.0);
    }
  }

  TEST_CASE("invalid series are rejected") {
    const std::vector<double> one{1}, two{1, 2}, three{1, 2, 3};
    CHECK_THROWS(mse(one, one));
    CHECK_THROWS(mae(two, three));
    const std::vector<double> bad{1, std::nan("")};
    CHECK_THROWS(mse(two, bad));
  }
}

TEST_SUITE("icc") {
  TEST_CASE("perfect agreement is exactly 1") {
    const std::vector<double> t{1, 2, 3, 4, 5};
    CHECK(icc(t, t).value() == 1.0);
  }

  TEST_CASE("a constant shift is penalized") {
    const std::vector<double> t{1, 2, 3, 4, 5}, shifted{3, 4, 5, 6, 7};
    CHECK(icc(t, shifted).value() < 1.0);
  }

  TEST_CASE("worked series matches the ANOVA table") {
    const std::vector<double> t{1, 2, 3, 4, 5}, p{1, 3, 2, 4, 6};
    CHECK(std::abs(icc(t, p).value() - oracle::anova_icc(t, p)) < 1e-10);
  }

  TEST_CASE("random series match the ANOVA table") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 3 + rng.index(40);
      const auto a = random_series(n, rng);
      const auto b = random_series(n, rng);
      CHECK(std::abs(icc(a, b).value() - oracle::anova_icc(a, b)) < 1e-10);
    }
  }

  TEST_CASE("symmetric and affine invariant") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = random_series(12, rng);
      auto b = a;
      for (double& x : b) x += rng.normal(0, 1.5);
      CHECK(std::abs(icc(a, b).value() - icc(b, a).value()) < 1e-12);
      std::vector<double> ta(a), tb(b);
      for (double& x : ta) x = 2.5 * x - 7;
      for (double& x : tb) x = 2.5 * x - 7;
      CHECK(std::abs(icc(ta, tb).value() - icc(a, b).value()) < 1e-10);
    }
  }

  TEST_CASE("undefined cases return the marker") {
    const std::vector<double> c{2, 2, 2, 2};
    CHECK_FALSE(icc(c, c).has_value());
    const std::vector<double> short_a{1, 2}, short_b{2, 1};
    CHECK_FALSE(icc(short_a, short_b).has_value());
    CHECK(format_optional(std::nullopt) == "NA");
    CHECK(format_optional(0.5) == "0.5");
  }

  TEST_CASE("evaluate bundles the metrics") {
    const std::vector<double> t{1, 2, 3, 4, 5}, p{1, 3, 2, 4, 6};
    const MetricsReport r = evaluate(t, p);
    CHECK(r.n == 5);
    CHECK(r.mse == mse(t, p));
    CHECK(r.mae == mae(t, p));
    CHECK(r.icc == icc(t, p));
  }
}

TEST_SUITE("williams") {
  TEST_CASE("equal correlations give t = 0 and p = 1") {
    const auto r = williams_test(0.6, 0.6, 0.4, 30).value();
    CHECK(r.t == 0.0);
    CHECK(r.p == 1.0);
    CHECK(r.degrees_of_freedom == 27.0);
  }

  TEST_CASE("pinned example") {
    const auto r = williams_test(0.8, 0.6, 0.5, 50).value();
    const auto o = oracle::williams(0.8, 0.6, 0.5, 50);
    CHECK(std::abs(r.t - o.t) < 1e-10);
    CHECK(std::abs(r.p - o.p) < 1e-10);
    CHECK(r.t > 0);
  }

  TEST_CASE("random tuples match the formula and keep the sign") {
    Rng rng(4);
    int checked = 0;
    while (checked < 20) {
      const double r12 = rng.uniform(-0.95, 0.95), r13 = rng.uniform(-0.95, 0.95), r23 = rng.uniform(-0.95, 0.95);
      const auto n = static_cast<unsigned>(rng.integer(4, 200));
      const auto r = williams_test(r12, r13, r23, n);
      if (!r) continue;
      const auto o = oracle::williams(r12, r13, r23, n);
      CHECK(std::abs(r->t - o.t) < 1e-10);
      CHECK(std::abs(r->p - o.p) < 1e-10);
      CHECK((r->t > 0) == (r12 > r13));
      ++checked;
    }
  }

  TEST_CASE("degenerate and invalid inputs") {
    CHECK_FALSE(williams_test(1.0, 0.5, 0.5, 20).has_value());
    CHECK_THROWS(williams_test(1.2, 0.5, 0.5, 20));
    CHECK_THROWS(williams_test(0.5, 0.4, 0.3, 3));
  }

  TEST_CASE("t cdf matches the series reference") {
    const double ts[] = {-4.0, -2.5, -1.0, -0.3, 0.0, 0.4, 1.1, 2.0, 3.3, 6.0};
    const unsigned dfs[] = {1, 6};
    for (double t : ts)
      for (unsigned df : dfs) CHECK(std::abs(student_t_cdf(t, df) - oracle::t_cdf_series(t, df)) < 1e-8);
    CHECK(std::abs(student_t_cdf(1.0, 1) - 0.75) < 1e-15);
  }

  TEST_CASE("pearson") {
    const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1}, k{1, 1, 1, 1};
    CHECK(pearson(a, b).value() == doctest::Approx(1.0));
    CHECK(pearson(a, c).value() == doctest::Approx(-1.0));
    CHECK_FALSE(pearson(a, k).has_value());
  }
}
