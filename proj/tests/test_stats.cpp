#include <doctest.h>

#include <cmath>

#include "webweave/error.hpp"
#include "webweave/rng.hpp"
#include "webweave/stats.hpp"

using namespace webweave;

TEST_CASE("normal_cdf")
{
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_cdf(1.96) == doctest::Approx(0.9750021).epsilon(1e-7));
  CHECK(stats::normal_cdf(-1.0) == doctest::Approx(0.1586553).epsilon(1e-7));
}

TEST_CASE("kolmogorov_tail")
{
  CHECK(stats::kolmogorov_tail(0.0) == 1.0);
  CHECK(stats::kolmogorov_tail(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(stats::kolmogorov_tail(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("ks_test on a hand-computed sample")
{
  const auto r = stats::ks_test({0.1, 0.4, 0.7}, [](double x) { return x; });
  // Deviations: 1/3 - 0.1, 0.4 - 1/3, 2/3 - 0.4, 0.7 - 2/3, 1 - 0.7
  CHECK(r.distance == doctest::Approx(0.3));
  CHECK(r.n == 3);
}

TEST_CASE("ks_test accepts the true law and rejects a shifted one")
{
  Xoshiro256 gen(8);
  std::vector<double> u(20000);
  for (auto &v : u) v = gen.uniform();
  CHECK(stats::ks_test(u, [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value > 0.01);
  CHECK(stats::ks_test(u, [](double x) { return std::clamp(x - 0.05, 0.0, 1.0); }).p_value < 1e-6);
}

TEST_CASE("censored ks_test ignores values above the cap")
{
  Xoshiro256 gen(9);
  std::vector<double> u(20000);
  for (auto &v : u) v = gen.uniform();
  auto cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
  auto censored = u;
  for (auto &v : censored)
    if (v > 0.5) v = std::numeric_limits<double>::infinity();
  const auto a = stats::ks_test_censored(censored, cdf, 0.5);
  CHECK(a.p_value > 0.01);
  CHECK(a.distance <= stats::ks_test(u, cdf).distance + 1e-15);
  // Everything censored against a law with mass below the cap.
  std::vector<double> all(100, std::numeric_limits<double>::infinity());
  CHECK(stats::ks_test_censored(all, cdf, 0.5).distance == doctest::Approx(0.5));
}

TEST_CASE("ks_two_sample")
{
  Xoshiro256 gen(10);
  std::vector<double> a(5000), b(5000), c(5000);
  for (auto &v : a) v = gen.uniform();
  for (auto &v : b) v = gen.uniform();
  for (auto &v : c) v = gen.uniform() + 0.1;
  CHECK(stats::ks_two_sample(a, b).p_value > 0.01);
  CHECK(stats::ks_two_sample(a, c).p_value < 1e-6);
  CHECK(stats::ks_two_sample({1.0, 2.0}, {1.0, 2.0}).distance == 0.0);
  CHECK(stats::ks_two_sample({1.0, 2.0}, {3.0, 4.0}).distance == 1.0);
}

TEST_CASE("standard errors")
{
  CHECK(stats::binomial_se(0.5, 100) == doctest::Approx(0.05));
  CHECK(stats::binomial_se(0.0, 100) == 0.0);
  CHECK_THROWS_AS(stats::binomial_se(0.5, 0), InvalidArgument);
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const auto m = stats::mean_se(x);
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
}

TEST_CASE("linear_fit")
{
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
  const auto f = stats::linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK(f.slope_se == doctest::Approx(0.0));
  const std::vector<double> same{1.0, 1.0, 1.0};
  CHECK_THROWS_AS(stats::linear_fit(same, same), InvalidArgument);
}

TEST_CASE("non_increasing")
{
  const std::vector<double> est{1.0, 0.8, 0.85, 0.5};
  const std::vector<double> se{0.05, 0.05, 0.05, 0.05};
  CHECK(stats::non_increasing(est, se, 2.0));
  CHECK_FALSE(stats::non_increasing(est, se, 0.5));
}
