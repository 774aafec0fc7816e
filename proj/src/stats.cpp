#include "webweave/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/erf.hpp>

#include "webweave/error.hpp"

namespace webweave::stats {

double normal_cdf(double x) { return 0.5 * boost::math::erfc(-x / std::sqrt(2.0)); }

double kolmogorov_tail(double lambda)
{
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0; // series converges slowly here and the tail is 1 to double precision
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

double stephens_p(double d, double n_eff)
{
  const double rn = std::sqrt(n_eff);
  return kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d);
}

} // namespace

KsResult ks_test(std::vector<double> sample, const std::function<double(double)> &cdf)
{
  require(!sample.empty(), "ks_test: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return {d, stephens_p(d, n), sample.size()};
}

KsResult ks_test_censored(std::vector<double> sample, const std::function<double(double)> &cdf, double cap)
{
  require(!sample.empty(), "ks_test_censored: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  std::size_t i = 0;
  for (; i < sample.size() && sample[i] <= cap; ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  // Between the last observed value and the cap the empirical CDF is flat.
  d = std::max(d, cdf(cap) - i / n);
  return {d, stephens_p(d, n), sample.size()};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return {d, stephens_p(d, na * nb / (na + nb)), a.size() + b.size()};
}

double ks_se(std::size_t n) { return 0.26 / std::sqrt(static_cast<double>(n)); }

double binomial_se(double p, std::size_t n)
{
  require(n > 0, "binomial_se: no trials");
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

MeanSe mean_se(std::span<const double> x)
{
  require(x.size() >= 2, "mean_se: need at least two values");
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double var = ss / static_cast<double>(x.size() - 1);
  return {m, std::sqrt(var / static_cast<double>(x.size()))};
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y)
{
  require(x.size() == y.size() && x.size() >= 3, "linear_fit: need at least three paired values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, "linear_fit: x values are all equal");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - intercept - slope * x[i];
    sse += e * e;
  }
  const double r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return {slope, intercept, r2, std::sqrt(sse / (n - 2.0) / sxx)};
}

bool non_increasing(std::span<const double> est, std::span<const double> se, double z)
{
  require(est.size() == se.size(), "non_increasing: size mismatch");
  for (std::size_t i = 1; i < est.size(); ++i)
    if (est[i] > est[i - 1] + z * std::hypot(se[i], se[i - 1])) return false;
  return true;
}

} // namespace webweave::stats
