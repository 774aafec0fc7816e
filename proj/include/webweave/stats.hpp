#pragma once

#include <functional>
#include <span>
#include <vector>

namespace webweave::stats {

double normal_cdf(double x);

/// Asymptotic Kolmogorov tail P(K > lambda).
double kolmogorov_tail(double lambda);

struct KsResult
{
  double distance;
  double p_value;
  std::size_t n;
};

/// One-sample KS distance of a sample against a continuous CDF.  P-value
/// from the Kolmogorov series with Stephens' finite-n correction.
KsResult ks_test(std::vector<double> sample, const std::function<double(double)> &cdf);

/// KS distance for a sample observed only up to `cap` (values above it
/// censored), comparing empirical and model CDF on (-inf, cap].
KsResult ks_test_censored(std::vector<double> sample, const std::function<double(double)> &cdf, double cap);

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Rough standard error of a KS distance under the null.
double ks_se(std::size_t n);

double binomial_se(double p, std::size_t n);

struct MeanSe
{
  double mean;
  double se;
};

MeanSe mean_se(std::span<const double> x);

struct LinearFit
{
  double slope;
  double intercept;
  double r2;
  double slope_se;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Estimates that should not increase along a sequence: each step may rise
/// by at most `z` combined standard errors.
bool non_increasing(std::span<const double> est, std::span<const double> se, double z);

} // namespace webweave::stats
