#include "webweave/path_space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "webweave/error.hpp"

namespace webweave {

CompactPoint compactify(double x, double t) noexcept
{
  return {std::tanh(x) / (1.0 + std::abs(t)), std::tanh(t)};
}

double rho(Knot p1, Knot p2) noexcept
{
  const auto a = compactify(p1.x, p1.t);
  const auto b = compactify(p2.x, p2.t);
  return std::max(std::abs(a.phi - b.phi), std::abs(a.psi - b.psi));
}

namespace {

constexpr int samples_per_interval = 8;

double gap(const Path &p1, const Path &p2, double t)
{
  return std::abs(compactify(p1.extended(t), t).phi - compactify(p2.extended(t), t).phi);
}

} // namespace

MetricResult path_distance(const Path &p1, const Path &p2)
{
  const double lo = std::min(p1.begin_time(), p2.begin_time());
  const double hi = std::max(p1.end_time(), p2.end_time());
  require(std::max(p1.begin_time(), p2.begin_time()) <= std::min(p1.end_time(), p2.end_time()),
          "path_distance: paths live on disjoint time windows");

  // Outside [lo, hi] both extensions are constant and the Phi gap only
  // shrinks like 1/(1+|t|), so the supremum lives inside.
  std::vector<double> ts{lo, hi};
  for (const auto &k : p1.knots()) ts.push_back(k.t);
  for (const auto &k : p2.knots()) ts.push_back(k.t);
  if (lo < 0.0 && hi > 0.0) ts.push_back(0.0);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

  double best = -1.0, best_t = lo;
  auto consider = [&](double t, double v) {
    if (v > best) {
      best = v;
      best_t = t;
    }
  };
  for (double t : ts) consider(t, gap(p1, p2, t));

  std::array<double, samples_per_interval + 1> st{}, sv{};
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double a = ts[k], b = ts[k + 1];
    for (int s = 0; s <= samples_per_interval; ++s) {
      st[s] = a + (b - a) * s / samples_per_interval;
      sv[s] = gap(p1, p2, st[s]);
    }
    // Endpoint samples bracket one-sided, since the gap may rise just inside a knot interval.
    for (int s = 0; s <= samples_per_interval; ++s) {
      if ((s > 0 && sv[s] < sv[s - 1]) || (s < samples_per_interval && sv[s] < sv[s + 1])) continue;
      auto neg = [&](double t) { return -gap(p1, p2, t); };
      std::uintmax_t iters = 200;
      const auto [tm, fm] = boost::math::tools::brent_find_minima(neg, st[std::max(s - 1, 0)],
                                                                  st[std::min(s + 1, samples_per_interval)], 40, iters);
      consider(tm, -fm);
    }
  }

  const double psi_gap = std::abs(std::tanh(p1.start_time()) - std::tanh(p2.start_time()));
  if (psi_gap >= best) return {psi_gap, std::nullopt};
  return {best, best_t};
}

double directed_hausdorff(const PathSet &k1, const PathSet &k2)
{
  require(!k1.empty() && !k2.empty(), "hausdorff_distance: path sets must be non-empty");
  double sup = 0.0;
  for (const auto &g1 : k1.paths) {
    double inf = std::numeric_limits<double>::infinity();
    for (const auto &g2 : k2.paths) inf = std::min(inf, path_distance(g1, g2).value);
    sup = std::max(sup, inf);
  }
  return sup;
}

MetricResult hausdorff_distance(const PathSet &k1, const PathSet &k2)
{
  return {std::max(directed_hausdorff(k1, k2), directed_hausdorff(k2, k1)), std::nullopt};
}

} // namespace webweave
