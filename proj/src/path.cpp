#include "webweave/path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "webweave/error.hpp"

namespace webweave {

Path::Path(std::vector<Knot> knots, Direction direction)
    : knots_(std::move(knots)), direction_(direction)
{
  require(!knots_.empty(), "Path: at least one knot required");
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    require(std::isfinite(knots_[k].t) && std::isfinite(knots_[k].x), "Path: non-finite knot");
    if (k > 0) require(knots_[k].t > knots_[k - 1].t, "Path: knot times must be strictly increasing");
  }
}

double Path::at(double t) const
{
  if (!covers(t)) {
    throw InvalidArgument("Path::at: time " + std::to_string(t) + " outside [" +
                          std::to_string(begin_time()) + ", " + std::to_string(end_time()) + "]");
  }
  return extended(t);
}

double Path::extended(double t) const noexcept
{
  if (t <= knots_.front().t) return knots_.front().x;
  if (t >= knots_.back().t) return knots_.back().x;
  auto hi = std::upper_bound(knots_.begin(), knots_.end(), t,
                             [](double v, const Knot &k) { return v < k.t; });
  auto lo = hi - 1;
  if (lo->t == t) return lo->x;
  const double w = (t - lo->t) / (hi->t - lo->t);
  return lo->x + w * (hi->x - lo->x);
}

std::pair<double, double> PathSet::time_span() const
{
  require(!paths.empty(), "PathSet::time_span: empty set");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto &p : paths) {
    lo = std::min(lo, p.begin_time());
    hi = std::max(hi, p.end_time());
  }
  return {lo, hi};
}

namespace {

std::vector<double> merged_times(const Path &p, const Path &q, double lo, double hi)
{
  std::vector<double> ts;
  ts.reserve(p.knots().size() + q.knots().size() + 2);
  ts.push_back(lo);
  ts.push_back(hi);
  for (const auto &k : p.knots())
    if (k.t > lo && k.t < hi) ts.push_back(k.t);
  for (const auto &k : q.knots())
    if (k.t > lo && k.t < hi) ts.push_back(k.t);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

} // namespace

bool strictly_cross(const Path &p, const Path &q)
{
  const double lo = std::max(p.begin_time(), q.begin_time());
  const double hi = std::min(p.end_time(), q.end_time());
  if (lo >= hi) return false;
  const auto ts = merged_times(p, q, lo, hi);
  double prev = p.extended(ts.front()) - q.extended(ts.front());
  for (std::size_t k = 1; k < ts.size(); ++k) {
    const double cur = p.extended(ts[k]) - q.extended(ts[k]);
    // The difference is linear between merged knots, so a strict flip
    // between consecutive knots is exactly a crossing away from the knots.
    if ((prev > 0 && cur < 0) || (prev < 0 && cur > 0)) return true;
    prev = cur;
  }
  return false;
}

std::optional<std::pair<std::size_t, std::size_t>> find_crossing(const PathSet &set)
{
  for (std::size_t i = 0; i < set.paths.size(); ++i)
    for (std::size_t j = i + 1; j < set.paths.size(); ++j)
      if (strictly_cross(set.paths[i], set.paths[j])) return std::pair{i, j};
  return std::nullopt;
}

std::optional<std::pair<std::size_t, std::size_t>> find_crossing(const PathSet &a, const PathSet &b)
{
  for (std::size_t i = 0; i < a.paths.size(); ++i)
    for (std::size_t j = 0; j < b.paths.size(); ++j)
      if (strictly_cross(a.paths[i], b.paths[j])) return std::pair{i, j};
  return std::nullopt;
}

} // namespace webweave
