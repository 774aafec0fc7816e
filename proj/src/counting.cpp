#include "webweave/counting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "webweave/error.hpp"

namespace webweave {

void CountingQuery::validate() const
{
  require(std::isfinite(t0) && std::isfinite(t) && std::isfinite(a) && std::isfinite(b),
          "counting query: non-finite field");
  require(t > 0.0, "counting query: t must be positive");
  require(a <= b, "counting query: a must not exceed b");
}

namespace {

std::size_t count_distinct(std::vector<double> &v, double tol)
{
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  std::size_t n = 1;
  double last = v.front();
  for (double x : v) {
    if (x - last > tol) ++n;
    last = x;
  }
  return n;
}

std::vector<double> distinct_values(std::vector<double> v, double tol)
{
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || x - out.back() > tol) out.push_back(x);
  return out;
}

double tolerance_for(const PathSet &k) { return k.lattice ? 0.0 : continuum_tolerance; }

struct Touch
{
  double start;
  double end;
};

// Forward paths alive at t0 whose value there lies in [a, b].
std::vector<Touch> touching(const PathSet &k, const CountingQuery &q)
{
  q.validate();
  const double t1 = q.t0 + q.t;
  std::vector<Touch> out;
  for (const auto &p : k.paths) {
    if (p.start_time() > q.t0) continue;
    if (!p.covers(q.t0) || !p.covers(t1)) {
      throw InvalidArgument("counting query [" + std::to_string(q.t0) + ", " + std::to_string(t1) +
                            "] exceeds the path set's time domain");
    }
    const double x0 = p.at(q.t0);
    if (x0 >= q.a && x0 <= q.b) out.push_back({x0, p.at(t1)});
  }
  return out;
}

} // namespace

std::size_t count_distinct_endpoints(std::span<const double> at_start, std::span<const double> at_end,
                                     double a, double b, double tolerance)
{
  require(at_start.size() == at_end.size(), "count_distinct_endpoints: size mismatch");
  std::vector<double> ends;
  for (std::size_t i = 0; i < at_start.size(); ++i)
    if (at_start[i] >= a && at_start[i] <= b) ends.push_back(at_end[i]);
  return count_distinct(ends, tolerance);
}

std::size_t eta(const PathSet &k, const CountingQuery &q)
{
  std::vector<double> ends;
  for (const auto &tp : touching(k, q)) ends.push_back(tp.end);
  return count_distinct(ends, tolerance_for(k));
}

EtaHat eta_hat(const PathSet &k, const CountingQuery &q)
{
  const auto n = eta(k, q);
  return {static_cast<long>(n) - 1, n == 0};
}

std::size_t eta_dual(const PathSet &backward, const CountingQuery &q)
{
  q.validate();
  const double t1 = q.t0 + q.t;
  std::vector<double> hits;
  for (const auto &p : backward.paths) {
    if (p.start_time() < t1) continue;
    if (!p.covers(q.t0) || !p.covers(t1)) {
      throw InvalidArgument("dual counting query exceeds the backward path set's time domain");
    }
    const double x = p.at(q.t0);
    if (x >= q.a && x <= q.b) hits.push_back(x);
  }
  return count_distinct(hits, tolerance_for(backward));
}

double theta(double u, double t)
{
  require(u >= 0.0 && t > 0.0, "theta: need u >= 0 and t > 0");
  return boost::math::erf(u / (2.0 * std::sqrt(t)));
}

double expected_eta(double a, double b, double t)
{
  require(b >= a && t > 0.0, "expected_eta: need b >= a and t > 0");
  return 1.0 + (b - a) / std::sqrt(std::numbers::pi * t);
}

bool NSetResult::split() const
{
  for (double x : n_all) {
    auto near = [x](double y) { return std::abs(x - y) <= continuum_tolerance; };
    if (std::none_of(n_plus.begin(), n_plus.end(), near) && std::none_of(n_minus.begin(), n_minus.end(), near))
      return true;
  }
  return false;
}

NSetResult n_sets(const PathSet &k, const CountingQuery &q)
{
  const auto touches = touching(k, q);
  NSetResult r;
  if (touches.empty()) return r;
  const double tol = tolerance_for(k);
  r.empty = false;
  r.l = touches.front().start;
  r.r = touches.front().start;
  for (const auto &tp : touches) {
    r.l = std::min(r.l, tp.start);
    r.r = std::max(r.r, tp.start);
  }
  std::vector<double> all, lo, hi;
  for (const auto &tp : touches) {
    all.push_back(tp.end);
    if (tp.start == r.l) lo.push_back(tp.end);
    if (tp.start == r.r) hi.push_back(tp.end);
  }
  r.n_all = distinct_values(std::move(all), tol);
  r.n_minus = distinct_values(std::move(lo), tol);
  r.n_plus = distinct_values(std::move(hi), tol);
  return r;
}

LatticeIndex::LatticeIndex(const PathSet &k) : set_(&k)
{
  for (std::size_t id = 0; id < k.paths.size(); ++id) {
    for (const auto &kn : k.paths[id].knots()) {
      require(kn.x == std::round(kn.x) && kn.t == std::round(kn.t), "LatticeIndex: path knots must be integral");
      sites_[key(static_cast<int>(kn.x), static_cast<int>(kn.t))].push_back(id);
    }
  }
}

std::span<const std::size_t> LatticeIndex::through(LatticeSite s) const
{
  auto it = sites_.find(key(s.x, s.t));
  if (it == sites_.end()) return {};
  return it->second;
}

PointType classify_point(const LatticeIndex &index, LatticeSite site, int probe_depth)
{
  require(probe_depth >= 1, "classify_point: probe_depth must be positive");
  const auto ids = index.through(site);
  PointType type{0, 0, probe_depth};
  if (ids.empty()) return type;

  const auto &paths = index.paths().paths;
  const bool forward = paths[ids.front()].direction() == Direction::forward;
  const int dir = forward ? 1 : -1;
  const double before = site.t - dir;              // previous row along the path's direction
  const double probe_in = site.t - dir * probe_depth;
  const double probe_out = site.t + dir * probe_depth;

  std::vector<double> in, out;
  bool reaches_out = false;
  for (std::size_t id : ids) {
    const auto &p = paths[id];
    const bool old_enough = forward ? p.start_time() <= probe_in : p.start_time() >= probe_in;
    if (old_enough) in.push_back(p.at(before));
    if (p.covers(probe_out)) {
      reaches_out = true;
      out.push_back(p.at(probe_out));
    }
  }
  if (!reaches_out) {
    throw InvalidArgument("classify_point: site (" + std::to_string(site.x) + "," + std::to_string(site.t) +
                          ") lacks probe_depth rows of margin");
  }
  type.m_in = static_cast<int>(count_distinct(in, 0.0));
  type.m_out = static_cast<int>(count_distinct(out, 0.0));
  return type;
}

int opposite_germs(const IncrementField &field, LatticeSite site, int probe_depth)
{
  require(probe_depth >= 1, "opposite_germs: probe_depth must be positive");
  const auto &w = field.window();
  std::vector<double> ends;
  if ((site.x + site.t) % 2 == 0) {
    const int row = site.t - probe_depth;
    require(row >= w.t_min, "opposite_germs: insufficient margin below the site");
    for (LatticeSite s : {LatticeSite{site.x - 1, site.t}, LatticeSite{site.x + 1, site.t},
                          LatticeSite{site.x, site.t - 1}}) {
      const auto p = trace_dual(field, s);
      ends.push_back(p.at(row));
    }
  } else {
    const int row = site.t + probe_depth;
    require(row <= w.t_max, "opposite_germs: insufficient margin above the site");
    for (LatticeSite s : {LatticeSite{site.x - 1, site.t}, LatticeSite{site.x + 1, site.t},
                          LatticeSite{site.x, site.t + 1}}) {
      const auto p = trace_forward(field, s);
      ends.push_back(p.at(row));
    }
  }
  return static_cast<int>(count_distinct(ends, 0.0));
}

std::vector<SiteRecord> coalescence_points(const PathSet &k)
{
  std::map<std::pair<int, int>, std::vector<std::size_t>> sites;
  for (std::size_t id = 0; id < k.paths.size(); ++id)
    for (const auto &kn : k.paths[id].knots())
      sites[{static_cast<int>(kn.t), static_cast<int>(kn.x)}].push_back(id);

  std::vector<SiteRecord> out;
  for (const auto &[tx, ids] : sites) {
    if (ids.size() < 2) continue;
    const double prev = tx.first - 1;
    std::vector<double> before;
    for (std::size_t id : ids)
      if (k.paths[id].covers(prev)) before.push_back(k.paths[id].at(prev));
    if (count_distinct(before, 0.0) >= 2) out.push_back({tx.second, tx.first});
  }
  return out;
}

} // namespace webweave
