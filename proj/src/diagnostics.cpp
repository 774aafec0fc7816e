#include "webweave/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <boost/math/special_functions/erf.hpp>

#include "webweave/brownian_sim.hpp"
#include "webweave/error.hpp"
#include "webweave/rng.hpp"
#include "webweave/stats.hpp"

namespace webweave {

double WalkEnsemble::space_unit() const { return delta / std::sqrt(law.variance()); }

void validate(const EnsembleLaw &law)
{
  if (const auto *w = std::get_if<WalkEnsemble>(&law)) {
    require(std::isfinite(w->delta) && w->delta > 0.0, "walk ensemble: delta must be positive");
  } else {
    const auto &s = std::get<SkeletonEnsemble>(law);
    require(std::isfinite(s.grid_dt) && s.grid_dt > 0.0, "skeleton ensemble: grid_dt must be positive");
    require(std::isfinite(s.start_spacing) && s.start_spacing > 0.0,
            "skeleton ensemble: start_spacing must be positive");
    require(std::isfinite(s.pad) && s.pad >= 0.0, "skeleton ensemble: pad must be non-negative");
  }
}

nlohmann::json describe(const EnsembleLaw &law)
{
  if (const auto *w = std::get_if<WalkEnsemble>(&law)) {
    nlohmann::json support = nlohmann::json::array();
    for (const auto &[v, p] : w->law.support()) support.push_back({v, p});
    return {{"kind", "walk"}, {"delta", w->delta}, {"support", support}};
  }
  const auto &s = std::get<SkeletonEnsemble>(law);
  return {{"kind", "skeleton"},
          {"grid_dt", s.grid_dt},
          {"start_spacing", s.start_spacing},
          {"pad", s.pad},
          {"bridge_correction", s.bridge_correction}};
}

void McOptions::validate() const
{
  require(replicas >= 100, "too few replicas: " + std::to_string(replicas) + " (at least 100 required)");
  require(threads >= 1, "threads must be at least 1");
  require(std::isfinite(z) && z > 0.0, "z must be positive");
}

namespace {

// Sites a walk from the origin can occupy at `row`: every increment is
// congruent to the same value modulo the lattice span, so the reachable sites
// shift by that value each row.  Walks from different residue classes could
// never meet.
bool on_walk_lattice(const IncrementLaw &law, long x, long row)
{
  const long span = law.lattice_span();
  const long shift = law.support().front().first;
  return ((x - shift * row) % span + span) % span == 0;
}

long walk_row(const WalkEnsemble &ens, double t) { return std::lround(t / ens.time_unit()); }

// Paths tracked from an interval at t0: row 0 holds start positions (NaN for
// helpers that only pad the interval), row k the positions at t0 + times[k-1].
using Tracked = std::vector<std::vector<double>>;

Tracked track_skeleton(const SkeletonEnsemble &ens, double a, double b, double t0, std::span<const double> times,
                       std::uint64_t seed)
{
  const double h = ens.start_spacing;
  const long n = std::lround((b - a) / h);
  const long np = std::lround(ens.pad / h);
  SkeletonSpec spec;
  for (long i = -np; i <= n + np; ++i) spec.starts.push_back({i == n ? b : a + static_cast<double>(i) * h, t0});
  spec.grid_dt = ens.grid_dt;
  spec.horizon = t0 + *std::max_element(times.begin(), times.end());
  spec.seed = seed;
  spec.bridge_correction = ens.bridge_correction;
  spec.record_paths = false;
  spec.observe_times.push_back(t0);
  for (double t : times) spec.observe_times.push_back(t0 + t);
  auto res = sample_skeleton(spec);
  return std::move(res.snapshots);
}

Tracked track(const EnsembleLaw &law, double a, double b, double t0, std::span<const double> times,
              std::uint64_t seed)
{
  if (const auto *w = std::get_if<WalkEnsemble>(&law)) return walk_positions(*w, a, b, t0, times, seed);
  return track_skeleton(std::get<SkeletonEnsemble>(law), a, b, t0, times, seed);
}

double fraction(std::span<const char> hits)
{
  return static_cast<double>(std::count(hits.begin(), hits.end(), 1)) / static_cast<double>(hits.size());
}

std::vector<double> sorted_ends(const Tracked &tr, std::size_t row, double a, double b)
{
  std::vector<double> ends;
  for (std::size_t i = 0; i < tr[0].size(); ++i)
    if (tr[0][i] >= a && tr[0][i] <= b) ends.push_back(tr[row][i]);
  std::sort(ends.begin(), ends.end());
  return ends;
}

std::size_t distinct(const std::vector<double> &sorted)
{
  if (sorted.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] - sorted[i - 1] > continuum_tolerance) ++n;
  return n;
}

} // namespace

std::vector<int> walk_sites(const WalkEnsemble &ens, double a, double b, double t0)
{
  require(a <= b, "walk_sites: a must not exceed b");
  const double s = ens.space_unit();
  const long row = walk_row(ens, t0);
  const long lo = static_cast<long>(std::ceil(a / s - 1e-9));
  const long hi = static_cast<long>(std::floor(b / s + 1e-9));
  std::vector<int> out;
  for (long x = lo; x <= hi; ++x)
    if (on_walk_lattice(ens.law, x, row)) out.push_back(static_cast<int>(x));
  return out;
}

std::vector<std::vector<double>> walk_positions(const WalkEnsemble &ens, double a, double b, double t0,
                                                std::span<const double> times, std::uint64_t seed)
{
  const double s = ens.space_unit();
  const long r0 = walk_row(ens, t0);
  std::vector<int> pos = walk_sites(ens, a, b, t0);

  std::vector<long> rows;
  for (double t : times) {
    require(t > 0.0, "walk_positions: observation times must be positive");
    rows.push_back(r0 + std::max(1L, walk_row(ens, t)));
  }
  const long r_end = rows.empty() ? r0 : *std::max_element(rows.begin(), rows.end());

  std::vector<std::vector<double>> out(times.size() + 1);
  auto snapshot = [&](std::vector<double> &dst) {
    dst.resize(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) dst[i] = pos[i] * s;
  };
  snapshot(out[0]);
  for (long r = r0; r < r_end; ++r) {
    for (auto &x : pos) x += sample_increment(ens.law, seed, x, static_cast<int>(r));
    for (std::size_t k = 0; k < rows.size(); ++k)
      if (rows[k] == r + 1) snapshot(out[k + 1]);
  }
  return out;
}

std::size_t walk_eta(const WalkEnsemble &ens, const CountingQuery &q, std::uint64_t seed)
{
  q.validate();
  const double times[] = {q.t};
  const auto tr = walk_positions(ens, q.a, q.b, q.t0, times, seed);
  return distinct(sorted_ends(tr, 1, q.a, q.b));
}

std::size_t skeleton_eta(const SkeletonEnsemble &ens, const CountingQuery &q, std::uint64_t seed)
{
  q.validate();
  const double times[] = {q.t};
  const auto tr = track_skeleton(ens, q.a, q.b, q.t0, times, seed);
  return count_distinct_endpoints(tr[0], tr[1], q.a, q.b, continuum_tolerance);
}

std::size_t sample_eta_once(const EnsembleLaw &law, const CountingQuery &q, std::uint64_t seed)
{
  if (const auto *w = std::get_if<WalkEnsemble>(&law)) return walk_eta(*w, q, seed);
  return skeleton_eta(std::get<SkeletonEnsemble>(law), q, seed);
}

Path walk_path(const WalkEnsemble &ens, double t_end, std::uint64_t seed)
{
  require(t_end > 0.0, "walk_path: t_end must be positive");
  const double s = ens.space_unit(), tau = ens.time_unit();
  const long rows = std::max(1L, walk_row(ens, t_end));
  std::vector<Knot> knots;
  knots.reserve(static_cast<std::size_t>(rows) + 1);
  int x = 0;
  for (long r = 0; r <= rows; ++r) {
    knots.push_back({static_cast<double>(r) * tau, x * s});
    if (r < rows) x += sample_increment(ens.law, seed, x, static_cast<int>(r));
  }
  return Path(std::move(knots));
}

std::vector<std::size_t> sample_eta(const EnsembleLaw &law, const CountingQuery &q, const McOptions &opt)
{
  validate(law);
  opt.validate();
  q.validate();
  return run_replicas(opt.replicas, opt.threads,
                      [&](std::size_t i) { return sample_eta_once(law, q, derive_seed(opt.seed, i)); });
}

CountingCheck check_counting(std::span<const std::size_t> etas, const CountingQuery &q, int k_max, double z)
{
  require(etas.size() >= 100, "check_counting: too few replicas");
  require(k_max >= 1, "check_counting: k_max must be positive");
  const std::size_t n = etas.size();
  std::vector<double> values(etas.begin(), etas.end());
  const auto ms = stats::mean_se(values);

  CountingCheck out;
  out.mean_eta = {ms.mean, ms.se, n, {{"t0", q.t0}, {"t", q.t}, {"a", q.a}, {"b", q.b}}};
  out.expected = expected_eta(q.a, q.b, q.t);
  out.mean_ok = std::abs(ms.mean - out.expected) <= z * ms.se;

  // tail[k] = P(eta_hat >= k) = P(eta >= k + 1)
  std::vector<double> tail(static_cast<std::size_t>(k_max) + 1);
  for (int k = 0; k <= k_max; ++k) {
    const auto c = std::count_if(etas.begin(), etas.end(), [k](std::size_t e) { return e >= static_cast<std::size_t>(k + 1); });
    tail[static_cast<std::size_t>(k)] = static_cast<double>(c) / static_cast<double>(n);
  }
  auto se = [n](double p) { return stats::binomial_se(p, n); };
  const double th = theta(q.b - q.a, q.t);
  for (int k = 1; k <= k_max; ++k) {
    TailRow row;
    row.k = k;
    row.p = tail[static_cast<std::size_t>(k)];
    row.se = se(row.p);
    row.bound = std::pow(th, k);
    row.bound_ok = row.p <= row.bound + z * row.se;
    const double prev = tail[static_cast<std::size_t>(k - 1)], p1 = tail[1];
    row.submult = prev * p1;
    row.submult_se = std::hypot(p1 * se(prev), prev * se(p1));
    row.submult_ok = row.p <= row.submult + z * std::hypot(row.se, row.submult_se);
    out.tails.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct I1Replica
{
  double marginal;
  std::vector<double> meet; // per pair, +inf when censored
};

std::vector<std::pair<std::size_t, std::size_t>> pairs_of(std::size_t n)
{
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.emplace_back(i, j);
  return out;
}

I1Replica walk_i1_replica(const WalkEnsemble &ens, std::span<const int> sites, double horizon, std::uint64_t seed)
{
  const double s = ens.space_unit();
  const long r1 = walk_row(ens, 1.0);
  const long rh = walk_row(ens, horizon);
  const long r_end = std::max(r1, rh);
  const auto prs = pairs_of(sites.size());
  const std::uint64_t field_seed = derive_seed(seed, 0);
  Xoshiro256 smooth(derive_seed(seed, 1));

  I1Replica out{0.0, std::vector<double>(prs.size(), std::numeric_limits<double>::infinity())};
  std::vector<int> pos(sites.begin(), sites.end());
  for (long r = 0; r < r_end; ++r) {
    for (auto &x : pos) x += sample_increment(ens.law, field_seed, x, static_cast<int>(r));
    if (r + 1 == r1) {
      // Spread the lattice atom over its cell so the marginal is continuous.
      const double cell = ens.law.lattice_span() * s;
      out.marginal = (pos[0] - sites[0]) * s + (smooth.uniform() - 0.5) * cell;
    }
    if (r + 1 <= rh) {
      for (std::size_t p = 0; p < prs.size(); ++p)
        if (std::isinf(out.meet[p]) && pos[prs[p].first] == pos[prs[p].second])
          out.meet[p] = static_cast<double>(r + 1) * ens.time_unit();
    }
  }
  return out;
}

I1Replica skeleton_i1_replica(const SkeletonEnsemble &ens, std::span<const double> starts, double horizon,
                              std::uint64_t seed)
{
  SkeletonSpec spec;
  for (double x : starts) spec.starts.push_back({x, 0.0});
  spec.grid_dt = ens.grid_dt;
  spec.horizon = std::max(1.0, horizon);
  spec.seed = seed;
  spec.bridge_correction = ens.bridge_correction;
  spec.record_paths = false;
  spec.observe_times = {1.0};
  const auto res = sample_skeleton(spec);

  const auto prs = pairs_of(starts.size());
  I1Replica out{res.snapshots[0][0] - starts[0], std::vector<double>(prs.size(), std::numeric_limits<double>::infinity())};
  std::vector<std::size_t> root(starts.size());
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](std::size_t v) {
    while (root[v] != v) v = root[v] = root[root[v]];
    return v;
  };
  for (const auto &ev : res.events) {
    if (ev.tau > horizon) break;
    root[find(ev.path)] = find(ev.into);
    for (std::size_t p = 0; p < prs.size(); ++p)
      if (std::isinf(out.meet[p]) && find(prs[p].first) == find(prs[p].second)) out.meet[p] = ev.tau;
  }
  return out;
}

} // namespace

I1Report check_I1(const EnsembleLaw &law, std::span<const double> starts, std::span<const double> delta_seq,
                  double horizon, const McOptions &opt)
{
  validate(law);
  opt.validate();
  require(!starts.empty() && starts.size() <= 4, "check_I1: between 1 and 4 starts");
  require(horizon > 0.0, "check_I1: horizon must be positive");

  I1Report rep;
  rep.parameters = {{"ensemble", describe(law)},
                    {"starts", std::vector<double>(starts.begin(), starts.end())},
                    {"horizon", horizon},
                    {"replicas", opt.replicas},
                    {"seed", opt.seed}};
  const auto prs = pairs_of(starts.size());
  const bool walks = std::holds_alternative<WalkEnsemble>(law);
  std::vector<double> deltas = walks ? std::vector<double>(delta_seq.begin(), delta_seq.end()) : std::vector<double>{0.0};
  require(!deltas.empty(), "check_I1: empty delta sequence");

  for (std::size_t d = 0; d < deltas.size(); ++d) {
    const std::uint64_t row_seed = derive_seed(opt.seed, d);
    std::vector<I1Replica> reps;
    std::vector<double> realised(starts.begin(), starts.end());
    if (walks) {
      WalkEnsemble ens = std::get<WalkEnsemble>(law);
      ens.delta = deltas[d];
      validate(EnsembleLaw{ens});
      const double s = ens.space_unit();
      const int span = ens.law.lattice_span();
      std::vector<int> sites;
      for (double x : starts) sites.push_back(span * static_cast<int>(std::lround(x / (s * span))));
      for (std::size_t i = 0; i < sites.size(); ++i) realised[i] = sites[i] * s;
      reps = run_replicas(opt.replicas, opt.threads,
                          [&](std::size_t i) { return walk_i1_replica(ens, sites, horizon, derive_seed(row_seed, i)); });
    } else {
      const auto &ens = std::get<SkeletonEnsemble>(law);
      reps = run_replicas(opt.replicas, opt.threads, [&](std::size_t i) {
        return skeleton_i1_replica(ens, starts, horizon, derive_seed(row_seed, i));
      });
    }

    I1Row row;
    row.delta = deltas[d];
    std::vector<double> marg;
    for (const auto &r : reps) marg.push_back(r.marginal);
    const auto ks = stats::ks_test(std::move(marg), stats::normal_cdf);
    row.marginal_ks = ks.distance;
    row.marginal_ks_p = ks.p_value;
    row.marginal_ks_se = stats::ks_se(opt.replicas);
    for (std::size_t p = 0; p < prs.size(); ++p) {
      const double u = std::abs(realised[prs[p].first] - realised[prs[p].second]);
      std::vector<double> times;
      std::size_t met1 = 0;
      for (const auto &r : reps) {
        times.push_back(r.meet[p]);
        if (r.meet[p] <= 1.0) ++met1;
      }
      auto cdf = [u](double s) { return s <= 0.0 ? 0.0 : (u == 0.0 ? 1.0 : boost::math::erfc(u / (2.0 * std::sqrt(s)))); };
      const auto pks = stats::ks_test_censored(std::move(times), cdf, horizon);
      PairStat ps;
      ps.i = prs[p].first;
      ps.j = prs[p].second;
      ps.u = u;
      ps.ks = pks.distance;
      ps.ks_se = stats::ks_se(opt.replicas);
      ps.ks_p = pks.p_value;
      ps.p_meet = static_cast<double>(met1) / static_cast<double>(opt.replicas);
      ps.p_meet_se = stats::binomial_se(ps.p_meet, opt.replicas);
      ps.p_meet_expected = 1.0 - theta(u, 1.0);
      row.pairs.push_back(ps);
    }
    rep.rows.push_back(std::move(row));
  }

  std::vector<double> est, se;
  for (const auto &r : rep.rows) {
    est.push_back(r.marginal_ks);
    se.push_back(r.marginal_ks_se);
  }
  rep.marginal_trend_ok = stats::non_increasing(est, se, opt.z);
  est.clear();
  se.clear();
  for (const auto &r : rep.rows) {
    if (r.pairs.empty()) continue;
    est.push_back(r.pairs[0].ks);
    se.push_back(r.pairs[0].ks_se);
  }
  rep.pair_trend_ok = stats::non_increasing(est, se, opt.z);
  return rep;
}

namespace {

std::vector<SpacePoint> checked_probes(std::span<const SpacePoint> probes)
{
  require(!probes.empty(), "probe grid is empty");
  return {probes.begin(), probes.end()};
}

void check_eps(std::span<const double> eps_seq)
{
  require(!eps_seq.empty(), "epsilon sequence is empty");
  for (double e : eps_seq) require(std::isfinite(e) && e > 0.0, "epsilon values must be positive");
}

} // namespace

BReport estimate_B(const EnsembleLaw &law, double t, std::span<const double> eps_seq,
                   std::span<const SpacePoint> probes, const McOptions &opt)
{
  validate(law);
  opt.validate();
  check_eps(eps_seq);
  require(t > 0.0, "estimate_B: t must be positive");
  const auto grid = checked_probes(probes);

  BReport rep;
  nlohmann::json pj = nlohmann::json::array();
  for (const auto &p : grid) pj.push_back({{"a", p.x}, {"t0", p.t}});
  rep.parameters = {{"ensemble", describe(law)}, {"t", t},
                    {"eps", std::vector<double>(eps_seq.begin(), eps_seq.end())},
                    {"probes", pj}, {"replicas", opt.replicas}, {"seed", opt.seed}};

  for (std::size_t e = 0; e < eps_seq.size(); ++e) {
    const double eps = eps_seq[e];
    BRow row{eps, 0, 0, 0, 0, 0, 0};
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const CountingQuery q{grid[p].t, t, grid[p].x, grid[p].x + eps};
      const std::uint64_t stream = derive_seed(derive_seed(opt.seed, e), p);
      const auto etas = run_replicas(opt.replicas, opt.threads,
                                     [&](std::size_t i) { return sample_eta_once(law, q, derive_seed(stream, i)); });
      const double n = static_cast<double>(etas.size());
      const double p1 = std::count_if(etas.begin(), etas.end(), [](std::size_t v) { return v >= 2; }) / n;
      const double p2 = std::count_if(etas.begin(), etas.end(), [](std::size_t v) { return v >= 3; }) / n;
      if (p == 0 || p1 > row.p1) {
        row.p1 = p1;
        row.p1_se = stats::binomial_se(p1, etas.size());
      }
      if (p == 0 || p2 > row.p2) {
        row.p2 = p2;
        row.p2_se = stats::binomial_se(p2, etas.size());
      }
    }
    row.p2_over_eps = row.p2 / eps;
    row.p2_over_eps_se = row.p2_se / eps;
    rep.rows.push_back(row);
  }

  std::vector<double> a, as, b, bs;
  for (const auto &r : rep.rows) {
    a.push_back(r.p1);
    as.push_back(r.p1_se);
    b.push_back(r.p2_over_eps);
    bs.push_back(r.p2_over_eps_se);
  }
  rep.b1_trend_ok = stats::non_increasing(a, as, opt.z);
  rep.b2_trend_ok = stats::non_increasing(b, bs, opt.z);
  return rep;
}

BPrimeReport estimate_Bprime(const EnsembleLaw &law, double beta, std::span<const double> t_seq,
                             std::span<const double> eps_seq, std::span<const SpacePoint> probes,
                             const McOptions &opt)
{
  validate(law);
  opt.validate();
  check_eps(eps_seq);
  require(beta > 0.0, "estimate_Bprime: beta must be positive");
  require(!t_seq.empty(), "estimate_Bprime: empty t sequence");
  for (double t : t_seq) require(t > beta, "estimate_Bprime: every t must exceed beta");
  const auto grid = checked_probes(probes);

  BPrimeReport rep;
  nlohmann::json pj = nlohmann::json::array();
  for (const auto &p : grid) pj.push_back({{"a", p.x}, {"t0", p.t}});
  rep.parameters = {{"ensemble", describe(law)}, {"beta", beta},
                    {"t", std::vector<double>(t_seq.begin(), t_seq.end())},
                    {"eps", std::vector<double>(eps_seq.begin(), eps_seq.end())},
                    {"probes", pj}, {"replicas", opt.replicas}, {"seed", opt.seed}};

  struct Counts
  {
    std::vector<char> multi, split;
  };
  for (std::size_t e = 0; e < eps_seq.size(); ++e) {
    const double eps = eps_seq[e];
    BPrimeRow row{eps, 0, 0, 0, 0};
    bool first = true;
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const double a = grid[p].x - eps, b = grid[p].x + eps, t0 = grid[p].t;
      const std::uint64_t stream = derive_seed(derive_seed(opt.seed, e), p);
      const auto per = run_replicas(opt.replicas, opt.threads, [&](std::size_t i) {
        const auto tr = track(law, a, b, t0, t_seq, derive_seed(stream, i));
        Counts c;
        double l = std::numeric_limits<double>::infinity(), r = -l;
        for (double x : tr[0])
          if (x >= a && x <= b) {
            l = std::min(l, x);
            r = std::max(r, x);
          }
        for (std::size_t k = 1; k < tr.size(); ++k) {
          const auto ends = sorted_ends(tr, k, a, b);
          c.multi.push_back(distinct(ends) > 1);
          std::vector<double> edge;
          for (std::size_t j = 0; j < tr[0].size(); ++j)
            if (tr[0][j] == l || tr[0][j] == r) edge.push_back(tr[k][j]);
          bool split = false;
          for (double v : ends)
            split = split || std::none_of(edge.begin(), edge.end(),
                                          [v](double w) { return std::abs(v - w) <= continuum_tolerance; });
          c.split.push_back(split);
        }
        return c;
      });
      for (std::size_t k = 0; k < t_seq.size(); ++k) {
        std::vector<char> m, s;
        for (const auto &c : per) {
          m.push_back(c.multi[k]);
          s.push_back(c.split[k]);
        }
        const double pm = fraction(m), psplit = fraction(s);
        if (first || pm > row.p_multi) {
          row.p_multi = pm;
          row.p_multi_se = stats::binomial_se(pm, opt.replicas);
        }
        if (first || psplit / eps > row.p_split_over_eps) {
          row.p_split_over_eps = psplit / eps;
          row.p_split_over_eps_se = stats::binomial_se(psplit, opt.replicas) / eps;
        }
        first = false;
      }
    }
    rep.rows.push_back(row);
  }

  std::vector<double> a, as, b, bs;
  for (const auto &r : rep.rows) {
    a.push_back(r.p_multi);
    as.push_back(r.p_multi_se);
    b.push_back(r.p_split_over_eps);
    bs.push_back(r.p_split_over_eps_se);
  }
  rep.multi_trend_ok = stats::non_increasing(a, as, opt.z);
  rep.split_trend_ok = stats::non_increasing(b, bs, opt.z);
  return rep;
}

bool tightness_event(const EnsembleLaw &law, double t, double u, SpacePoint anchor, std::uint64_t seed)
{
  require(t > 0.0 && u > 0.0, "tightness: t and u must be positive");
  const double x0 = anchor.x, t0 = anchor.t;

  if (const auto *w = std::get_if<WalkEnsemble>(&law)) {
    const double s = w->space_unit();
    const long r0 = walk_row(*w, t0);
    const long r1 = r0 + walk_row(*w, t);
    const long r2 = r0 + walk_row(*w, 2.0 * t);
    const long lo = static_cast<long>(std::ceil((x0 - u / 4) / s - 1e-9));
    const long hi = static_cast<long>(std::floor((x0 + u / 4) / s + 1e-9));
    std::vector<long> pos;
    for (long r = r0;; ++r) {
      if (r <= r1) {
        for (long x = lo; x <= hi; ++x)
          if (on_walk_lattice(w->law, x, r)) pos.push_back(x);
      }
      std::sort(pos.begin(), pos.end());
      pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
      for (long x : pos)
        if (std::abs(x * s - x0) >= u / 2) return true;
      if (r == r2) return false;
      for (auto &x : pos) x += sample_increment(w->law, seed, static_cast<int>(x), static_cast<int>(r));
    }
  }

  const auto &sk = std::get<SkeletonEnsemble>(law);
  const double h = sk.start_spacing;
  const long nx = std::lround((u / 2) / h);
  const double ht = sk.grid_dt * static_cast<double>(std::max(1L, std::lround(h * h / sk.grid_dt)));
  const long nt = static_cast<long>(std::floor(t / ht + 1e-9));
  SkeletonSpec spec;
  for (long m = 0; m <= nt; ++m)
    for (long i = 0; i <= nx; ++i)
      spec.starts.push_back({x0 - u / 4 + static_cast<double>(i) * (u / 2) / static_cast<double>(std::max(1L, nx)),
                             t0 + static_cast<double>(m) * ht});
  spec.grid_dt = sk.grid_dt;
  spec.horizon = t0 + 2.0 * t;
  spec.seed = seed;
  spec.bridge_correction = sk.bridge_correction;
  spec.record_paths = false;
  spec.exit_center = x0;
  spec.exit_half_width = u / 2;
  return sample_skeleton(spec).exited;
}

TightnessReport estimate_tightness(const EnsembleLaw &law, std::span<const double> t_seq, double u,
                                   std::span<const SpacePoint> probes, const McOptions &opt)
{
  validate(law);
  opt.validate();
  require(u > 0.0, "estimate_tightness: u must be positive");
  require(!t_seq.empty(), "estimate_tightness: empty t sequence");
  for (double t : t_seq) require(t > 0.0, "estimate_tightness: t values must be positive");
  const auto grid = checked_probes(probes);

  TightnessReport rep;
  nlohmann::json pj = nlohmann::json::array();
  for (const auto &p : grid) pj.push_back({{"x0", p.x}, {"t0", p.t}});
  rep.parameters = {{"ensemble", describe(law)}, {"u", u},
                    {"t", std::vector<double>(t_seq.begin(), t_seq.end())},
                    {"probes", pj}, {"replicas", opt.replicas}, {"seed", opt.seed}};

  for (std::size_t k = 0; k < t_seq.size(); ++k) {
    TightnessRow row{t_seq[k], 0, 0, 0, 0};
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const std::uint64_t stream = derive_seed(derive_seed(opt.seed, k), p);
      const auto hits = run_replicas(opt.replicas, opt.threads, [&](std::size_t i) {
        return static_cast<char>(tightness_event(law, t_seq[k], u, grid[p], derive_seed(stream, i)));
      });
      const double pr = fraction(hits);
      if (p == 0 || pr > row.p) {
        row.p = pr;
        row.p_se = stats::binomial_se(pr, opt.replicas);
      }
    }
    row.g = row.p / row.t;
    row.g_se = row.p_se / row.t;
    rep.rows.push_back(row);
  }
  std::vector<double> g, gs;
  for (const auto &r : rep.rows) {
    g.push_back(r.g);
    gs.push_back(r.g_se);
  }
  rep.trend_ok = stats::non_increasing(g, gs, opt.z);
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> checked_scales(std::span<const double> scales)
{
  std::vector<double> s(scales.begin(), scales.end());
  for (double v : s) require(std::isfinite(v) && v > 0.0, "box scales must be positive");
  std::sort(s.begin(), s.end(), std::greater<>());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  require(s.size() >= 3, "box counting needs at least 3 distinct scales");
  require(std::log10(s.front() / s.back()) >= 1.5 - 1e-12, "box scales must span at least 1.5 decades");
  return s;
}

double box_count(std::span<const SpacePoint> points, double scale)
{
  std::unordered_set<std::uint64_t> boxes;
  boxes.reserve(points.size());
  for (const auto &p : points) {
    const double bx = std::floor(p.x / scale), bt = std::floor(p.t / scale);
    require(std::abs(bx) < 2e9 && std::abs(bt) < 2e9, "box index overflow: scale too small for the point set");
    const auto ix = static_cast<std::uint32_t>(static_cast<std::int32_t>(bx));
    const auto it = static_cast<std::uint32_t>(static_cast<std::int32_t>(bt));
    boxes.insert((static_cast<std::uint64_t>(ix) << 32) | it);
  }
  return static_cast<double>(boxes.size());
}

void check_points(std::span<const SpacePoint> points, std::size_t min_points)
{
  require(points.size() >= min_points,
          "box counting needs at least " + std::to_string(min_points) + " points, got " + std::to_string(points.size()));
  require(!points.empty(), "box counting: empty point set");
  const bool all_same = std::all_of(points.begin(), points.end(), [&](const SpacePoint &p) {
    return p.x == points.front().x && p.t == points.front().t;
  });
  require(!all_same, "box counting: degenerate point set (all points identical)");
}

BoxCountSeries fit_series(std::vector<double> scales, std::vector<double> log_counts, double n_points)
{
  BoxCountSeries out;
  std::vector<double> lx;
  for (double s : scales) lx.push_back(std::log(1.0 / s));
  const auto fit = stats::linear_fit(lx, log_counts);
  out.scales = std::move(scales);
  for (double lc : log_counts) out.counts.push_back(std::exp(lc));
  out.fitted_dimension = fit.slope;
  out.fit_r2 = fit.r2;
  out.slope_se = fit.slope_se;
  const double inv = std::log(1.0 / out.scales.back());
  out.cap = inv > 0.0 ? std::log(n_points) / inv : std::numeric_limits<double>::infinity();
  out.within_cap = out.fitted_dimension <= out.cap + 1e-12;
  return out;
}

} // namespace

BoxCountSeries box_dimension(std::span<const SpacePoint> points, std::span<const double> scales, std::size_t min_points)
{
  auto s = checked_scales(scales);
  check_points(points, min_points);
  std::vector<double> lc;
  for (double v : s) lc.push_back(std::log(box_count(points, v)));
  auto out = fit_series(std::move(s), std::move(lc), static_cast<double>(points.size()));
  out.log_count_se.assign(out.scales.size(), 0.0);
  return out;
}

BoxCountSeries box_dimension_pooled(const std::vector<std::vector<SpacePoint>> &sets, std::span<const double> scales,
                                    std::size_t min_points)
{
  require(!sets.empty(), "box_dimension_pooled: no point sets");
  auto s = checked_scales(scales);
  std::size_t total = 0;
  for (const auto &set : sets) total += set.size();
  require(total >= min_points, "box counting needs at least " + std::to_string(min_points) + " points in total");
  const auto distinct_point = [&](const SpacePoint &p) {
    const auto &q = sets.front().front();
    return p.x != q.x || p.t != q.t;
  };
  bool spread = false;
  for (const auto &set : sets) {
    require(!set.empty(), "box_dimension_pooled: empty point set");
    spread = spread || std::any_of(set.begin(), set.end(), distinct_point);
  }
  require(spread, "box counting: degenerate point set (all points identical)");
  std::vector<std::vector<double>> per(s.size());
  for (const auto &set : sets) {
    for (std::size_t k = 0; k < s.size(); ++k) per[k].push_back(std::log(box_count(set, s[k])));
  }
  std::vector<double> lc, se;
  for (const auto &v : per) {
    if (v.size() > 1) {
      const auto ms = stats::mean_se(v);
      lc.push_back(ms.mean);
      se.push_back(ms.se);
    } else {
      lc.push_back(v.front());
      se.push_back(0.0);
    }
  }
  auto out = fit_series(std::move(s), std::move(lc), static_cast<double>(total) / static_cast<double>(sets.size()));
  out.log_count_se = std::move(se);
  return out;
}

std::vector<SpacePoint> graph_points(const Path &path, double spacing)
{
  require(spacing > 0.0, "graph_points: spacing must be positive");
  const auto k = path.knots();
  std::vector<SpacePoint> out;
  for (std::size_t i = 0; i + 1 < k.size(); ++i) {
    const double dt = k[i + 1].t - k[i].t;
    const auto m = static_cast<std::size_t>(std::ceil(dt / spacing));
    for (std::size_t j = 0; j < m; ++j) {
      const double w = static_cast<double>(j) / static_cast<double>(m);
      out.push_back({k[i].x + w * (k[i + 1].x - k[i].x), k[i].t + w * dt});
    }
  }
  out.push_back({k.back().x, k.back().t});
  return out;
}

std::vector<SpacePoint> record_projection(const Path &x_path, const Path &y_path, double a, double b, double t0)
{
  require(std::abs(a) + std::abs(b) > 0.0, "record_projection: a and b must not both vanish");
  require(t0 > 0.0, "record_projection: t0 must be positive");
  require(x_path.covers(0.0) && x_path.covers(t0) && y_path.covers(0.0) && y_path.covers(t0),
          "record_projection: both paths must cover [0, t0]");
  std::vector<SpacePoint> out;
  double running = -std::numeric_limits<double>::infinity();
  for (const auto &k : x_path.knots()) {
    if (k.t < 0.0) continue;
    if (k.t > t0) break;
    running = std::max(running, k.x);
    if (k.x == running) out.push_back({a * k.x + b * y_path.at(k.t), k.t});
  }
  return out;
}

// ---------------------------------------------------------------------------

WalkBoundReport verify_walkbound(const WalkEnsemble &ens, const CountingQuery &q, int k, const McOptions &opt)
{
  require(k >= 2, "verify_walkbound: k must be at least 2");
  const auto etas = sample_eta(EnsembleLaw{ens}, q, opt);
  const double n = static_cast<double>(etas.size());
  WalkBoundReport rep;
  rep.k = k;
  rep.replicas = etas.size();
  rep.p_k = std::count_if(etas.begin(), etas.end(), [k](std::size_t e) { return e >= static_cast<std::size_t>(k); }) / n;
  rep.p2 = std::count_if(etas.begin(), etas.end(), [](std::size_t e) { return e >= 2; }) / n;
  rep.p_k_se = stats::binomial_se(rep.p_k, etas.size());
  rep.p2_se = stats::binomial_se(rep.p2, etas.size());
  if (rep.p2 > 0.0 && rep.p2_se >= rep.p2 / 10.0) {
    throw InvalidArgument("verify_walkbound: too few replicas for a standard error below a tenth of P(eta >= 2)");
  }
  rep.bound = std::pow(rep.p2, k - 1);
  rep.bound_se = (k - 1) * std::pow(rep.p2, k - 2) * rep.p2_se;
  rep.combined_se = std::hypot(rep.p_k_se, rep.bound_se);
  rep.pass = rep.p_k <= rep.bound + opt.z * rep.combined_se;
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<CountingQuery> duality_battery(const LatticeWindow &window, std::size_t n, std::uint64_t seed)
{
  window.validate();
  const int width = window.x_max - window.x_min;
  const int height = window.t_max - window.t_min;
  const int t_cap = std::min(height, (width - 4) / 4);
  require(t_cap >= 1, "duality_battery: window too small for interior queries");
  Xoshiro256 gen(seed);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(gen() % static_cast<std::uint64_t>(hi - lo + 1)); };

  std::vector<CountingQuery> out;
  while (out.size() < n) {
    const int t = pick(1, t_cap);
    const int t0 = pick(window.t_min, window.t_max - t);
    int a = pick(window.x_min + t + 1, window.x_max - t - 1);
    if ((a + t0) % 2 != 0) ++a;
    const int b_max = window.x_max - t - 1;
    if (a > b_max) continue;
    const int b = a + 2 * pick(0, (b_max - a) / 2);
    out.push_back({static_cast<double>(t0), static_cast<double>(t), static_cast<double>(a), static_cast<double>(b)});
  }
  return out;
}

Tally duality_check(const IncrementField &field, std::span<const CountingQuery> queries)
{
  const auto fwd = build_ensemble_all(field);
  const auto bwd = build_dual(field, DualStarts::all_sites);
  Tally tally;
  for (const auto &q : queries) {
    ++tally.checked;
    if (eta(fwd, q) != 1 + eta_dual(bwd, q)) ++tally.violations;
  }
  return tally;
}

Tally type_duality_check(const IncrementField &field, int probe_depth)
{
  require(probe_depth >= 1, "type_duality_check: probe_depth must be positive");
  const auto &w = field.window();
  const int m = probe_depth + 1;
  require(w.x_max - w.x_min > 2 * m && w.t_max - w.t_min > 2 * m, "type_duality_check: window too small");
  const auto fwd = build_ensemble_all(field);
  const auto bwd = build_dual(field, DualStarts::all_sites);
  const LatticeIndex fi(fwd), bi(bwd);

  Tally tally;
  for (int t = w.t_min + m; t <= w.t_max - m; ++t) {
    for (int x = w.x_min + m; x <= w.x_max - m; ++x) {
      const LatticeSite s{x, t};
      int m_in, m_out, mb_in, mb_out;
      if ((x + t) % 2 == 0) {
        const auto f = classify_point(fi, s, probe_depth);
        m_in = f.m_in;
        m_out = f.m_out;
        mb_in = classify_point(bi, s, probe_depth).m_in;
        mb_out = opposite_germs(field, s, probe_depth);
      } else {
        const auto b = classify_point(bi, s, probe_depth);
        mb_in = b.m_in;
        mb_out = b.m_out;
        m_in = classify_point(fi, s, probe_depth).m_in;
        m_out = opposite_germs(field, s, probe_depth);
      }
      ++tally.checked;
      if (mb_in != m_out - 1 || mb_out != m_in + 1) ++tally.violations;
    }
  }
  return tally;
}

} // namespace webweave
