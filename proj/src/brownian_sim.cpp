#include "webweave/brownian_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "webweave/error.hpp"

namespace webweave {

void SkeletonSpec::validate() const
{
  require(!starts.empty(), "skeleton: at least one start required");
  require(std::isfinite(grid_dt) && grid_dt > 0.0, "skeleton: grid_dt must be positive");
  require(std::isfinite(horizon), "skeleton: horizon must be finite");
  double t_lo = std::numeric_limits<double>::infinity(), t_hi = -t_lo;
  for (const auto &s : starts) {
    require(std::isfinite(s.x) && std::isfinite(s.t), "skeleton: non-finite start");
    t_lo = std::min(t_lo, s.t);
    t_hi = std::max(t_hi, s.t);
  }
  require(horizon > t_hi, "skeleton: horizon must exceed every start time");
  require(grid_dt < horizon - t_lo, "skeleton: grid_dt must be smaller than the time span");
}

namespace {

// Uniform time grid from the earliest start; the last step is shortened to
// land exactly on the horizon.
class Grid
{
public:
  explicit Grid(const SkeletonSpec &spec)
  {
    origin_ = spec.starts.front().t;
    for (const auto &s : spec.starts) origin_ = std::min(origin_, s.t);
    dt_ = spec.grid_dt;
    horizon_ = spec.horizon;
    steps_ = static_cast<std::size_t>(std::ceil((horizon_ - origin_) / dt_ - 1e-9));
  }

  std::size_t steps() const noexcept { return steps_; }
  double time(std::size_t k) const noexcept
  {
    return k >= steps_ ? horizon_ : origin_ + static_cast<double>(k) * dt_;
  }
  std::size_t snap(double t) const noexcept
  {
    const auto k = static_cast<std::size_t>(std::llround((t - origin_) / dt_));
    return std::min(k, steps_);
  }
  std::size_t snap_start(double t) const noexcept { return std::min(snap(t), steps_ - 1); }

  std::size_t index_of(double t) const
  {
    require(t >= origin_ - 1e-12 && t <= horizon_ + 1e-12, "observe time outside the simulated range");
    const std::size_t k = snap(t);
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    require(std::abs(time(k) - t) <= tol, "observe time " + std::to_string(t) + " is not on the time grid");
    return k;
  }

private:
  double origin_ = 0.0, dt_ = 0.0, horizon_ = 0.0;
  std::size_t steps_ = 0;
};

struct Cluster
{
  std::size_t label;
  double x;
  double x_old;
  bool bridge_hit = false; ///< met the right neighbour inside the last step
  std::vector<std::size_t> members;
};

} // namespace

SkeletonResult sample_skeleton(const SkeletonSpec &spec)
{
  spec.validate();
  const Grid grid(spec);
  const std::size_t n = spec.starts.size();

  std::vector<std::size_t> start_step(n);
  std::vector<std::vector<std::size_t>> starting_at(grid.steps());
  for (std::size_t j = 0; j < n; ++j) {
    start_step[j] = grid.snap_start(spec.starts[j].t);
    starting_at[start_step[j]].push_back(j);
  }
  std::vector<std::vector<std::size_t>> observing_at(grid.steps() + 1);
  for (std::size_t o = 0; o < spec.observe_times.size(); ++o)
    observing_at[grid.index_of(spec.observe_times[o])].push_back(o);
  const bool track_members = !spec.observe_times.empty();

  SkeletonResult result;
  result.snapshots.assign(spec.observe_times.size(),
                          std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
  std::vector<std::vector<Knot>> own(spec.record_paths ? n : 0);
  std::vector<std::size_t> merged_into(n, n);

  NormalStream normal(spec.seed);
  std::vector<Cluster> live;
  double t = grid.time(0), h = 0.0;

  // Folds cluster i + 1 into cluster i; the lower label survives and keeps its trajectory.
  auto merge = [&](std::size_t i) {
    Cluster &a = live[i];
    Cluster &b = live[i + 1];
    const double d0 = b.x_old - a.x_old;
    const double d1 = b.x - a.x;
    double frac = 0.0;
    if (h > 0.0 && d0 > 0.0) frac = d1 <= 0.0 ? d0 / (d0 - d1) : d0 / (d0 + d1);
    const double tau = t + frac * h;
    Cluster &s = a.label < b.label ? a : b;
    Cluster &q = a.label < b.label ? b : a;
    if (spec.record_paths) {
      const double xs = s.x_old + frac * (s.x - s.x_old);
      auto &k = own[q.label];
      if (k.empty() || tau > k.back().t) k.push_back({tau, xs});
    }
    result.events.push_back({tau, s.label, q.label});
    merged_into[q.label] = s.label;

    Cluster merged{s.label, s.x, s.x_old, b.bridge_hit, {}};
    if (track_members) {
      merged.members = std::move(a.members);
      merged.members.insert(merged.members.end(), b.members.begin(), b.members.end());
    }
    live[i] = std::move(merged);
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  };

  auto resolve = [&]() {
    std::size_t i = 0;
    while (i + 1 < live.size()) {
      if (live[i].x >= live[i + 1].x || live[i].bridge_hit) {
        merge(i);
        if (i > 0) --i;
      } else {
        ++i;
      }
    }
  };

  for (std::size_t k = 0;; ++k) {
    t = grid.time(k);
    if (k < grid.steps()) {
      h = 0.0;
      for (std::size_t j : starting_at[k]) {
        const double x = spec.starts[j].x;
        auto it = std::lower_bound(live.begin(), live.end(), x,
                                   [](const Cluster &c, double v) { return c.x < v; });
        Cluster c{j, x, x, false, {}};
        if (track_members) c.members.push_back(j);
        live.insert(it, std::move(c));
      }
      if (!starting_at[k].empty()) resolve();
    }

    if (spec.record_paths)
      for (const auto &c : live) own[c.label].push_back({t, c.x});
    for (std::size_t o : observing_at[k])
      for (const auto &c : live)
        for (std::size_t m : c.members) result.snapshots[o][m] = c.x;

    if (spec.exit_half_width > 0.0) {
      for (const auto &c : live)
        if (std::abs(c.x - spec.exit_center) >= spec.exit_half_width) result.exited = true;
      if (result.exited) break;
    }
    if (k == grid.steps()) break;

    h = grid.time(k + 1) - t;
    const double sd = std::sqrt(h);
    for (auto &c : live) {
      c.x_old = c.x;
      c.x += sd * normal();
      c.bridge_hit = false;
    }
    if (spec.bridge_correction) {
      // Two paths ending a step on the same side may still have met inside
      // it; the difference is a bridge of variance 2h.
      for (std::size_t i = 0; i + 1 < live.size(); ++i) {
        const double d0 = live[i + 1].x_old - live[i].x_old;
        const double d1 = live[i + 1].x - live[i].x;
        if (d1 > 0.0 && normal.uniform() < std::exp(-d0 * d1 / h)) live[i].bridge_hit = true;
      }
    }
    resolve();
  }

  if (spec.record_paths && !result.exited) {
    result.paths.label = "forward";
    std::vector<std::vector<Knot>> full(n);
    for (std::size_t j = 0; j < n; ++j) {
      full[j] = std::move(own[j]);
      if (merged_into[j] < n) {
        const auto &tail = full[merged_into[j]];
        const double t_last = full[j].back().t;
        auto it = std::upper_bound(tail.begin(), tail.end(), t_last,
                                   [](double v, const Knot &kn) { return v < kn.t; });
        full[j].insert(full[j].end(), it, tail.end());
      }
    }
    for (auto &k : full) result.paths.paths.emplace_back(std::move(k));
  }
  return result;
}

double pair_coalescence_time(double x1, double x2, Xoshiro256 &gen)
{
  const double u = std::abs(x1 - x2);
  if (u == 0.0) return 0.0;
  // P(T <= s) = erfc(u / (2 sqrt(s))); invert with V uniform on (0, 1).
  const double v = (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
  const double e = boost::math::erfc_inv(v);
  return u * u / (4.0 * e * e);
}

double pair_coalescence_time(double x1, double x2, std::uint64_t seed)
{
  Xoshiro256 gen(seed);
  return pair_coalescence_time(x1, x2, gen);
}

Path reflect_cr(const Path &raw_forward, const Path &backward)
{
  const double t2 = raw_forward.begin_time();
  const double t1 = backward.end_time();
  require(t2 < t1, "reflect_cr: forward start must precede the backward start");
  require(backward.begin_time() <= t2, "reflect_cr: backward path must reach down to the forward start");
  const double gap0 = raw_forward.start_value() - backward.at(t2);
  require(gap0 != 0.0, "reflect_cr: forward and backward paths start at the same value");
  const bool above = gap0 > 0.0;

  std::vector<Knot> out;
  out.reserve(raw_forward.knots().size());
  double push = 0.0;
  for (const auto &k : raw_forward.knots()) {
    if (k.t <= t1) {
      const double diff = k.x - backward.at(k.t);
      push = std::max(push, above ? -diff : diff);
    }
    out.push_back({k.t, above ? k.x + push : k.x - push});
  }
  return Path(std::move(out));
}

namespace {

// Maximum over a step of length h of a Brownian bridge with variance rate 2
// (the gap between two independent paths) running from d0 to d1.
double bridge_max(double d0, double d1, double h, double u)
{
  return 0.5 * (d0 + d1 + std::sqrt((d1 - d0) * (d1 - d0) - 4.0 * h * std::log1p(-u)));
}

// Whether two paths with gaps d0 and d1 at the ends of a step met inside it.
bool meets(double d0, double d1, double h, bool bridge, NormalStream &normal)
{
  if (d0 == 0.0 || d1 == 0.0 || (d0 > 0.0) != (d1 > 0.0)) return true;
  return bridge && normal.uniform() < std::exp(-d0 * d1 / h);
}

} // namespace

std::pair<PathSet, PathSet> sample_double_skeleton(const SkeletonSpec &spec)
{
  spec.validate();
  const Grid grid(spec);
  const std::size_t n = spec.starts.size();
  const std::size_t steps = grid.steps();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::size_t> ks(n);
  for (std::size_t j = 0; j < n; ++j) ks[j] = grid.snap_start(spec.starts[j].t);
  std::vector<std::vector<double>> fwd(n, std::vector<double>(steps + 1, nan));
  std::vector<std::vector<double>> bwd(n, std::vector<double>(steps + 1, nan));

  NormalStream normal(spec.seed);
  for (std::size_t j = 0; j < n; ++j) {
    const double x0 = spec.starts[j].x;
    const std::size_t k0 = ks[j];

    // Forward path j, kept on its starting side of every earlier backward path.
    {
      auto &y = fwd[j];
      y[k0] = x0;
      std::vector<int> side(j, 0);
      for (std::size_t m = 0; m < j; ++m)
        if (k0 <= ks[m]) side[m] = x0 >= bwd[m][k0] ? 1 : -1;
      std::size_t into = n;
      for (std::size_t k = k0; k < steps; ++k) {
        const double noise = std::sqrt(grid.time(k + 1) - grid.time(k)) * normal();
        if (into < n) {
          y[k + 1] = fwd[into][k + 1];
          continue;
        }
        const double h = grid.time(k + 1) - grid.time(k);
        double cand = y[k] + noise;
        double lo = -std::numeric_limits<double>::infinity(), hi = -lo;
        double up = 0.0, down = 0.0;
        for (std::size_t m = 0; m < j; ++m) {
          if (side[m] == 0 || k + 1 > ks[m]) continue;
          const double d0 = side[m] * (bwd[m][k] - y[k]);
          const double d1 = side[m] * (bwd[m][k + 1] - cand);
          const double push = std::max(0.0, bridge_max(d0, d1, h, normal.uniform()));
          if (side[m] > 0) {
            lo = std::max(lo, bwd[m][k + 1]);
            up = std::max(up, push);
          } else {
            hi = std::min(hi, bwd[m][k + 1]);
            down = std::max(down, push);
          }
        }
        cand = std::min(std::max(cand + up - down, lo), hi);
        for (std::size_t i = 0; i < j; ++i) {
          if (k < ks[i]) continue;
          if (meets(y[k] - fwd[i][k], cand - fwd[i][k + 1], h, spec.bridge_correction, normal)) {
            into = i;
            break;
          }
        }
        y[k + 1] = into < n ? fwd[into][k + 1] : cand;
      }
    }

    // Backward path j, the time mirror against earlier forward paths.
    {
      auto &z = bwd[j];
      z[k0] = x0;
      std::vector<int> side(j, 0);
      for (std::size_t m = 0; m < j; ++m)
        if (ks[m] <= k0) side[m] = x0 >= fwd[m][k0] ? 1 : -1;
      std::size_t into = n;
      for (std::size_t k = k0; k > 0; --k) {
        const double noise = std::sqrt(grid.time(k) - grid.time(k - 1)) * normal();
        if (into < n) {
          z[k - 1] = bwd[into][k - 1];
          continue;
        }
        const double h = grid.time(k) - grid.time(k - 1);
        double cand = z[k] + noise;
        double lo = -std::numeric_limits<double>::infinity(), hi = -lo;
        double up = 0.0, down = 0.0;
        for (std::size_t m = 0; m < j; ++m) {
          if (side[m] == 0 || k - 1 < ks[m]) continue;
          const double d0 = side[m] * (fwd[m][k] - z[k]);
          const double d1 = side[m] * (fwd[m][k - 1] - cand);
          const double push = std::max(0.0, bridge_max(d0, d1, h, normal.uniform()));
          if (side[m] > 0) {
            lo = std::max(lo, fwd[m][k - 1]);
            up = std::max(up, push);
          } else {
            hi = std::min(hi, fwd[m][k - 1]);
            down = std::max(down, push);
          }
        }
        cand = std::min(std::max(cand + up - down, lo), hi);
        for (std::size_t i = 0; i < j; ++i) {
          if (k > ks[i]) continue;
          if (meets(z[k] - bwd[i][k], cand - bwd[i][k - 1], h, spec.bridge_correction, normal)) {
            into = i;
            break;
          }
        }
        z[k - 1] = into < n ? bwd[into][k - 1] : cand;
      }
    }
  }

  PathSet forward, backward;
  forward.label = "forward";
  backward.label = "backward";
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<Knot> kf, kb;
    for (std::size_t k = ks[j]; k <= steps; ++k) kf.push_back({grid.time(k), fwd[j][k]});
    for (std::size_t k = 0; k <= ks[j]; ++k) kb.push_back({grid.time(k), bwd[j][k]});
    forward.paths.emplace_back(std::move(kf));
    backward.paths.emplace_back(std::move(kb), Direction::backward);
  }
  return {std::move(forward), std::move(backward)};
}

} // namespace webweave
