#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "webweave/error.hpp"
#include "webweave/lattice_walks.hpp"
#include "webweave/rng.hpp"

namespace webweave {

void ContinuousWindow::validate() const
{
  require(x_min < x_max, "ContinuousWindow: x_min must be < x_max");
  require(std::isfinite(t_min) && std::isfinite(t_max) && t_min < t_max,
          "ContinuousWindow: t_min must be < t_max");
}

ClockField::ClockField(ContinuousWindow window, double rate, std::uint64_t seed)
    : window_(window), rate_(rate), seed_(seed)
{
  window_.validate();
  require(std::isfinite(rate) && rate > 0.0, "ClockField: rate must be positive");
}

ClockField::ClockField(ContinuousWindow window, std::map<int, std::vector<ClockEvent>> events)
    : window_(window), injected_(true), cache_(std::move(events))
{
  window_.validate();
  for (auto &[site, list] : cache_) {
    for (const auto &e : list) {
      require(std::isfinite(e.time), "ClockField: non-finite event time");
      require(e.direction == 1 || e.direction == -1, "ClockField: direction must be +1 or -1");
    }
    std::sort(list.begin(), list.end(), [](const ClockEvent &a, const ClockEvent &b) { return a.time < b.time; });
  }
}

const std::vector<ClockEvent> &ClockField::events(int site) const
{
  auto it = cache_.find(site);
  if (it != cache_.end()) return it->second;
  if (injected_) {
    static const std::vector<ClockEvent> none;
    return none;
  }
  // Generous padding so walkers entering from outside the time window still
  // see their previous and next events.
  const double pad = 40.0 / rate_;
  Xoshiro256 gen(derive_seed(seed_, static_cast<std::uint64_t>(static_cast<std::int64_t>(site))));
  std::vector<ClockEvent> list;
  double t = window_.t_min - pad;
  for (;;) {
    t += -std::log(gen.uniform_open_closed()) / rate_;
    if (t > window_.t_max + pad) break;
    list.push_back({t, (gen() >> 63) ? 1 : -1});
  }
  return cache_.emplace(site, std::move(list)).first->second;
}

std::vector<ClockEvent> ClockField::dual_events(int dual_index) const
{
  // The dual walker at k + 1/2 is displaced whenever a forward jump crosses it:
  // a right jump from k or a left jump from k + 1.  It moves opposite to that jump.
  std::vector<ClockEvent> out;
  for (const auto &e : events(dual_index))
    if (e.direction == 1) out.push_back({e.time, -1});
  const std::size_t split = out.size();
  for (const auto &e : events(dual_index + 1))
    if (e.direction == -1) out.push_back({e.time, 1});
  std::inplace_merge(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(split), out.end(),
                     [](const ClockEvent &a, const ClockEvent &b) { return a.time < b.time; });
  return out;
}

namespace {

const ClockEvent *next_after(const std::vector<ClockEvent> &list, double t)
{
  auto it = std::upper_bound(list.begin(), list.end(), t,
                             [](double v, const ClockEvent &e) { return v < e.time; });
  return it == list.end() ? nullptr : &*it;
}

const ClockEvent *last_before(const std::vector<ClockEvent> &list, double t)
{
  auto it = std::lower_bound(list.begin(), list.end(), t,
                             [](const ClockEvent &e, double v) { return e.time < v; });
  return it == list.begin() ? nullptr : &*(it - 1);
}

// Continues a forward polygon from the event point (site, time) using that event's direction.
void extend_forward(const ClockField &clocks, std::vector<Knot> &knots, int site, ClockEvent ev)
{
  const double t_end = clocks.window().t_max;
  for (;;) {
    const int target = site + ev.direction;
    const ClockEvent *nxt = next_after(clocks.events(target), ev.time);
    if (!nxt || nxt->time >= t_end) {
      const double t_hit = nxt ? nxt->time : std::numeric_limits<double>::infinity();
      const double w = std::isinf(t_hit) ? 0.0 : (t_end - ev.time) / (t_hit - ev.time);
      if (t_end > knots.back().t) knots.push_back({t_end, site + w * ev.direction});
      return;
    }
    knots.push_back({nxt->time, static_cast<double>(target)});
    site = target;
    ev = *nxt;
  }
}

} // namespace

std::vector<Path> trace_continuous_forward(const ClockField &clocks, int site, double start_time)
{
  const auto &w = clocks.window();
  require(start_time >= w.t_min && start_time < w.t_max, "continuous start time outside window");
  const auto &list = clocks.events(site);

  std::vector<Path> out;
  auto exact = std::lower_bound(list.begin(), list.end(), start_time,
                                [](const ClockEvent &e, double v) { return e.time < v; });
  if (exact != list.end() && exact->time == start_time) {
    std::vector<Knot> knots{{start_time, static_cast<double>(site)}};
    extend_forward(clocks, knots, site, *exact);
    out.emplace_back(std::move(knots));
  }

  std::vector<Knot> knots{{start_time, static_cast<double>(site)}};
  const ClockEvent *first = next_after(list, start_time);
  if (!first || first->time >= w.t_max) {
    knots.push_back({w.t_max, static_cast<double>(site)});
  } else {
    knots.push_back({first->time, static_cast<double>(site)});
    extend_forward(clocks, knots, site, *first);
  }
  out.emplace_back(std::move(knots));
  return out;
}

Path trace_continuous_backward(const ClockField &clocks, int dual_index, double start_time)
{
  const auto &w = clocks.window();
  require(start_time > w.t_min && start_time <= w.t_max, "continuous dual start time outside window");

  // Built in decreasing time, reversed at the end.
  std::vector<Knot> rev{{start_time, dual_index + 0.5}};
  int k = dual_index;
  auto evs = clocks.dual_events(k);
  const ClockEvent *ev = last_before(evs, start_time);
  if (!ev || ev->time <= w.t_min) {
    rev.push_back({w.t_min, dual_index + 0.5});
  } else {
    rev.push_back({ev->time, k + 0.5});
    for (;;) {
      const double t_ev = ev->time;
      const int target = k + ev->direction;
      auto tev = clocks.dual_events(target);
      const ClockEvent *prev = last_before(tev, t_ev);
      if (!prev || prev->time <= w.t_min) {
        const double frac = prev ? (t_ev - w.t_min) / (t_ev - prev->time) : 0.0;
        rev.push_back({w.t_min, k + 0.5 + frac * (target - k)});
        break;
      }
      rev.push_back({prev->time, target + 0.5});
      k = target;
      // Moving the vector keeps its buffer, so prev stays valid.
      evs = std::move(tev);
      ev = prev;
    }
  }
  std::reverse(rev.begin(), rev.end());
  return Path(std::move(rev), Direction::backward);
}

double jump_position(const Path &path, double t)
{
  const auto knots = path.knots();
  auto it = std::upper_bound(knots.begin(), knots.end(), t, [](double v, const Knot &k) { return v < k.t; });
  if (path.direction() == Direction::forward) {
    if (it == knots.end()) it = knots.end() - 1;
    if (it == knots.begin()) return it->x;
    // A segment cut at the window edge ends between sites; the walker has
    // already jumped to the neighbour it is heading for.
    const double from = (it - 1)->x;
    return it->x == std::round(it->x) ? it->x : from + (it->x > from ? 1.0 : -1.0);
  }
  if (it == knots.begin()) it = knots.begin() + 1;
  if (it == knots.end()) return knots.back().x;
  const double to = it->x;
  const double x = (it - 1)->x;
  return x - std::floor(x) == 0.5 ? x : to + (x > to ? 1.0 : -1.0);
}

std::optional<std::pair<std::size_t, std::size_t>> find_jump_crossing(const PathSet &fwd, const PathSet &bwd)
{
  std::set<double> times;
  for (const auto *set : {&fwd, &bwd})
    for (const auto &p : set->paths)
      for (const auto &k : p.knots()) times.insert(k.t);
  std::vector<double> probes;
  for (auto it = times.begin(); it != times.end() && std::next(it) != times.end(); ++it)
    probes.push_back(0.5 * (*it + *std::next(it)));
  for (std::size_t i = 0; i < fwd.paths.size(); ++i) {
    for (std::size_t j = 0; j < bwd.paths.size(); ++j) {
      int side = 0;
      for (double t : probes) {
        if (!fwd.paths[i].covers(t) || !bwd.paths[j].covers(t)) continue;
        const double d = jump_position(fwd.paths[i], t) - jump_position(bwd.paths[j], t);
        const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
        if (s == 0) return std::pair{i, j};
        if (side != 0 && s != side) return std::pair{i, j};
        side = s;
      }
    }
  }
  return std::nullopt;
}

std::pair<PathSet, PathSet> simulate_continuous(const ClockField &clocks)
{
  const auto &w = clocks.window();
  PathSet fwd, bwd;
  fwd.label = "forward";
  bwd.label = "backward-dual";
  for (int i = w.x_min; i <= w.x_max; ++i)
    for (auto &p : trace_continuous_forward(clocks, i, w.t_min)) fwd.paths.push_back(std::move(p));
  for (int k = w.x_min; k < w.x_max; ++k) bwd.paths.push_back(trace_continuous_backward(clocks, k, w.t_max));
  return {std::move(fwd), std::move(bwd)};
}

std::pair<PathSet, PathSet> simulate_continuous(const ContinuousWindow &window, double rate, std::uint64_t seed)
{
  return simulate_continuous(ClockField(window, rate, seed));
}

} // namespace webweave
