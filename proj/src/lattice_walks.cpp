#include "webweave/lattice_walks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "webweave/error.hpp"
#include "webweave/rng.hpp"

namespace webweave {

void LatticeWindow::validate() const
{
  require(x_min < x_max, "LatticeWindow: x_min must be < x_max");
  require(t_min < t_max, "LatticeWindow: t_min must be < t_max");
}

IncrementLaw IncrementLaw::simple()
{
  auto law = general({{-1, 0.5}, {1, 0.5}});
  law.simple_ = true;
  return law;
}

IncrementLaw IncrementLaw::general(std::vector<std::pair<int, double>> support)
{
  require(!support.empty(), "IncrementLaw: empty support");
  IncrementLaw law;
  double total = 0.0, mean = 0.0, second = 0.0;
  bool odd = true;
  for (auto [v, p] : support) {
    require(std::isfinite(p) && p > 0.0, "IncrementLaw: probabilities must be positive");
    total += p;
    mean += p * v;
    second += p * static_cast<double>(v) * v;
    odd = odd && (v % 2 != 0);
  }
  require(std::abs(total - 1.0) < 1e-12, "IncrementLaw: probabilities must sum to 1");
  require(std::abs(mean) < 1e-12, "IncrementLaw: law must have zero mean");
  const double var = second - mean * mean;
  require(var > 0.0, "IncrementLaw: law must have nonzero variance");

  law.support_ = std::move(support);
  law.variance_ = var;
  law.odd_support_ = odd;
  double acc = 0.0;
  for (auto [v, p] : law.support_) {
    acc += p;
    law.cdf_.push_back(acc);
  }
  law.cdf_.back() = 1.0;
  law.simple_ = law.support_.size() == 2 && law.variance_ == 1.0 && odd &&
                std::abs(law.support_[0].first) == 1 && std::abs(law.support_[1].first) == 1;
  return law;
}

int IncrementLaw::lattice_span() const noexcept
{
  int g = 0;
  for (const auto &[v, p] : support_) g = std::gcd(g, v - support_.front().first);
  return g;
}

int IncrementLaw::draw(double u) const noexcept
{
  for (std::size_t k = 0; k + 1 < cdf_.size(); ++k)
    if (u < cdf_[k]) return support_[k].first;
  return support_.back().first;
}

IncrementField::IncrementField(LatticeWindow window, IncrementLaw law, std::uint64_t seed)
    : window_(window), law_(std::move(law)), seed_(seed),
      width_(static_cast<std::size_t>(window.x_max - window.x_min + 1))
{
  window_.validate();
  values_.resize(window_.site_count());
  for (int t = window_.t_min; t <= window_.t_max; ++t)
    for (int x = window_.x_min; x <= window_.x_max; ++x)
      values_[static_cast<std::size_t>(t - window_.t_min) * width_ +
              static_cast<std::size_t>(x - window_.x_min)] = sample_increment(law_, seed_, x, t);
}

IncrementField::IncrementField(LatticeWindow window, IncrementLaw law, std::uint64_t seed, std::vector<int> values)
    : window_(window), law_(std::move(law)), seed_(seed),
      width_(static_cast<std::size_t>(window.x_max - window.x_min + 1)), values_(std::move(values))
{
  window_.validate();
  require(values_.size() == window_.site_count(), "IncrementField: expected " +
                                                      std::to_string(window_.site_count()) + " increments");
  const auto support = law_.support();
  for (int v : values_) {
    require(std::any_of(support.begin(), support.end(), [v](const auto &s) { return s.first == v; }),
            "IncrementField: increment " + std::to_string(v) + " is outside the law's support");
  }
}

int sample_increment(const IncrementLaw &law, std::uint64_t seed, int x, int t) noexcept
{
  const std::uint64_t h = site_hash(seed, x, t);
  if (law.is_simple()) return (h >> 63) ? 1 : -1;
  return law.draw(to_unit(h));
}

IncrementField generate_field(const LatticeWindow &window, const IncrementLaw &law, std::uint64_t seed,
                              std::size_t site_budget)
{
  window.validate();
  if (window.site_count() > site_budget) {
    throw ResourceLimit("generate_field: window has " + std::to_string(window.site_count()) +
                        " sites, budget is " + std::to_string(site_budget));
  }
  return IncrementField(window, law, seed);
}

namespace {

void check_start(const IncrementField &field, LatticeSite s)
{
  const auto &w = field.window();
  require(w.contains(s.x, s.t), "start (" + std::to_string(s.x) + "," + std::to_string(s.t) +
                                    ") outside window");
  require(s.t < w.t_max, "start must leave at least one time step in the window");
  require(field.on_lattice(s.x, s.t), "start must satisfy x + t even on the walk lattice");
}

} // namespace

Path trace_forward(const IncrementField &field, LatticeSite start)
{
  check_start(field, start);
  const int t_end = field.window().t_max;
  std::vector<Knot> knots;
  knots.reserve(static_cast<std::size_t>(t_end - start.t + 1));
  int x = start.x;
  for (int t = start.t; t <= t_end; ++t) {
    knots.push_back({static_cast<double>(t), static_cast<double>(x)});
    if (t < t_end) x += field.increment(x, t);
  }
  return Path(std::move(knots));
}

PathSet build_ensemble(const IncrementField &field, std::span<const LatticeSite> starts)
{
  PathSet set;
  set.label = "forward";
  set.lattice = true;
  set.paths.reserve(starts.size());
  for (auto s : starts) set.paths.push_back(trace_forward(field, s));
  return set;
}

PathSet build_ensemble_all(const IncrementField &field)
{
  const auto &w = field.window();
  std::vector<LatticeSite> starts;
  for (int t = w.t_min; t < w.t_max; ++t)
    for (int x = w.x_min; x <= w.x_max; ++x)
      if (field.on_lattice(x, t)) starts.push_back({x, t});
  return build_ensemble(field, starts);
}

Path trace_dual(const IncrementField &field, LatticeSite start)
{
  if (!field.law().is_simple()) throw Unsupported("trace_dual: duality requires the simple law");
  const auto &w = field.window();
  require(w.contains(start.x, start.t), "dual start outside window");
  require((start.x + start.t) % 2 != 0, "dual start must satisfy x + t odd");
  require(start.t > w.t_min, "dual start must leave at least one time step in the window");

  std::vector<Knot> knots(static_cast<std::size_t>(start.t - w.t_min + 1));
  int x = start.x;
  for (int t = start.t; t >= w.t_min; --t) {
    knots[static_cast<std::size_t>(t - w.t_min)] = {static_cast<double>(t), static_cast<double>(x)};
    // The forward edge leaving (x, t-1) would cut the dual edge going the
    // same way, so the dual walker steps the opposite way.
    if (t > w.t_min) x -= field.increment(x, t - 1);
  }
  return Path(std::move(knots), Direction::backward);
}

PathSet build_dual(const IncrementField &field, DualStarts starts)
{
  if (!field.law().is_simple()) throw Unsupported("build_dual: duality requires the simple law");
  const auto &w = field.window();
  PathSet set;
  set.label = "backward-dual";
  set.lattice = true;
  const int t_lo = starts == DualStarts::top_row ? w.t_max : w.t_min + 1;
  for (int t = w.t_max; t >= t_lo; --t)
    for (int x = w.x_min; x <= w.x_max; ++x)
      if ((x + t) % 2 != 0) set.paths.push_back(trace_dual(field, {x, t}));
  return set;
}

PathSet rescale(const PathSet &paths, ScalingParams s)
{
  require(s.delta > 0.0 && std::isfinite(s.delta), "rescale: delta must be positive");
  const double d2 = s.delta * s.delta;
  PathSet out;
  out.label = paths.label;
  // Coalesced paths stay bit-identical under the same arithmetic.
  out.lattice = paths.lattice;
  out.paths.reserve(paths.size());
  for (const auto &p : paths.paths) {
    std::vector<Knot> knots;
    knots.reserve(p.knots().size());
    for (const auto &k : p.knots()) knots.push_back({d2 * k.t, s.delta * k.x});
    out.paths.emplace_back(std::move(knots), p.direction());
  }
  return out;
}

} // namespace webweave
