#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "webweave/path.hpp"

namespace webweave {

struct LatticeSite
{
  int x;
  int t;

  friend auto operator<=>(const LatticeSite &, const LatticeSite &) = default;
};

/// Finite space-time window of integer lattice sites.
struct LatticeWindow
{
  int x_min = 0;
  int x_max = 0;
  int t_min = 0;
  int t_max = 0;

  void validate() const;
  bool contains(int x, int t) const noexcept
  {
    return x >= x_min && x <= x_max && t >= t_min && t <= t_max;
  }
  std::size_t site_count() const noexcept
  {
    return static_cast<std::size_t>(x_max - x_min + 1) * static_cast<std::size_t>(t_max - t_min + 1);
  }
};

/// Finite-support integer increment law with zero mean and nonzero variance.
class IncrementLaw
{
public:
  /// Fair +-1 coin.
  static IncrementLaw simple();
  /// Arbitrary finite law given as (value, probability) pairs.
  static IncrementLaw general(std::vector<std::pair<int, double>> support);

  bool is_simple() const noexcept { return simple_; }
  double variance() const noexcept { return variance_; }
  /// All support values odd: the walk stays on the i + j even sublattice.
  bool preserves_parity() const noexcept { return odd_support_; }
  std::span<const std::pair<int, double>> support() const noexcept { return support_; }
  /// Spacing of the lattice the n-step sum lives on (gcd of support differences).
  int lattice_span() const noexcept;

  /// Inverse-CDF draw from a uniform in [0, 1).
  int draw(double u) const noexcept;

private:
  IncrementLaw() = default;

  std::vector<std::pair<int, double>> support_;
  std::vector<double> cdf_;
  double variance_ = 0.0;
  bool simple_ = false;
  bool odd_support_ = false;
};

/// Increment at site (x, t) of the field with this law and seed.  Pure
/// function of its arguments; IncrementField caches it over a window.
int sample_increment(const IncrementLaw &law, std::uint64_t seed, int x, int t) noexcept;

/// Seeded lattice of increments.  In-window values are materialised; values
/// outside the window are produced on demand by the same counter-based hash,
/// so walks that wander out of the window stay well defined and any
/// sub-window regenerates identically.
class IncrementField
{
public:
  IncrementField(LatticeWindow window, IncrementLaw law, std::uint64_t seed);
  /// Explicit in-window increments, row by row from (x_min, t_min); each must
  /// lie in the law's support.  Outside the window the seeded hash applies.
  IncrementField(LatticeWindow window, IncrementLaw law, std::uint64_t seed, std::vector<int> values);

  const LatticeWindow &window() const noexcept { return window_; }
  const IncrementLaw &law() const noexcept { return law_; }
  std::uint64_t seed() const noexcept { return seed_; }

  int increment(int x, int t) const noexcept
  {
    if (window_.contains(x, t)) {
      return values_[static_cast<std::size_t>(t - window_.t_min) * width_ +
                     static_cast<std::size_t>(x - window_.x_min)];
    }
    return sample_increment(law_, seed_, x, t);
  }

  /// Sites (x, t) belonging to the walk lattice (parity for parity-preserving laws).
  bool on_lattice(int x, int t) const noexcept
  {
    return !law_.preserves_parity() || ((x + t) % 2 == 0);
  }

  friend bool operator==(const IncrementField &a, const IncrementField &b)
  {
    return a.seed_ == b.seed_ && a.values_ == b.values_;
  }

private:
  LatticeWindow window_;
  IncrementLaw law_;
  std::uint64_t seed_;
  std::size_t width_;
  std::vector<int> values_;
};

/// Default budget on materialised sites.
inline constexpr std::size_t default_site_budget = std::size_t{1} << 26;

/// Validates window and law, enforces the memory budget (ResourceLimit).
IncrementField generate_field(const LatticeWindow &window, const IncrementLaw &law, std::uint64_t seed,
                              std::size_t site_budget = default_site_budget);

/// Forward walk Y(j+1) = Y(j) + increment(Y(j), j) with knots at every
/// integer time from the start to the window's t_max.
Path trace_forward(const IncrementField &field, LatticeSite start);

/// One path per start.
PathSet build_ensemble(const IncrementField &field, std::span<const LatticeSite> starts);

/// One path from every in-window lattice site below the top row.
PathSet build_ensemble_all(const IncrementField &field);

enum class DualStarts { top_row, all_sites };

/// Backward walk on the dual sublattice (x + t odd), stepping from row t to
/// row t - 1 against the forward increment directly below it.  Knots from
/// t_min up to the start row.
Path trace_dual(const IncrementField &field, LatticeSite start);

/// Backward dual family of a simple-law field (Unsupported otherwise).
PathSet build_dual(const IncrementField &field, DualStarts starts = DualStarts::top_row);

struct ScalingParams
{
  double delta = 1.0;
};

/// Diffusive rescaling: knot (t, x) -> (delta^2 t, delta x).
PathSet rescale(const PathSet &paths, ScalingParams s);

// ---------------------------------------------------------------------------
// Continuous-time walks driven by per-site Poisson clocks.

struct ClockEvent
{
  double time;
  int direction; ///< +1 or -1: the walker at the site jumps to site + direction.
};

struct ContinuousWindow
{
  int x_min = 0;
  int x_max = 0;
  double t_min = 0.0;
  double t_max = 0.0;

  void validate() const;
};

/// Per-site event lists.  Seeded clocks are generated lazily per site from a
/// counter-based stream; tests may inject explicit event lists instead.
class ClockField
{
public:
  ClockField(ContinuousWindow window, double rate, std::uint64_t seed);
  /// Injected events; sites absent from the map have no events.
  ClockField(ContinuousWindow window, std::map<int, std::vector<ClockEvent>> events);

  const ContinuousWindow &window() const noexcept { return window_; }

  /// Sorted events at a site (generated on first use for seeded clocks).
  const std::vector<ClockEvent> &events(int site) const;

  /// Sorted times at which the dual walker at half-integer position
  /// `dual_index + 1/2` is forced to jump, with its jump direction.
  std::vector<ClockEvent> dual_events(int dual_index) const;

private:
  ContinuousWindow window_;
  double rate_ = 0.0;
  std::uint64_t seed_ = 0;
  bool injected_ = false;
  mutable std::map<int, std::vector<ClockEvent>> cache_;
};

/// Forward polygonal paths from (site, start_time): linear segments between
/// successive event points; an initial constant segment when the start lies
/// strictly between events; two paths when the start is exactly an event.
std::vector<Path> trace_continuous_forward(const ClockField &clocks, int site, double start_time);

/// Backward polygonal path on Z + 1/2 from (dual_index + 1/2, start_time),
/// the time mirror of the forward convention.
Path trace_continuous_backward(const ClockField &clocks, int dual_index, double start_time);

/// Position of the underlying jump process represented by a continuous-time
/// polygonal path.  Forward: right-continuous; backward: left-continuous.
double jump_position(const Path &path, double t);

/// First forward/backward pair whose jump processes swap sides, compared at
/// the midpoints between consecutive knot times of both families.
std::optional<std::pair<std::size_t, std::size_t>> find_jump_crossing(const PathSet &fwd, const PathSet &bwd);

/// Forward paths from every site at t_min and backward paths from every dual
/// site at t_max.
std::pair<PathSet, PathSet> simulate_continuous(const ClockField &clocks);
std::pair<PathSet, PathSet> simulate_continuous(const ContinuousWindow &window, double rate,
                                                std::uint64_t seed);

} // namespace webweave
