#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "webweave/path.hpp"
#include "webweave/rng.hpp"

namespace webweave {

struct SkeletonSpec
{
  /// Start points in label order; the order decides which label survives a merge.
  std::vector<SpacePoint> starts;
  double grid_dt = 0.0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  /// Also merge pairs whose Brownian bridge between grid times hit zero
  /// without a visible sign change.
  bool bridge_correction = true;
  bool record_paths = true;
  /// Grid times at which every path's position is captured.
  std::vector<double> observe_times;
  /// Stop as soon as some path reaches distance `exit_half_width` from
  /// `exit_center` (disabled when the half width is not positive).
  double exit_center = 0.0;
  double exit_half_width = 0.0;

  void validate() const;
};

struct CoalescenceEvent
{
  double tau;
  std::size_t into; ///< label of the surviving path
  std::size_t path; ///< label of the absorbed path
};

struct SkeletonResult
{
  PathSet paths; ///< empty unless record_paths
  std::vector<CoalescenceEvent> events;
  /// snapshots[k][j]: position of path j at observe_times[k]; NaN before it starts.
  std::vector<std::vector<double>> snapshots;
  bool exited = false;
};

/// Coalescing Brownian paths on a time grid.  Only live clusters are
/// simulated; a path merged into a lower label follows it afterwards.
SkeletonResult sample_skeleton(const SkeletonSpec &spec);

/// First meeting time of two independent standard Brownian motions started
/// at x1 and x2, sampled exactly from the first-passage law.
double pair_coalescence_time(double x1, double x2, std::uint64_t seed);
double pair_coalescence_time(double x1, double x2, Xoshiro256 &gen);

/// Pushes a forward path off a backward path over [t2, t1] by the running
/// record of the deficit.  Evaluated at the forward path's knots; past t1
/// the forward increments are kept and the accumulated push is carried.
Path reflect_cr(const Path &raw_forward, const Path &backward);

/// Forward and backward coalescing families built inductively in label
/// order.  Each new path is confined to the corridor cut out by the
/// opposite-direction paths already built: each step is pushed by the
/// sampled maximum of the bridge between grid values, the one-sided push
/// taken against all of them at once.  Same-direction paths coalesce on a
/// sign change, or inside a step under `bridge_correction`.
std::pair<PathSet, PathSet> sample_double_skeleton(const SkeletonSpec &spec);

} // namespace webweave
