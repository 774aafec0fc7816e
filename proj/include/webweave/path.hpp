#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace webweave {

/// Forward paths start at their earliest knot; backward paths at their latest.
enum class Direction { forward, backward };

struct SpacePoint
{
  double x;
  double t;
};

struct Knot
{
  double t;
  double x;

  friend bool operator==(const Knot &, const Knot &) = default;
};

/// Piecewise-linear space-time trajectory.  Knot times are strictly
/// increasing for both directions; direction only decides which end is
/// the starting point.
class Path
{
public:
  explicit Path(std::vector<Knot> knots, Direction direction = Direction::forward);

  std::span<const Knot> knots() const noexcept { return knots_; }
  Direction direction() const noexcept { return direction_; }

  double begin_time() const noexcept { return knots_.front().t; }
  double end_time() const noexcept { return knots_.back().t; }

  /// Forward: first knot time.  Backward: last knot time.
  double start_time() const noexcept
  {
    return direction_ == Direction::forward ? begin_time() : end_time();
  }
  double start_value() const noexcept
  {
    return direction_ == Direction::forward ? knots_.front().x : knots_.back().x;
  }

  bool covers(double t) const noexcept { return t >= begin_time() && t <= end_time(); }

  /// Linear interpolation; throws InvalidArgument outside [begin_time, end_time].
  double at(double t) const;

  /// As `at`, but clamps to the end values outside the knot range.
  double extended(double t) const noexcept;

  friend bool operator==(const Path &, const Path &) = default;

private:
  std::vector<Knot> knots_;
  Direction direction_;
};

/// Finite collection of paths; represents an element of the path-set space.
struct PathSet
{
  std::vector<Path> paths;
  std::string label;
  /// Integer-valued lattice paths: endpoint distinctness is exact.
  bool lattice = false;

  std::size_t size() const noexcept { return paths.size(); }
  bool empty() const noexcept { return paths.empty(); }

  /// Smallest begin time and largest end time over members.
  std::pair<double, double> time_span() const;
};

/// First pair (i, j) of paths whose difference changes strict sign over
/// their common domain, if any.  Touching without changing sides is allowed.
std::optional<std::pair<std::size_t, std::size_t>> find_crossing(const PathSet &set);

/// True iff p - q changes strict sign somewhere on the common domain.
bool strictly_cross(const Path &p, const Path &q);

/// Strict crossing between a forward and a backward family.
std::optional<std::pair<std::size_t, std::size_t>> find_crossing(const PathSet &a, const PathSet &b);

} // namespace webweave
