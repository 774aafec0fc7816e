#pragma once

#include <optional>

#include "webweave/path.hpp"

namespace webweave {

/// Image of a space-time point under the compactifying map.
struct CompactPoint
{
  double phi;
  double psi;
};

struct MetricResult
{
  double value = 0.0;
  /// Time at which the supremum is attained, when it comes from the sup term.
  std::optional<double> witness;
};

CompactPoint compactify(double x, double t) noexcept;

/// Point metric on compactified space-time.
double rho(Knot p1, Knot p2) noexcept;

/// Path metric.  Each path is extended constant outside its knot range
/// before the supremum over time is taken.
MetricResult path_distance(const Path &p1, const Path &p2);

/// Hausdorff distance between two non-empty finite path sets.
MetricResult hausdorff_distance(const PathSet &k1, const PathSet &k2);

/// sup over g1 in k1 of inf over g2 in k2 of d(g1, g2).
double directed_hausdorff(const PathSet &k1, const PathSet &k2);

} // namespace webweave
