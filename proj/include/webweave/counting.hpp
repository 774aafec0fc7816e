#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "webweave/lattice_walks.hpp"
#include "webweave/path.hpp"

namespace webweave {

struct CountingQuery
{
  double t0 = 0.0;
  double t = 0.0;
  double a = 0.0;
  double b = 0.0;

  void validate() const;
};

/// Endpoint tolerance for paths that are not lattice-valued.
inline constexpr double continuum_tolerance = 1e-12;

/// Number of distinct values of `at_end` over the entries whose `at_start`
/// lies in [a, b].  NaN in `at_start` marks a path that does not exist at t0.
std::size_t count_distinct_endpoints(std::span<const double> at_start, std::span<const double> at_end,
                                     double a, double b, double tolerance);

/// Distinct positions at t0 + t of paths that touch [a, b] x {t0}.
std::size_t eta(const PathSet &k, const CountingQuery &q);

struct EtaHat
{
  long value;
  bool empty; ///< no path touched [a, b] x {t0}; value is then -1
};

EtaHat eta_hat(const PathSet &k, const CountingQuery &q);

/// Distinct positions in [a, b] at t0 of backward paths that reach down
/// from time t0 + t or later.
std::size_t eta_dual(const PathSet &backward, const CountingQuery &q);

/// Probability that two independent standard Brownian motions u apart have not met by time t.
double theta(double u, double t);

/// Mean of eta for the Brownian web: 1 + (b - a) / sqrt(pi t).
double expected_eta(double a, double b, double t);

struct NSetResult
{
  std::vector<double> n_all;
  std::vector<double> n_plus;
  std::vector<double> n_minus;
  double l = 0.0;
  double r = 0.0;
  bool empty = true;

  /// N differs from the union of N+ and N-.
  bool split() const;
};

NSetResult n_sets(const PathSet &k, const CountingQuery &q);

/// Which paths pass through each lattice site of an integer-valued path set.
class LatticeIndex
{
public:
  explicit LatticeIndex(const PathSet &k);

  const PathSet &paths() const noexcept { return *set_; }
  std::span<const std::size_t> through(LatticeSite s) const;

private:
  static std::uint64_t key(int x, int t) noexcept
  {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) | static_cast<std::uint32_t>(t);
  }

  const PathSet *set_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> sites_;
};

struct PointType
{
  int m_in = 0;
  int m_out = 0;
  int probe_depth = 0;
};

/// Discrete point type.  Incoming germs are the distinct previous-row
/// positions of paths through the site that were already running
/// probe_depth rows earlier; outgoing germs are the distinct positions
/// probe_depth rows later.  Rows are mirrored for backward paths.
PointType classify_point(const LatticeIndex &index, LatticeSite site, int probe_depth);

/// Germs of the opposite family leaving a site: for a forward site, dual
/// walkers started at the three surrounding dual sites below it, counted by
/// distinct positions probe_depth rows down; for a dual site, the mirror
/// image with forward walkers.
int opposite_germs(const IncrementField &field, LatticeSite site, int probe_depth);

struct SiteRecord
{
  int x;
  int t;

  friend bool operator==(const SiteRecord &, const SiteRecord &) = default;
};

/// Sites where two paths that were distinct one row earlier first agree.
std::vector<SiteRecord> coalescence_points(const PathSet &k);

} // namespace webweave
