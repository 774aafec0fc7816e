#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "webweave/counting.hpp"
#include "webweave/lattice_walks.hpp"
#include "webweave/path.hpp"

namespace webweave {

/// Rescaled walks: space by delta / sigma, time by delta^2.
struct WalkEnsemble
{
  IncrementLaw law;
  double delta = 0.0;

  double space_unit() const;
  double time_unit() const { return delta * delta; }
};

/// Coalescing Brownian skeleton with starts spaced `start_spacing` apart
/// (and `pad` beyond a query interval on each side).
struct SkeletonEnsemble
{
  double grid_dt = 0.0;
  double start_spacing = 0.0;
  double pad = 0.0;
  bool bridge_correction = true;
};

using EnsembleLaw = std::variant<WalkEnsemble, SkeletonEnsemble>;

void validate(const EnsembleLaw &law);
nlohmann::json describe(const EnsembleLaw &law);

struct McOptions
{
  std::size_t replicas = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Standard errors of slack allowed in trend tests and bound checks.
  double z = 2.0;

  void validate() const;
};

struct DiagnosticReport
{
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t replicas = 0;
  nlohmann::json parameters;
};

/// Calls fn(i) for i in [0, n) on up to `threads` workers.  Results are
/// stored by index, so the output does not depend on the thread count.
template <class F>
auto run_replicas(std::size_t n, unsigned threads, F &&fn) -> std::vector<decltype(fn(std::size_t{}))>
{
  using T = decltype(fn(std::size_t{}));
  std::vector<T> out(n);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            out[i] = fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next.store(n);
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// ---------------------------------------------------------------------------
// Single-replica samplers

/// Lattice sites of a walk ensemble whose rescaled position lies in [a, b] at time t0.
std::vector<int> walk_sites(const WalkEnsemble &ens, double a, double b, double t0);

/// Positions (rescaled) at each of `times` after t0 of walks started from
/// every lattice site in [a, b] at t0.  Row 0 of the result holds the starts.
std::vector<std::vector<double>> walk_positions(const WalkEnsemble &ens, double a, double b, double t0,
                                                std::span<const double> times, std::uint64_t seed);

std::size_t walk_eta(const WalkEnsemble &ens, const CountingQuery &q, std::uint64_t seed);
std::size_t skeleton_eta(const SkeletonEnsemble &ens, const CountingQuery &q, std::uint64_t seed);
std::size_t sample_eta_once(const EnsembleLaw &law, const CountingQuery &q, std::uint64_t seed);

/// Rescaled walk path from the origin up to time t_end.
Path walk_path(const WalkEnsemble &ens, double t_end, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Counting statistics

/// One eta per replica.
std::vector<std::size_t> sample_eta(const EnsembleLaw &law, const CountingQuery &q, const McOptions &opt);

struct TailRow
{
  int k;
  double p;        ///< P(eta_hat >= k)
  double se;
  double bound;    ///< Theta(b - a, t)^k
  bool bound_ok;
  double submult;  ///< P(eta_hat >= k - 1) P(eta_hat >= 1)
  double submult_se;
  bool submult_ok;
};

struct CountingCheck
{
  DiagnosticReport mean_eta;
  double expected = 0.0;
  bool mean_ok = false;
  std::vector<TailRow> tails;
};

CountingCheck check_counting(std::span<const std::size_t> etas, const CountingQuery &q, int k_max, double z);

// ---------------------------------------------------------------------------
// Convergence conditions

struct PairStat
{
  std::size_t i, j;
  double u;          ///< realised separation
  double ks;
  double ks_se;
  double ks_p;
  double p_meet;     ///< P(met by time 1)
  double p_meet_se;
  double p_meet_expected;
};

struct I1Row
{
  double delta;
  double marginal_ks;
  double marginal_ks_se;
  double marginal_ks_p;
  std::vector<PairStat> pairs;
};

struct I1Report
{
  std::vector<I1Row> rows;
  bool marginal_trend_ok = false;
  bool pair_trend_ok = false;
  nlohmann::json parameters;
};

/// Marginal at time 1 against N(0,1) and pairwise coalescence times (censored
/// at `horizon`) against the first-passage law, for each delta (walks) or
/// once (skeleton).
I1Report check_I1(const EnsembleLaw &law, std::span<const double> starts, std::span<const double> delta_seq,
                  double horizon, const McOptions &opt);

struct BRow
{
  double eps;
  double p1, p1_se;              ///< max over probes of P(eta_hat >= 1)
  double p2, p2_se;              ///< max over probes of P(eta_hat >= 2)
  double p2_over_eps, p2_over_eps_se;
};

struct BReport
{
  std::vector<BRow> rows;
  bool b1_trend_ok = false;
  bool b2_trend_ok = false;
  nlohmann::json parameters;
};

/// Probes are (a, t0) pairs carried as (x, t).
BReport estimate_B(const EnsembleLaw &law, double t, std::span<const double> eps_seq,
                   std::span<const SpacePoint> probes, const McOptions &opt);

struct BPrimeRow
{
  double eps;
  double p_multi, p_multi_se;       ///< sup of P(|N| > 1)
  double p_split_over_eps, p_split_over_eps_se; ///< sup of P(N != N+ u N-) / eps
};

struct BPrimeReport
{
  std::vector<BPrimeRow> rows;
  bool multi_trend_ok = false;
  bool split_trend_ok = false;
  nlohmann::json parameters;
};

BPrimeReport estimate_Bprime(const EnsembleLaw &law, double beta, std::span<const double> t_seq,
                             std::span<const double> eps_seq, std::span<const SpacePoint> probes,
                             const McOptions &opt);

struct TightnessRow
{
  double t;
  double p, p_se; ///< max over probes of P(A_{t,u})
  double g, g_se; ///< p / t
};

struct TightnessReport
{
  std::vector<TightnessRow> rows;
  bool trend_ok = false;
  nlohmann::json parameters;
};

/// Probes are rectangle anchors (x0, t0).
TightnessReport estimate_tightness(const EnsembleLaw &law, std::span<const double> t_seq, double u,
                                   std::span<const SpacePoint> probes, const McOptions &opt);

/// One replica of the tightness event for a single rectangle.
bool tightness_event(const EnsembleLaw &law, double t, double u, SpacePoint anchor, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dimension estimates

struct BoxCountSeries
{
  std::vector<double> scales; ///< decreasing
  std::vector<double> counts;
  /// Standard error of log(count) across pooled sets; zero for a single set.
  std::vector<double> log_count_se;
  double fitted_dimension = 0.0;
  double fit_r2 = 0.0;
  double slope_se = 0.0;
  /// log(k) / log(1 / smallest scale) for k points; a box-count slope
  /// above it is an artefact of the fit, not of the set.
  double cap = 0.0;
  bool within_cap = false;
};

inline constexpr std::size_t default_min_points = 1000;

BoxCountSeries box_dimension(std::span<const SpacePoint> points, std::span<const double> scales,
                             std::size_t min_points = default_min_points);

/// Box counts averaged in log space over several independent point sets.
BoxCountSeries box_dimension_pooled(const std::vector<std::vector<SpacePoint>> &sets, std::span<const double> scales,
                                    std::size_t min_points = default_min_points);

/// Points along the graph of a path, no further apart in time than `spacing`.
std::vector<SpacePoint> graph_points(const Path &path, double spacing);

/// (a x(t) + b y(t), t) at the record times of x in [0, t0], over x's knots.
std::vector<SpacePoint> record_projection(const Path &x_path, const Path &y_path, double a, double b, double t0);

// ---------------------------------------------------------------------------

struct WalkBoundReport
{
  int k = 0;
  double p_k = 0.0, p_k_se = 0.0;
  double p2 = 0.0, p2_se = 0.0;
  double bound = 0.0, bound_se = 0.0;
  double combined_se = 0.0;
  bool pass = false;
  std::size_t replicas = 0;
};

WalkBoundReport verify_walkbound(const WalkEnsemble &ens, const CountingQuery &q, int k, const McOptions &opt);

// ---------------------------------------------------------------------------
// Exact lattice identities

struct Tally
{
  std::size_t checked = 0;
  std::size_t violations = 0;
};

/// Interior, grid-aligned queries for the duality identity on a window.
std::vector<CountingQuery> duality_battery(const LatticeWindow &window, std::size_t n, std::uint64_t seed);

/// eta(forward) == 1 + eta_dual(backward from all dual sites) on each query.
Tally duality_check(const IncrementField &field, std::span<const CountingQuery> queries);

/// Discrete type duality at every site with `probe_depth + 1` rows of margin:
/// dual incoming germs = forward outgoing germs - 1 and
/// dual outgoing germs = forward incoming germs + 1.
Tally type_duality_check(const IncrementField &field, int probe_depth);

} // namespace webweave
