#include <doctest.h>

#include <cmath>

#include "webweave/diagnostics.hpp"
#include "webweave/error.hpp"
#include "webweave/rng.hpp"

using namespace webweave;

namespace {

McOptions mc(std::size_t replicas, std::uint64_t seed, double z = 2.0)
{
  McOptions o;
  o.replicas = replicas;
  o.seed = seed;
  o.threads = 4;
  o.z = z;
  return o;
}

const EnsembleLaw simple_walks(double delta) { return WalkEnsemble{IncrementLaw::simple(), delta}; }

std::vector<SpacePoint> segment(std::size_t n)
{
  std::vector<SpacePoint> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    out.push_back({v, v});
  }
  return out;
}

const std::vector<double> dyadic{0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625};

} // namespace

TEST_CASE("options and ensembles are validated")
{
  CHECK_THROWS_AS(mc(99, 1).validate(), InvalidArgument);
  CHECK_NOTHROW(mc(100, 1).validate());
  CHECK_THROWS_AS(mc(100, 1, 0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(validate(simple_walks(0.0)), InvalidArgument);
  CHECK_THROWS_AS(validate(EnsembleLaw{SkeletonEnsemble{0.0, 0.1, 0.0, true}}), InvalidArgument);
  CHECK(describe(simple_walks(0.1))["kind"] == "walk");
}

TEST_CASE("run_replicas does not depend on the thread count")
{
  auto f = [](std::size_t i) { return derive_seed(7, i); };
  CHECK(run_replicas(1000, 1, f) == run_replicas(1000, 8, f));
  CHECK_THROWS_AS(run_replicas(100, 4, [](std::size_t i) -> int {
                    if (i == 37) throw InvalidArgument("boom");
                    return 0;
                  }),
                  InvalidArgument);
}

TEST_CASE("walk_sites picks lattice sites inside the interval")
{
  const WalkEnsemble w{IncrementLaw::simple(), 0.1};
  const auto sites = walk_sites(w, -0.35, 0.35, 0.0);
  CHECK(sites == std::vector<int>{-2, 0, 2});
  const auto odd = walk_sites(w, -0.35, 0.35, 0.01);
  CHECK(odd == std::vector<int>{-3, -1, 1, 3});
}

TEST_CASE("sampled eta is reproducible from its seed")
{
  const CountingQuery q{0.0, 1.0, 0.0, 1.0};
  const auto law = simple_walks(0.05);
  CHECK(sample_eta_once(law, q, 5) == sample_eta_once(law, q, 5));
  const EnsembleLaw sk = SkeletonEnsemble{1e-3, 0.02, 1.0, true};
  CHECK(sample_eta_once(sk, q, 5) == sample_eta_once(sk, q, 5));
}

TEST_CASE("check_counting on synthetic counts")
{
  std::vector<std::size_t> etas;
  for (int i = 0; i < 1000; ++i) etas.push_back(1 + (i % 4 == 0) + (i % 8 == 0));
  const CountingQuery q{0.0, 1.0, 0.0, 1.0};
  const auto c = check_counting(etas, q, 2, 3.0);
  CHECK(c.mean_eta.estimate == doctest::Approx(1.375));
  CHECK(c.expected == doctest::Approx(expected_eta(0.0, 1.0, 1.0)));
  REQUIRE(c.tails.size() == 2);
  CHECK(c.tails[0].p == doctest::Approx(0.25));
  CHECK(c.tails[1].p == doctest::Approx(0.125));
  CHECK(c.tails[0].bound == doctest::Approx(theta(1.0, 1.0)));
  CHECK(c.tails[1].bound == doctest::Approx(theta(1.0, 1.0) * theta(1.0, 1.0)));
  CHECK(c.tails[1].submult == doctest::Approx(0.25 * 0.25));
  CHECK_FALSE(c.tails[1].submult_ok);
  CHECK_THROWS_AS(check_counting(std::span(etas).first(50), q, 2, 3.0), InvalidArgument);
}

TEST_CASE("I1: walk marginal KS distance shrinks with delta")
{
  const std::vector<double> starts{0.0, 1.0};
  const std::vector<double> deltas{0.1, 0.05, 0.02};
  const auto rep = check_I1(simple_walks(1.0), starts, deltas, 2.0, mc(4000, 11));
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.marginal_trend_ok);
  for (const auto &r : rep.rows) {
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].u == doctest::Approx(1.0));
  }
}

TEST_CASE("I1: walk pair one apart meets by time one with the first-passage probability")
{
  const std::vector<double> starts{0.0, 1.0};
  const std::vector<double> deltas{0.05};
  const auto rep = check_I1(simple_walks(1.0), starts, deltas, 1.0, mc(100000, 12));
  const auto &p = rep.rows[0].pairs[0];
  CHECK(p.p_meet_expected == doctest::Approx(1.0 - std::erf(0.5)));
  CHECK(std::abs(p.p_meet - p.p_meet_expected) < 3.0 * p.p_meet_se);
}

TEST_CASE("I1: the skeleton itself is consistent with the null")
{
  const std::vector<double> starts{0.0, 0.7};
  const auto rep = check_I1(SkeletonEnsemble{1e-3, 0.1, 0.0, true}, starts, {}, 2.0, mc(4000, 13));
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].marginal_ks_p > 0.01);
  CHECK(rep.rows[0].pairs[0].ks_p > 0.01);
}

TEST_CASE("B: a single starting site gives zero probabilities")
{
  const std::vector<double> eps{0.01};
  const std::vector<SpacePoint> probes{{0.0, 0.0}};
  const auto rep = estimate_B(simple_walks(0.05), 1.0, eps, probes, mc(200, 1));
  CHECK(rep.rows[0].p1 == 0.0);
  CHECK(rep.rows[0].p2 == 0.0);
  const std::vector<double> ts{1.0};
  const auto bp = estimate_Bprime(simple_walks(0.05), 0.5, ts, eps, probes, mc(200, 1));
  CHECK(bp.rows[0].p_multi == 0.0);
  CHECK(bp.rows[0].p_split_over_eps == 0.0);
}

TEST_CASE("B on the skeleton tracks Theta")
{
  const std::vector<double> eps{0.2, 0.1};
  const std::vector<SpacePoint> probes{{0.0, 0.0}};
  const auto rep = estimate_B(SkeletonEnsemble{1e-3, 0.01, 1.0, true}, 1.0, eps, probes, mc(1500, 2));
  for (const auto &r : rep.rows) CHECK(std::abs(r.p1 - theta(r.eps, 1.0)) < 3.0 * r.p1_se);
  CHECK(rep.b1_trend_ok);
}

TEST_CASE("B' agrees with B for non-crossing walks")
{
  // B' counts over [a - eps, a + eps], B over [a, a + eps].
  const std::vector<double> eps{0.25};
  const std::vector<double> width{0.5};
  const std::vector<SpacePoint> centre{{0.0, 0.0}}, left{{-0.25, 0.0}};
  const std::vector<double> ts{1.0};
  const auto b = estimate_B(simple_walks(0.05), 1.0, width, left, mc(500, 3));
  const auto bp = estimate_Bprime(simple_walks(0.05), 0.5, ts, eps, centre, mc(500, 3));
  for (std::size_t i = 0; i < eps.size(); ++i) CHECK(b.rows[i].p1 == bp.rows[i].p_multi);
}

TEST_CASE("B' trends for +-3 walks")
{
  const EnsembleLaw law = WalkEnsemble{IncrementLaw::general({{-3, 0.5}, {3, 0.5}}), 0.05};
  const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
  const std::vector<double> ts{0.5, 1.0};
  const std::vector<SpacePoint> probes{{0.0, 0.0}};
  const auto rep = estimate_Bprime(law, 0.25, ts, eps, probes, mc(4000, 4));
  CHECK(rep.multi_trend_ok);
  CHECK(rep.split_trend_ok);
}

TEST_CASE("tightness estimates are probabilities over t")
{
  const std::vector<double> ts{0.2, 0.1};
  const std::vector<SpacePoint> probes{{0.0, 0.0}};
  for (const EnsembleLaw &law : {simple_walks(0.05), EnsembleLaw{SkeletonEnsemble{1e-3, 0.05, 0.0, true}}}) {
    const auto rep = estimate_tightness(law, ts, 1.0, probes, mc(300, 5));
    for (const auto &r : rep.rows) {
      CHECK(r.p >= 0.0);
      CHECK(r.p <= 1.0);
      CHECK(r.g == doctest::Approx(r.p / r.t));
    }
  }
  CHECK(tightness_event(simple_walks(0.05), 0.1, 1.0, {0.0, 0.0}, 9) ==
        tightness_event(simple_walks(0.05), 0.1, 1.0, {0.0, 0.0}, 9));
  // A rectangle far wider than any excursion in the time allowed is never left.
  CHECK_FALSE(tightness_event(simple_walks(0.05), 0.01, 40.0, {0.0, 0.0}, 9));
}

TEST_CASE("box dimension of a straight segment")
{
  const auto pts = segment(10000);
  const auto s = box_dimension(pts, dyadic);
  CHECK(s.fitted_dimension == doctest::Approx(1.0).epsilon(0.05));
  CHECK(s.within_cap);
  CHECK(s.scales.front() > s.scales.back());
}

TEST_CASE("box dimension of a filled square")
{
  std::vector<SpacePoint> pts;
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j) pts.push_back({(i + 0.5) / 100, (j + 0.5) / 100});
  CHECK(box_dimension(pts, dyadic).fitted_dimension == doctest::Approx(2.0).epsilon(0.025));
}

TEST_CASE("box dimension input checks")
{
  const auto pts = segment(2000);
  const std::vector<double> narrow{0.3, 0.1, 0.05};
  CHECK_THROWS_AS(box_dimension(pts, narrow), InvalidArgument);
  const std::vector<double> two{0.5, 0.001};
  CHECK_THROWS_AS(box_dimension(pts, two), InvalidArgument);
  CHECK_THROWS_AS(box_dimension(segment(500), dyadic), InvalidArgument);
  CHECK_NOTHROW(box_dimension(segment(500), dyadic, 100));
  const std::vector<SpacePoint> same(2000, SpacePoint{0.5, 0.5});
  CHECK_THROWS_AS(box_dimension(same, dyadic), InvalidArgument);

  const std::vector<std::vector<SpacePoint>> sets{segment(1000), segment(1000)};
  const auto pooled = box_dimension_pooled(sets, dyadic);
  CHECK(pooled.fitted_dimension == doctest::Approx(box_dimension(sets[0], dyadic).fitted_dimension));
  CHECK(pooled.log_count_se == std::vector<double>(dyadic.size(), 0.0));
}

TEST_CASE("graph of a simple walk has dimension near 3/2")
{
  const WalkEnsemble w{IncrementLaw::simple(), 0.01};
  std::vector<std::vector<SpacePoint>> sets;
  for (std::uint64_t r = 0; r < 5; ++r) sets.push_back(graph_points(walk_path(w, 1.0, derive_seed(77, r)), 5e-6));
  std::vector<double> scales;
  for (int k = 3; k <= 10; ++k) scales.push_back(std::ldexp(1.0, -k));
  CHECK(box_dimension_pooled(sets, scales).fitted_dimension == doctest::Approx(1.5).epsilon(0.1));
}

TEST_CASE("graph_points spacing")
{
  const Path p({{0.0, 0.0}, {1.0, 1.0}});
  const auto g = graph_points(p, 0.1);
  REQUIRE(g.size() >= 11);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i].t - g[i - 1].t <= 0.1 + 1e-12);
  CHECK(g.back().t == 1.0);
}

TEST_CASE("record_projection")
{
  const Path rising({{0, 0}, {1, 1}, {2, 3}, {3, 4}});
  const Path other({{0, 5}, {3, 2}});
  CHECK(record_projection(rising, other, 0.5, 1.0, 3.0).size() == 4);

  const Path x({{0, 0}, {1, 2}, {2, 1}, {3, 3}, {4, 2.5}});
  const Path flat({{0, 0}, {4, 0}});
  const auto r = record_projection(x, flat, 1.0, 0.0, 4.0);
  REQUIRE(r.size() == 3);
  CHECK(r[0].x == 0.0);
  CHECK(r[1].x == 2.0);
  CHECK(r[1].t == 1.0);
  CHECK(r[2].x == 3.0);
  CHECK(r[2].t == 3.0);
  CHECK_THROWS_AS(record_projection(x, x, 0.0, 0.0, 4.0), InvalidArgument);
}

TEST_CASE("walk bound")
{
  const WalkEnsemble w{IncrementLaw::simple(), 0.05};
  const auto k2 = verify_walkbound(w, {0.0, 1.0, -0.2, 0.2}, 2, mc(2000, 6));
  CHECK(k2.bound == k2.p2);
  CHECK(k2.p_k == k2.p2);
  CHECK(k2.pass);

  const auto single = verify_walkbound(w, {0.0, 1.0, -0.01, 0.01}, 3, mc(500, 6));
  CHECK(single.p2 == 0.0);
  CHECK(single.p_k == 0.0);
  CHECK(single.pass);

  const auto k3 = verify_walkbound(w, {0.0, 1.0, -0.2, 0.2}, 3, mc(20000, 7, 3.0));
  CHECK(k3.pass);
  CHECK_THROWS_AS(verify_walkbound(w, {0.0, 1.0, -0.2, 0.2}, 1, mc(200, 7)), InvalidArgument);
}

TEST_CASE("duality battery and checks on seeded fields")
{
  const LatticeWindow win{0, 60, 0, 40};
  const auto qs = duality_battery(win, 40, 3);
  REQUIRE(qs.size() == 40);
  for (const auto &q : qs) {
    CHECK(q.a >= win.x_min + q.t + 1);
    CHECK(q.b <= win.x_max - q.t - 1);
    CHECK(q.t0 + q.t <= win.t_max);
    CHECK(static_cast<int>(q.a + q.t0) % 2 == 0);
  }
  for (std::uint64_t seed : {1u, 2u}) {
    const auto f = generate_field(win, IncrementLaw::simple(), seed);
    const auto d = duality_check(f, qs);
    CHECK(d.checked == 40);
    CHECK(d.violations == 0);
    const auto t = type_duality_check(f, 2);
    CHECK(t.checked > 0);
    CHECK(t.violations == 0);
  }
}
