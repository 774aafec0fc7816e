#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "webweave/brownian_sim.hpp"
#include "webweave/counting.hpp"
#include "webweave/error.hpp"
#include "webweave/stats.hpp"

using namespace webweave;

namespace {

PathSet continuum(std::vector<Path> paths, Direction dir = Direction::forward)
{
  PathSet k;
  for (auto &p : paths) k.paths.emplace_back(std::vector<Knot>(p.knots().begin(), p.knots().end()), dir);
  return k;
}

Path line(std::vector<double> xs, double t_first = 0.0)
{
  std::vector<Knot> k;
  for (std::size_t i = 0; i < xs.size(); ++i) k.push_back({t_first + static_cast<double>(i), xs[i]});
  return Path(std::move(k));
}

} // namespace

TEST_CASE("eta on small fixtures")
{
  const CountingQuery q{0.0, 2.0, 0.0, 1.0};
  CHECK(eta(continuum({line({0.5, 0.7, 0.2})}), q) == 1);
  CHECK(eta(continuum({line({0.0, 0.5, 1.0}), line({1.0, 0.5, 1.0})}), q) == 1);

  // Two paths merge, a third keeps its own endpoint, a fourth misses [a, b].
  const auto k = continuum({line({0.0, 0.5, 1.0}), line({0.5, 0.75, 1.0}), line({1.0, 1.5, 2.0}),
                            line({1.5, 2.0, 3.0})});
  CHECK(eta(k, q) == 2);
  CHECK(eta_hat(k, q).value == 1);
  CHECK_FALSE(eta_hat(k, q).empty);

  const auto none = eta_hat(k, {0.0, 2.0, 5.0, 6.0});
  CHECK(none.empty);
  CHECK(none.value == -1);

  CHECK_THROWS_AS(eta(k, {0.0, 3.0, 0.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(eta(k, {0.0, 0.0, 0.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(eta(k, {0.0, 1.0, 1.0, 0.0}), InvalidArgument);
}

TEST_CASE("eta_hat of three distinct endpoints is 2")
{
  const auto k = continuum({line({0.0, 0.0, 0.0}), line({0.5, 1.0, 2.0}), line({1.0, 2.0, 3.0})});
  CHECK(eta_hat(k, {0.0, 2.0, 0.0, 1.0}).value == 2);
}

TEST_CASE("paths starting after t0 do not touch")
{
  const auto k = continuum({line({0.0, 0.0, 0.0}), line({0.5, 0.5}, 1.0)});
  CHECK(eta(k, {0.0, 2.0, 0.0, 1.0}) == 1);
}

TEST_CASE("eta_dual on fixtures")
{
  const CountingQuery q{0.0, 2.0, 0.0, 1.0};
  CHECK(eta_dual(continuum({line({3.0, 3.0, 3.0})}, Direction::backward), q) == 0);
  // Two dual paths merged below t0 + t, one distinct, one started too late, one outside.
  const auto k = continuum({line({0.2, 0.4, 0.5}), line({0.7, 0.7, 0.9}), line({0.7, 0.8, 1.2}),
                            line({0.4, 0.1}), line({1.5, 1.5, 1.5})},
                           Direction::backward);
  CHECK(eta_dual(k, q) == 2);
}

TEST_CASE("duality identity on seeded simple fields")
{
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto f = generate_field({-40, 40, 0, 40}, IncrementLaw::simple(), seed);
    const auto fwd = build_ensemble_all(f);
    const auto dual = build_dual(f, DualStarts::all_sites);
    for (int t0 : {4, 10}) {
      for (int t : {1, 6, 20}) {
        for (int a : {-8, -2}) {
          const int a_even = a + (t0 % 2 != 0);
          const CountingQuery q{double(t0), double(t), double(a_even), double(a_even + 10)};
          CHECK(eta(fwd, q) == 1 + eta_dual(dual, q));
        }
      }
    }
  }
}

TEST_CASE("theta")
{
  CHECK(theta(0.0, 1.0) == 0.0);
  CHECK(theta(50.0, 1.0) == doctest::Approx(1.0));
  CHECK(theta(1.0, 1.0) == doctest::Approx(0.52050).epsilon(1e-5));
  CHECK(theta(1.0, 1.0) == doctest::Approx(std::erf(0.5)));
  CHECK(theta(2.0, 4.0) == doctest::Approx(theta(1.0, 1.0)));
  CHECK_THROWS_AS(theta(1.0, 0.0), InvalidArgument);

  constexpr std::size_t n = 1000000;
  Xoshiro256 gen(31);
  std::size_t apart = 0;
  for (std::size_t i = 0; i < n; ++i) apart += pair_coalescence_time(0.0, 1.0, gen) > 1.0;
  const double p = static_cast<double>(apart) / n;
  CHECK(std::abs(p - theta(1.0, 1.0)) < 3.0 * stats::binomial_se(theta(1.0, 1.0), n));
}

TEST_CASE("expected_eta")
{
  CHECK(expected_eta(0.0, 1.0, 1.0) == doctest::Approx(1.56419).epsilon(1e-5));
  CHECK(expected_eta(0.3, 0.3, 2.0) == 1.0);
  CHECK(expected_eta(0.0, 1e-12, 1.0) == doctest::Approx(1.0));
  for (double c : {0.5, 2.0, 3.0})
    CHECK(expected_eta(1.0, 1.0 + c * 0.7, c * c * 2.0) - 1.0 ==
          doctest::Approx(expected_eta(1.0, 1.7, 2.0) - 1.0).epsilon(1e-12));
}

TEST_CASE("n_sets")
{
  const CountingQuery q{0.0, 2.0, 0.0, 1.0};
  const auto single = n_sets(continuum({line({0.4, 0.0, 1.0})}), q);
  CHECK_FALSE(single.empty);
  CHECK(single.l == single.r);
  CHECK(single.n_all == single.n_plus);
  CHECK(single.n_all == single.n_minus);
  CHECK_FALSE(single.split());

  // The middle path ends away from both extreme paths' endpoints.
  const auto k = continuum({line({0.0, 0.0, 0.0}), line({0.5, 2.0, 5.0}), line({1.0, 1.0, 1.0})});
  const auto r = n_sets(k, q);
  CHECK(r.l == 0.0);
  CHECK(r.r == 1.0);
  CHECK(r.n_all.size() == eta(k, q));
  CHECK(r.split());

  const auto merged = continuum({line({0.0, 0.5, 1.0}), line({0.5, 1.0, 1.0}), line({1.0, 1.0, 1.0})});
  CHECK_FALSE(n_sets(merged, q).split());
  CHECK(n_sets(k, {0.0, 2.0, 7.0, 8.0}).empty);
}

TEST_CASE("|N| equals eta on seeded lattice ensembles")
{
  const auto f = generate_field({-30, 30, 0, 30}, IncrementLaw::simple(), 19);
  const auto k = build_ensemble_all(f);
  for (int t = 1; t < 20; t += 3) {
    const CountingQuery q{4.0, double(t), -6.0, 6.0};
    CHECK(n_sets(k, q).n_all.size() == eta(k, q));
  }
}

TEST_CASE("eta is non-increasing in t on a coalescing ensemble")
{
  const auto f = generate_field({-40, 40, 0, 60}, IncrementLaw::simple(), 23);
  const auto k = build_ensemble_all(f);
  std::size_t last = eta(k, {10.0, 1.0, -10.0, 10.0});
  for (int t = 2; t <= 40; ++t) {
    const std::size_t now = eta(k, {10.0, double(t), -10.0, 10.0});
    CHECK(now <= last);
    last = now;
  }
}

TEST_CASE("classify_point")
{
  PathSet k;
  k.lattice = true;
  k.paths.push_back(line({0, 1, 2, 3, 4}));
  k.paths.push_back(line({4, 3, 2, 3, 4}));
  k.paths.push_back(line({2, 1}, 2.0));
  k.paths.push_back(line({7, 8, 9, 10, 11}));
  const LatticeIndex index(k);
  const auto through = index.through({2, 2});
  CHECK(through.size() == 3);

  const auto single = classify_point(index, {8, 1}, 1);
  CHECK(single.m_in == 1);
  CHECK(single.m_out == 1);
  const auto vertex = classify_point(index, {2, 2}, 1);
  CHECK(vertex.m_in == 2);
  CHECK(vertex.m_out == 2);

  PathSet fresh;
  fresh.lattice = true;
  fresh.paths.push_back(line({0, 1, 2, 3, 4}));
  fresh.paths.push_back(line({4, 3, 2, 3, 4}));
  fresh.paths.push_back(line({5, 4, 3}, 2.0));
  const LatticeIndex fi(fresh);
  const auto merge = classify_point(fi, {2, 2}, 1);
  CHECK(merge.m_in == 2);
  CHECK(merge.m_out == 1);
  const auto start = classify_point(fi, {5, 2}, 1);
  CHECK(start.m_in == 0);
  CHECK(start.m_out == 1);
  CHECK(classify_point(fi, {30, 2}, 1).m_out == 0);
  CHECK_THROWS_AS(classify_point(fi, {4, 4}, 1), InvalidArgument);
}

TEST_CASE("coalescence_points")
{
  PathSet one;
  one.lattice = true;
  one.paths.push_back(line({0, 1, 2}));
  CHECK(coalescence_points(one).empty());

  PathSet two = one;
  two.paths.push_back(line({2, 1, 2}));
  const auto pts = coalescence_points(two);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0] == SiteRecord{1, 1});
}

TEST_CASE("coalescence_points match a brute-force pairwise scan")
{
  const auto f = generate_field({0, 49, 0, 49}, IncrementLaw::simple(), 50);
  const auto k = build_ensemble_all(f);
  std::set<std::pair<int, int>> brute;
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (std::size_t j = i + 1; j < k.size(); ++j) {
      const auto &p = k.paths[i], &q = k.paths[j];
      const int lo = static_cast<int>(std::max(p.begin_time(), q.begin_time()));
      for (int t = lo + 1; t <= 49; ++t) {
        if (p.at(t) == q.at(t) && p.at(t - 1) != q.at(t - 1)) {
          brute.insert({static_cast<int>(p.at(t)), t});
          break;
        }
      }
    }
  }
  std::set<std::pair<int, int>> fast;
  for (const auto &s : coalescence_points(k)) fast.insert({s.x, s.t});
  CHECK(fast.size() == coalescence_points(k).size());
  CHECK(fast == brute);
  CHECK(brute.size() > 50);
}

TEST_CASE("count_distinct_endpoints")
{
  const std::vector<double> s{0.0, 0.5, 1.0, 2.0, std::nan("")};
  const std::vector<double> e{1.0, 1.0, 3.0, 4.0, 5.0};
  CHECK(count_distinct_endpoints(s, e, 0.0, 1.0, 0.0) == 2);
  CHECK(count_distinct_endpoints(s, e, 0.0, 5.0, 0.0) == 3);
}
