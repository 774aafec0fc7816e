#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "webweave/path_space.hpp"
#include "webweave/rng.hpp"

using namespace webweave;

namespace {

Path random_path(Xoshiro256 &gen)
{
  const double t0 = -2.0 + 2.0 * gen.uniform();
  const double t1 = 1.0 + 2.0 * gen.uniform();
  std::vector<Knot> knots;
  const int n = 2 + static_cast<int>(gen() % 6);
  for (int i = 0; i < n; ++i) knots.push_back({t0 + (t1 - t0) * i / (n - 1), 4.0 * gen.uniform() - 2.0});
  return Path(std::move(knots));
}

} // namespace

TEST_CASE("compactify")
{
  const auto o = compactify(0.0, 0.0);
  CHECK(o.phi == 0.0);
  CHECK(o.psi == 0.0);
  const auto p = compactify(1.0, 1.0);
  CHECK(p.phi == doctest::Approx(0.38079).epsilon(1e-5));
  CHECK(p.psi == doctest::Approx(0.76159).epsilon(1e-5));
  const auto m = compactify(-1.0, 1.0);
  CHECK(m.phi == -p.phi);
  CHECK(m.psi == p.psi);
}

TEST_CASE("rho")
{
  CHECK(rho({0.3, 1.2}, {0.3, 1.2}) == 0.0);
  CHECK(rho({0.0, 0.0}, {0.0, 1.0}) == doctest::Approx(std::tanh(1.0)));
  CHECK(rho({0.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.76159).epsilon(1e-5));
  Xoshiro256 gen(3);
  for (int i = 0; i < 10000; ++i) {
    const Knot a{10 * gen.uniform() - 5, 10 * gen.uniform() - 5};
    const Knot b{10 * gen.uniform() - 5, 10 * gen.uniform() - 5};
    REQUIRE(rho(a, b) == rho(b, a));
  }
}

TEST_CASE("path_distance on hand-evaluated paths")
{
  const Path zero({{0.0, 0.0}, {10.0, 0.0}});
  const Path one({{0.0, 1.0}, {10.0, 1.0}});
  CHECK(path_distance(zero, zero).value == 0.0);
  const auto d = path_distance(zero, one);
  CHECK(d.value == doctest::Approx(std::tanh(1.0)).epsilon(1e-10));
  REQUIRE(d.witness.has_value());
  CHECK(*d.witness == doctest::Approx(0.0));

  const Path late({{1.0, 0.0}, {10.0, 0.0}});
  CHECK(path_distance(zero, late).value == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
}

TEST_CASE("path_distance finds an interior supremum")
{
  // The difference tanh(x)/(1+|t|) of a rising and a falling path peaks
  // strictly between knots; a fine scan must not exceed the result.
  const Path up({{0.0, -1.0}, {4.0, 3.0}});
  const Path down({{0.0, 1.0}, {4.0, -3.0}});
  const double d = path_distance(up, down).value;
  double scan = 0.0;
  for (int i = 0; i <= 400000; ++i) {
    const double t = 4.0 * i / 400000;
    scan = std::max(scan, std::abs(compactify(up.at(t), t).phi - compactify(down.at(t), t).phi));
  }
  CHECK(d >= scan - 1e-12);
  CHECK(d - scan < 1e-9);
}

TEST_CASE("path_distance is a metric on random paths")
{
  Xoshiro256 gen(17);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_path(gen), q = random_path(gen), r = random_path(gen);
    const double pq = path_distance(p, q).value;
    CHECK(pq == doctest::Approx(path_distance(q, p).value).epsilon(1e-12));
    CHECK(path_distance(p, r).value <= pq + path_distance(q, r).value + 1e-9);
  }
}

TEST_CASE("hausdorff_distance")
{
  Xoshiro256 gen(5);
  const PathSet k{{random_path(gen), random_path(gen), random_path(gen)}, "k"};
  CHECK(hausdorff_distance(k, k).value == 0.0);

  const PathSet p{{k.paths[0]}, "p"}, q{{k.paths[1]}, "q"};
  CHECK(hausdorff_distance(p, q).value == path_distance(k.paths[0], k.paths[1]).value);

  for (int rep = 0; rep < 50; ++rep) {
    PathSet a, b;
    for (int i = 0; i < 3; ++i) a.paths.push_back(random_path(gen));
    for (int i = 0; i < 2; ++i) b.paths.push_back(random_path(gen));
    auto directed = [](const PathSet &x, const PathSet &y) {
      double sup = 0.0;
      for (const auto &f : x.paths) {
        double inf = std::numeric_limits<double>::infinity();
        for (const auto &g : y.paths) inf = std::min(inf, path_distance(f, g).value);
        sup = std::max(sup, inf);
      }
      return sup;
    };
    CHECK(hausdorff_distance(a, b).value == std::max(directed(a, b), directed(b, a)));
    CHECK(directed_hausdorff(a, b) == directed(a, b));
  }
}
