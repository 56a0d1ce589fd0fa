#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "ridemarket/matching_engine.hpp"
#include "support/match_fixtures.hpp"

using namespace ridemarket;
using testing::fixture;

TEST_CASE("acceptance probability") {
  CHECK(acceptance_probability(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(acceptance_probability(2.0, 3.0) == 1.0);
  CHECK(acceptance_probability(2.0, 0.0) == 0.0);
  CHECK(acceptance_probability(0.0, 0.0) == 1.0);
  CHECK(acceptance_probability(0.0, -1.0) == 0.0);
}

TEST_CASE("dispatch pool size") {
  CHECK(dispatch_pool_size(2.0, 1.0, 2.0) == doctest::Approx(1.0));
  CHECK(dispatch_pool_size(2.0, 1.0, 1.0) == doctest::Approx(2.0));
  CHECK(dispatch_pool_size(2.0, 0.0, 0.0) == 0.0);
  CHECK(dispatch_pool_size(0.0, 1.5, 0.0) == doctest::Approx(1.5));
  CHECK_THROWS_AS(dispatch_pool_size(2.0, 1.0, 0.0), DomainError);
}

TEST_CASE("fluid single destination") {
  auto a = fluid_single_destination(2, 10, 0.5, 1.0);
  CHECK(a.dispatched == doctest::Approx(2));
  CHECK(a.undispatched == doctest::Approx(6));
  auto b = fluid_single_destination(10, 4, 0.5, 1.0);
  CHECK(b.dispatched == doctest::Approx(2));
  CHECK(b.undispatched == doctest::Approx(0));
  auto c = fluid_single_destination(3, 3, 1.0, 1.0);
  CHECK(c.dispatched == doctest::Approx(3));
  CHECK(c.undispatched == doctest::Approx(0));
  auto d = fluid_single_destination(2, 5, 0.0, 0.0);  // C = 0: everyone offered accepts
  CHECK(d.dispatched == doctest::Approx(2));
  CHECK(d.undispatched == doctest::Approx(3));
}

TEST_CASE("fluid match under the optimal strategy serves the plan") {
  FluidMatchInputs in;
  in.supply = 1.0;
  in.C = 2.0;
  in.planned_dispatch = {0.3, 0.2};
  in.requests = {0.3, 0.2};
  in.thresholds = {1.0, 1.0};  // C * sum g / S
  in.relocation = {0.5, 0.5};
  auto out = fluid_match(in);
  CHECK(out.dispatched[0] == doctest::Approx(0.3));
  CHECK(out.dispatched[1] == doctest::Approx(0.2));
  CHECK(out.relocated[0] + out.relocated[1] == doctest::Approx(0.5));

  in.thresholds = {0.0, 0.0};
  auto none = fluid_match(in);
  CHECK(none.dispatched[0] == 0.0);
  CHECK(none.dispatched[1] == 0.0);
  CHECK(none.relocated[0] == doctest::Approx(0.5));
  CHECK(none.relocated[1] == doctest::Approx(0.5));

  in.thresholds = {0.5, 1.0};
  auto low = fluid_match(in);
  CHECK(low.dispatched[0] < 0.3 - 1e-6);
  CHECK(low.dispatched[1] == doctest::Approx(0.2));
}

TEST_CASE("largest remainder rounding") {
  auto a = largest_remainder(10, {1, 1, 1});
  CHECK(a == std::vector<long>{4, 3, 3});
  auto b = largest_remainder(5, {0.5, 0.25, 0.25});
  CHECK(std::accumulate(b.begin(), b.end(), 0L) == 5);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(b[i] - 5 * std::vector<double>{0.5, 0.25, 0.25}[i]) <= 1);
  CHECK(largest_remainder(3, {0, 0}) == std::vector<long>{0, 0});
}

TEST_CASE("single destination subroutine") {
  KeyedStream rng(3, {1});
  std::vector<MatchDriver> none;
  auto z = sample_single_destination(rng, 1, {}, 0, none);
  CHECK(z.accepted == 0);

  auto one = fixture({{0.5}}, {0}, {1}, {0});
  auto two = fixture({{0.5}, {0.5}}, {0, 0}, {1}, {0});
  const long n = 100000;
  long g1 = 0, g2 = 0;
  for (long i = 0; i < n; ++i) {
    g1 += sample_single_destination(rng, 1, {0}, 0, one.drivers).accepted;
    g2 += sample_single_destination(rng, 1, {0, 1}, 0, two.drivers).accepted;
  }
  double p1 = double(g1) / n, p2 = double(g2) / n;
  CHECK(std::abs(p1 - 0.5) <= 3 * std::sqrt(0.25 / n));
  CHECK(std::abs(p2 - 0.75) <= 3 * std::sqrt(0.75 * 0.25 / n));
}

TEST_CASE("sample_match edge cases") {
  KeyedStream rng(9, {2});
  auto zero = fixture({{0, 0}, {0, 0}, {0, 0}}, {1, 0, 1}, {2, 2}, {1, 1});
  auto out = sample_match(rng, zero);
  CHECK(out.dispatched == std::vector<long>{0, 0});
  CHECK(out.relocated == std::vector<long>{1, 2});
  for (std::size_t i = 0; i < 3; ++i) CHECK(out.assignments[i].dest == zero.drivers[i].relocate);

  auto all = fixture({{1, 1}, {1, 1}, {1, 1}}, {0, 0, 0}, {2, 2}, {1, 1});
  auto o2 = sample_match(rng, all);
  CHECK(o2.dispatched[0] + o2.dispatched[1] == 3);
  CHECK(o2.relocated == std::vector<long>{0, 0});
}

TEST_CASE("sample_match conserves drivers and respects requests") {
  KeyedStream rng(17, {3});
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> U(0, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t M = gen() % 12, n = 1 + gen() % 3;
    MatchInputs in;
    for (std::size_t i = 0; i < M; ++i) {
      MatchDriver d{i, {}, gen() % n};
      for (std::size_t s = 0; s < n; ++s) d.accept.push_back(U(gen) < 0.3 ? 0.0 : U(gen));
      in.drivers.push_back(d);
    }
    for (std::size_t s = 0; s < n; ++s) {
      in.requests.push_back(long(gen() % 6));
      in.pool_weights.push_back(U(gen) < 0.3 ? 0.0 : U(gen));
    }
    auto out = sample_match(rng, in);
    long total = 0;
    for (std::size_t s = 0; s < n; ++s) {
      CHECK(out.dispatched[s] <= in.requests[s]);
      total += out.dispatched[s] + out.relocated[s];
    }
    CHECK(total == long(M));
    for (std::size_t i = 0; i < M; ++i)
      if (!out.assignments[i].dispatch) CHECK(out.assignments[i].dest == in.drivers[i].relocate);
  }
}

TEST_CASE("enumerated distribution") {
  auto one = fixture({{1.0}}, {0}, {1}, {0});
  auto d1 = enumerate_match_distribution(one);
  CHECK(d1.at({{1}, {0}}) == doctest::Approx(1.0));
  auto two = fixture({{0.5}, {0.5}}, {0, 0}, {1}, {0});
  auto d2 = enumerate_match_distribution(two);
  CHECK(d2.at({{1}, {1}}) == doctest::Approx(0.75));
  for (const auto& fx : testing::tiny_fixtures()) {
    double s = 0;
    for (const auto& [k, p] : enumerate_match_distribution(fx)) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto big = fixture({{1}, {1}, {1}, {1}, {1}, {1}}, {0, 0, 0, 0, 0, 0}, {1}, {0});
  CHECK_THROWS_AS(enumerate_match_distribution(big), SizeLimit);
  auto many = fixture({{1}}, {0}, {5}, {0});
  CHECK_THROWS_AS(enumerate_match_distribution(many), SizeLimit);
}

TEST_CASE("exchangeable drivers: relabeling leaves the law unchanged") {
  auto a = fixture({{0.3, 0.8}, {0.3, 0.8}, {0.9, 0.1}, {0.9, 0.1}}, {0, 0, 1, 1}, {1, 2}, {1, 1});
  auto b = fixture({{0.9, 0.1}, {0.3, 0.8}, {0.9, 0.1}, {0.3, 0.8}}, {1, 0, 1, 0}, {1, 2}, {1, 1});
  auto da = enumerate_match_distribution(a), db = enumerate_match_distribution(b);
  REQUIRE(da.size() == db.size());
  for (const auto& [k, p] : da) CHECK(db.at(k) == doctest::Approx(p).epsilon(1e-12));
  const long n = 20000;
  auto x = testing::chi_square(da, testing::sample_counts(b, n, 77), n);
  CHECK(x.p > 0.001);
}

TEST_CASE("sampled law matches the exact oracle (M=3, R=(1,1), p=0.5)") {
  auto fx = fixture({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}, {0, 1, 0}, {1, 1}, {1, 1});
  const long n = 100000;
  auto exact = enumerate_match_distribution(fx);
  auto seen = testing::sample_counts(fx, n, 5);
  for (const auto& [k, p] : exact) {
    double freq = seen.count(k) ? double(seen.at(k)) / n : 0.0;
    CHECK(std::abs(freq - p) <= 3 * std::sqrt(p * (1 - p) / n) + 1e-12);
  }
}

TEST_CASE("mean of sampled matching approaches the scaled fluid outcome") {
  for (long k : {100L, 1000L}) {
    const std::vector<double> Rbar{0.3, 0.4}, g{0.25, 0.25}, e{0.5, 0.5};
    const double x = 0.5, C = 1.0;
    FluidMatchInputs fin{1.0, {}, {x, x}, e, g, C};
    MatchInputs base;
    for (double r : Rbar) {
      base.requests.push_back(std::llround(k * r));
      fin.requests.push_back(double(base.requests.back()) / double(k));
    }
    base.pool_weights = g;
    auto fl = fluid_match(fin);
    KeyedStream rng(31, {std::uint64_t(k)});
    const int runs = 2000;
    std::vector<double> meanG(2, 0), meanH(2, 0);
    for (int t = 0; t < runs; ++t) {
      MatchInputs in = base;
      auto counts = largest_remainder(k, e);
      std::vector<std::size_t> slot;
      for (std::size_t s = 0; s < 2; ++s) slot.insert(slot.end(), std::size_t(counts[s]), s);
      for (std::size_t i = slot.size(); i > 1; --i) std::swap(slot[i - 1], slot[rng.below(i)]);
      for (long i = 0; i < k; ++i) {
        double a = rng.uniform() * C <= x ? 1.0 : 0.0;
        in.drivers.push_back({std::uint64_t(i), {a, a}, slot[std::size_t(i)]});
      }
      auto out = sample_match(rng, in);
      for (std::size_t s = 0; s < 2; ++s) {
        meanG[s] += double(out.dispatched[s]) / runs;
        meanH[s] += double(out.relocated[s]) / runs;
      }
    }
    for (std::size_t s = 0; s < 2; ++s) {
      CHECK(std::abs(meanG[s] - k * fl.dispatched[s]) <= 3 * std::sqrt(double(k)));
      CHECK(std::abs(meanH[s] - k * fl.relocated[s]) <= 3 * std::sqrt(double(k)));
    }
  }
}
