#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/hypergeometric.hpp>
#include <boost/math/distributions/negative_binomial.hpp>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "ridemarket/concentration_lab.hpp"
#include "ridemarket/market_model.hpp"

using namespace ridemarket;

namespace {

// exact P(Z <= lo) + P(Z >= hi) for Z = R + NegBin failures
double negbin_tail(long R, double p, double lo, double hi) {
  boost::math::negative_binomial_distribution<double> nb(double(R), p);
  double out = 0;
  if (lo >= R) out += cdf(nb, std::floor(lo) - R);
  double h = std::ceil(hi) - R;
  out += h <= 0 ? 1.0 : cdf(complement(nb, h - 1));
  return out;
}

bool near(double freq, double exact, long trials) {
  double se = std::sqrt(std::max(exact * (1 - exact), 1e-12) / double(trials));
  return std::abs(freq - exact) <= 4 * se + 1.0 / double(trials);
}

}  // namespace

TEST_CASE("negbin universal") {
  auto det = negbin_universal_check(1, 1.0, 1, 1000);
  CHECK(det.violations == 0);
  CHECK(det.pass);

  auto r = negbin_universal_check(50, 0.5, 100, 100000);
  CHECK(r.pass);
  CHECK(r.bound == doctest::Approx(std::max(2 * std::exp(-0.125 * 100 / 200.0), std::exp(-8 * 10 * 0.5))));
  CHECK(r.vacuous == (r.bound >= 1));

  // small threshold so the tail is not empty: compare with the exact law
  auto s = negbin_universal_check(5, 0.2, 1, 100000, 7);
  double exact = negbin_tail(5, 0.2, 25 - 24.0, 25 + 24.0);
  CHECK(near(s.frequency, exact, s.trials));
}

TEST_CASE("negbin relative") {
  auto r = negbin_relative_check(100, 0.5, 0.2, 100000);
  CHECK(r.pass);
  CHECK(r.bound == doctest::Approx(2 * std::exp(-0.04 * 50 / 4)));
  double mean = 200, exact = negbin_tail(100, 0.5, std::nextafter(mean * 0.8, 0.0), std::nextafter(mean * 1.2, 1e9));
  CHECK(near(r.frequency, exact, r.trials));

  try {
    negbin_relative_check(100, 0.5, 0.3, 10);
    FAIL("expected PreconditionViolated");
  } catch (const PreconditionViolated& e) {
    CHECK(std::string(e.what()).find("eps < 1/4") != std::string::npos);
  }
  try {
    negbin_relative_check(3, 0.4, 0.2, 10);  // eps E[Z] = 1.5
    FAIL("expected PreconditionViolated");
  } catch (const PreconditionViolated& e) {
    CHECK(std::string(e.what()).find("eps * E[Z] >= 2") != std::string::npos);
  }
}

TEST_CASE("dkw") {
  CHECK(dkw_check(1, 1.0, 1000).violations == 0);
  auto r = dkw_check(200, 0.1, 10000);
  CHECK(r.bound == doctest::Approx(2 * std::exp(-4.0)));
  CHECK(r.frequency <= 2 * std::exp(-4.0));
  double prev = 1.0;
  for (long n : {50L, 200L, 800L}) {
    auto c = dkw_check(n, 0.05, 20000, 3);
    CHECK(c.pass);
    CHECK(c.frequency <= prev);
    prev = c.frequency;
  }
  // the sup statistic does not depend on the scale of the uniform
  CHECK(dkw_check(50, 0.1, 5000, 9, 3.0).violations == dkw_check(50, 0.1, 5000, 9, 1.0).violations);
}

TEST_CASE("sampling without replacement") {
  auto whole = swr_check({30, 70}, 100, 500);
  CHECK(whole.violations == 0);
  CHECK(whole.mean_deviation == 0.0);
  auto mono = swr_check({400}, 200, 500);
  CHECK(mono.mean_deviation == 0.0);
  CHECK(mono.violations == 0);
  CHECK_THROWS_AS(swr_check({5, 5}, 11, 10), DomainError);

  double prev = 1e9;
  for (long k : {100L, 400L, 1600L}) {
    auto r = swr_check({k, k}, k, 4000, 5);
    CHECK(r.pass);
    CHECK(r.mean_deviation < prev);
    prev = r.mean_deviation;
    const auto uk = static_cast<unsigned>(k);
    boost::math::hypergeometric_distribution<double> h(uk, uk, 2 * uk);
    double thr = std::sqrt(double(k)) * std::log(double(k));
    double lo = std::floor(k / 2.0 - thr), hi = std::ceil(k / 2.0 + thr);
    double exact = (lo >= 0 ? cdf(h, lo) : 0.0) + (hi <= k ? cdf(complement(h, hi - 1)) : 0.0);
    CHECK(near(r.frequency, exact, r.trials));
  }
}

TEST_CASE("matching concentration sweep") {
  MatchFixture full;
  full.requests = {5.0, 5.0};
  full.x = 1.0;  // everyone accepts
  auto exact = matching_concentration_sweep(full, {10, 40}, 50);
  for (const auto& row : exact) CHECK(row.mean_deviation <= 2.0 / double(row.k) + 1e-12);

  auto rows = matching_concentration_sweep(MatchFixture{}, {1, 100, 400, 1600}, 200);
  REQUIRE(rows.size() == 4);
  CHECK(std::isfinite(rows[0].mean_deviation));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].envelope == doctest::Approx(5 / std::sqrt(double(rows[i].k))));
    CHECK(rows[i].mean_deviation <= rows[i].envelope);
    if (i > 1) CHECK(rows[i].mean_deviation < rows[i - 1].mean_deviation);
  }
  std::ostringstream os;
  write_sweep_csv(os, rows);
  auto text = os.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("csv") {
  std::ostringstream os;
  write_tail_csv(os, {dkw_check(10, 0.2, 100), negbin_universal_check(5, 0.5, 4, 100)});
  auto s = os.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
  CHECK(s.find("dkw") != std::string::npos);
}
