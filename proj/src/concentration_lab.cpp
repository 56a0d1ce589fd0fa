#include "ridemarket/concentration_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ridemarket/market_model.hpp"
#include "ridemarket/matching_engine.hpp"
#include "ridemarket/rng.hpp"

namespace ridemarket {
namespace {

void finish(TailCheckResult& r) {
  r.frequency = r.trials ? static_cast<double>(r.violations) / static_cast<double>(r.trials) : 0.0;
  r.se = r.trials ? std::sqrt(r.frequency * (1 - r.frequency) / static_cast<double>(r.trials)) : 0.0;
  r.vacuous = r.bound >= 1.0;
  r.pass = r.frequency <= r.bound + 3 * r.se;
}

long negbin(KeyedStream& rng, long R, double p) {
  if (p >= 1) return R;
  long z = 0;
  for (long s = 0; s < R; ++z)
    if (rng.uniform() < p) ++s;
  return z;
}

std::uint64_t tag(const char* s) {
  std::uint64_t h = 1469598103934665603ull;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 1099511628211ull;
  return h;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

TailCheckResult negbin_universal_check(long R, double p, long k, long trials, std::uint64_t seed) {
  if (R < 1 || !(p > 0 && p <= 1) || k < 1) throw DomainError("negbin_universal_check: need R >= 1, p in (0,1], k >= 1");
  TailCheckResult r;
  r.check = "negbin_universal";
  r.params = {{"R", double(R)}, {"p", p}, {"k", double(k)}};
  r.trials = trials;
  const double mean = R / p, thr = 24 * std::sqrt(double(k));
  r.bound = std::max(2 * std::exp(-p * p * p * k / (4.0 * R)), std::exp(-8 * std::sqrt(double(k)) * p));
  KeyedStream rng(seed, {tag("negbin_universal"), std::uint64_t(R), std::uint64_t(k), std::uint64_t(p * 1e6)});
  double dev = 0;
  for (long t = 0; t < trials; ++t) {
    double d = std::abs(double(negbin(rng, R, p)) - mean);
    dev += d;
    if (d >= thr) ++r.violations;
  }
  r.mean_deviation = trials ? dev / double(trials) : 0;
  finish(r);
  return r;
}

TailCheckResult negbin_relative_check(long R, double p, double eps, long trials, std::uint64_t seed) {
  if (R < 1 || !(p > 0 && p <= 1)) throw DomainError("negbin_relative_check: need R >= 1, p in (0,1]");
  const double mean = R / p;
  if (!(eps < 0.25)) throw PreconditionViolated("negbin_relative_check: eps < 1/4 fails (eps = " + fmt(eps) + ")");
  if (!(eps * mean >= 2))
    throw PreconditionViolated("negbin_relative_check: eps * E[Z] >= 2 fails (eps * E[Z] = " + fmt(eps * mean) + ")");
  TailCheckResult r;
  r.check = "negbin_relative";
  r.params = {{"R", double(R)}, {"p", p}, {"eps", eps}};
  r.trials = trials;
  r.bound = 2 * std::exp(-eps * eps * R * p / 4);
  KeyedStream rng(seed, {tag("negbin_relative"), std::uint64_t(R), std::uint64_t(p * 1e6), std::uint64_t(eps * 1e6)});
  double dev = 0;
  for (long t = 0; t < trials; ++t) {
    double d = std::abs(double(negbin(rng, R, p)) - mean);
    dev += d / mean;
    if (d > eps * mean) ++r.violations;
  }
  r.mean_deviation = trials ? dev / double(trials) : 0;
  finish(r);
  return r;
}

TailCheckResult dkw_check(long n, double eps, long trials, std::uint64_t seed, double C) {
  if (n < 1 || !(eps > 0) || !(C > 0)) throw DomainError("dkw_check: need n >= 1, eps > 0, C > 0");
  TailCheckResult r;
  r.check = "dkw";
  r.params = {{"n", double(n)}, {"eps", eps}};
  r.trials = trials;
  r.bound = 2 * std::exp(-2.0 * n * eps * eps);
  KeyedStream rng(seed, {tag("dkw"), std::uint64_t(n), std::uint64_t(eps * 1e6)});
  std::vector<double> u(static_cast<std::size_t>(n));
  double dev = 0;
  for (long t = 0; t < trials; ++t) {
    for (auto& v : u) v = rng.uniform() * C;
    std::sort(u.begin(), u.end());
    double sup = 0;
    for (long i = 0; i < n; ++i) {
      double F = u[std::size_t(i)] / C;
      sup = std::max({sup, double(i + 1) / n - F, F - double(i) / n});
    }
    dev += sup;
    if (sup > eps) ++r.violations;
  }
  r.mean_deviation = trials ? dev / double(trials) : 0;
  finish(r);
  return r;
}

TailCheckResult swr_check(const std::vector<long>& bag, long draws, long trials, std::uint64_t seed) {
  long N = std::accumulate(bag.begin(), bag.end(), 0L);
  if (draws < 0 || draws > N) throw DomainError("swr_check: draws must not exceed the bag size");
  for (long b : bag)
    if (b < 0) throw DomainError("swr_check: negative colour count");
  TailCheckResult r;
  r.check = "swr";
  r.params = {{"bag", double(N)}, {"colours", double(bag.size())}, {"draws", double(draws)}};
  r.trials = trials;
  const double n = double(draws);
  const double thr = draws > 1 ? std::sqrt(n) * std::log(n) : 1.0;
  // Hoeffding-Serfling per colour, union over colours
  double fpc = N > 1 ? 1 - (n - 1) / double(N) : 1.0;
  r.bound = draws > 0 ? std::min(1e300, 2 * double(bag.size()) * std::exp(-2 * thr * thr / (n * std::max(fpc, 1e-300))))
                      : 0.0;
  KeyedStream rng(seed, {tag("swr"), std::uint64_t(N), std::uint64_t(draws)});
  std::vector<long> left(bag.size()), got(bag.size());
  double dev = 0;
  for (long t = 0; t < trials; ++t) {
    left = bag;
    std::fill(got.begin(), got.end(), 0);
    long remaining = N;
    for (long d = 0; d < draws; ++d) {
      auto pick = static_cast<long>(rng.below(std::uint64_t(remaining)));
      std::size_t c = 0;
      while (pick >= left[c]) pick -= left[c++];
      --left[c];
      ++got[c];
      --remaining;
    }
    double worst = 0, sum = 0;
    for (std::size_t c = 0; c < bag.size(); ++c) {
      double e = n * double(bag[c]) / double(N);
      double d = std::abs(double(got[c]) - e);
      worst = std::max(worst, d);
      sum += d;
    }
    dev += draws ? sum / n : 0.0;
    if (worst >= thr && worst > 0) ++r.violations;
  }
  r.mean_deviation = trials ? dev / double(trials) : 0;
  finish(r);
  return r;
}

std::vector<MatchSweepRow> matching_concentration_sweep(const MatchFixture& fx, const std::vector<long>& ks,
                                                        long trials, std::uint64_t seed) {
  const std::size_t n = fx.requests.size();
  if (fx.planned.size() != n || fx.relocation.size() != n) throw DomainError("match fixture: slot counts differ");
  std::vector<MatchSweepRow> rows;
  for (long k : ks) {
    if (k < 1) throw DomainError("matching sweep: k must be >= 1");
    const double kd = double(k);
    const long M = std::llround(kd * fx.supply);
    FluidMatchInputs fin;
    fin.supply = double(M) / kd;
    fin.thresholds.assign(n, fx.x);
    fin.relocation = fx.relocation;
    fin.planned_dispatch = fx.planned;
    fin.C = fx.C;
    MatchInputs base;
    for (double q : fx.requests) {
      base.requests.push_back(std::llround(kd * q));
      fin.requests.push_back(double(base.requests.back()) / kd);
    }
    base.pool_weights = fx.planned;
    auto fl = fluid_match(fin);

    KeyedStream rng(seed, {tag("matching"), std::uint64_t(k)});
    double sum = 0, sq = 0;
    for (long t = 0; t < trials; ++t) {
      MatchInputs in = base;
      in.drivers.resize(std::size_t(M));
      auto counts = largest_remainder(M, fx.relocation);
      std::vector<std::size_t> order(static_cast<std::size_t>(M));
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      std::size_t pos = 0;
      for (std::size_t s = 0; s < n; ++s)
        for (long c = 0; c < counts[s]; ++c) in.drivers[order[pos++]].relocate = s;
      for (std::size_t i = 0; i < std::size_t(M); ++i) {
        auto& d = in.drivers[i];
        d.id = i;
        double X = fx.C > 0 ? rng.uniform() * fx.C : 0.0;
        double a = (fx.C > 0 ? X <= fx.x : fx.x >= 0) ? 1.0 : 0.0;
        d.accept.assign(n, a);
      }
      auto out = sample_match(rng, in);
      double dev = 0;
      for (std::size_t s = 0; s < n; ++s)
        dev += std::abs(double(out.dispatched[s]) - kd * fl.dispatched[s]) +
               std::abs(double(out.relocated[s]) - kd * fl.relocated[s]);
      dev /= kd;
      sum += dev;
      sq += dev * dev;
    }
    MatchSweepRow row;
    row.k = k;
    row.trials = trials;
    row.mean_deviation = trials ? sum / double(trials) : 0;
    if (trials > 1) {
      double var = std::max(0.0, (sq - double(trials) * row.mean_deviation * row.mean_deviation) / double(trials - 1));
      row.se = std::sqrt(var / double(trials));
    }
    row.envelope = 5 / std::sqrt(kd);
    rows.push_back(row);
  }
  return rows;
}

void write_tail_csv(std::ostream& os, const std::vector<TailCheckResult>& rows) {
  os << "check,params,trials,violations,frequency,se,bound,pass,vacuous,mean_deviation\n";
  for (const auto& r : rows) {
    std::string p;
    for (const auto& [k, v] : r.params) p += (p.empty() ? "" : ";") + k + "=" + fmt(v);
    os << r.check << ',' << p << ',' << r.trials << ',' << r.violations << ',' << fmt(r.frequency) << ','
       << fmt(r.se) << ',' << fmt(r.bound) << ',' << (r.pass ? 1 : 0) << ',' << (r.vacuous ? 1 : 0) << ','
       << fmt(r.mean_deviation) << '\n';
  }
}

void write_sweep_csv(std::ostream& os, const std::vector<MatchSweepRow>& rows) {
  os << "k,trials,mean_deviation,se,envelope\n";
  for (const auto& r : rows)
    os << r.k << ',' << r.trials << ',' << fmt(r.mean_deviation) << ',' << fmt(r.se) << ',' << fmt(r.envelope) << '\n';
}

}  // namespace ridemarket
