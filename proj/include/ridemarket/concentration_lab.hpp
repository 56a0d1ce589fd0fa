#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ridemarket {

struct PreconditionViolated : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TailCheckResult {
  std::string check;
  std::vector<std::pair<std::string, double>> params;
  long trials = 0;
  long violations = 0;
  double frequency = 0, se = 0;  // binomial standard error of the frequency
  double bound = 0;
  bool pass = false;     // frequency <= bound + 3 se
  bool vacuous = false;  // bound >= 1
  double mean_deviation = 0;  // check-specific scale of the typical deviation
};

// Z = Bernoulli(p) trials needed for R successes; tail |Z - R/p| >= 24 sqrt(k).
TailCheckResult negbin_universal_check(long R, double p, long k, long trials, std::uint64_t seed = 1);
// tail |Z - R/p| > eps R/p; needs eps < 1/4 and eps R/p >= 2
TailCheckResult negbin_relative_check(long R, double p, double eps, long trials, std::uint64_t seed = 1);
// sup |F_n - F| > eps for n draws of Uniform(0, C)
TailCheckResult dkw_check(long n, double eps, long trials, std::uint64_t seed = 1, double C = 1.0);
// per-colour counts after `draws` draws without replacement; threshold sqrt(draws) log(draws)
TailCheckResult swr_check(const std::vector<long>& bag, long draws, long trials, std::uint64_t seed = 1);

// Single-location matching fixture in fluid units; every destination uses the same acceptance x/C.
struct MatchFixture {
  double supply = 1.0;
  std::vector<double> requests{0.3, 0.4};
  std::vector<double> planned{0.25, 0.25};
  std::vector<double> relocation{0.5, 0.5};
  double x = 0.5, C = 1.0;
};

struct MatchSweepRow {
  long k = 0;
  long trials = 0;
  double mean_deviation = 0, se = 0;  // (1/k) sum_d |G_d - k g_d| + |H_d - k h_d|
  double envelope = 0;                // 5 / sqrt(k)
};
std::vector<MatchSweepRow> matching_concentration_sweep(const MatchFixture& fx, const std::vector<long>& ks,
                                                        long trials, std::uint64_t seed = 1);

void write_tail_csv(std::ostream& os, const std::vector<TailCheckResult>& rows);
void write_sweep_csv(std::ostream& os, const std::vector<MatchSweepRow>& rows);

}  // namespace ridemarket
