#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ridemarket/concentration_lab.hpp"
#include "ridemarket/fluid_solver.hpp"
#include "ridemarket/two_level_sim.hpp"

namespace ridemarket {

const char* version_string();

struct UnknownExperiment : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ExperimentSpec {
  std::string name;
  std::vector<long> ks;  // empty: experiment default
  int episodes = 0;      // 0: experiment default
  std::uint64_t seed = 1;
  double tol = 1e-8;
  int max_iters = 50000;
  std::string out_dir = ".";
};

const std::vector<std::string>& experiment_names();
std::string config_hash(const std::string& canonical);
std::string spec_hash(const ExperimentSpec& spec);
// "# seed=...,version=...,config_hash=..."
std::string report_header(std::uint64_t seed, const std::string& hash);

struct ExampleNetworkResult {
  SolveReport solve;
  double f_star = 0, price_rain = 0, price_shine = 0, eta_root = 0, phi = 0;
  ICReport ic_sigma_star, ic_all_exit_static;
};
ExampleNetworkResult example_network_experiment(const SolveOptions& opt);

struct ResolveDemoResult {
  long k = 0;
  int rollouts = 0;
  Estimate stay, exit;          // static mechanism, tagged driver at A1
  double phi = 0;
  Estimate welfare_static, welfare_ssp, welfare_all_exit_static;
  double all_exit_loss = 0;     // 1 - W(all-exit, static) / phi
  long price_checks = 0, price_mismatches = 0;
  double worst_price_error = 0; // |P - (1 - 2 S2)| over SSP episodes
  bool all_exit_ic_static = false, all_exit_ic_ssp = false;
};
ResolveDemoResult resolve_demo_experiment(long k, int rollouts, std::uint64_t seed, const SolveOptions& opt);

struct RobustnessRow {
  long k = 0;
  double phi = 0;
  Estimate welfare;
  double gap = 0;  // |welfare - phi|
  AuditReport audit;
};
std::vector<RobustnessRow> robustness_sweep(std::shared_ptr<const MarketInstance> inst, const std::vector<long>& ks,
                                            int episodes, int audit_episodes, std::uint64_t seed,
                                            const SolveOptions& opt);

struct ConcentrationSuite {
  std::vector<TailCheckResult> negbin, dkw, swr;
  std::vector<MatchSweepRow> matching;
};
// suites: any of "negbin", "dkw", "matching", "swr"; empty runs all
ConcentrationSuite concentration_suite(long trials, std::uint64_t seed, const std::vector<std::string>& suites = {});

// Runs a named experiment, writes CSV reports to spec.out_dir. Returns 0 pass, 1 failed assertion.
int run_experiment(const ExperimentSpec& spec, std::ostream& log);

}  // namespace ridemarket
