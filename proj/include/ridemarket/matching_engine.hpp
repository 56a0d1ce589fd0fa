#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ridemarket/market_model.hpp"
#include "ridemarket/rng.hpp"

namespace ridemarket {

struct SizeLimit : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// P(X <= x) for X ~ U(0, C). With C = 0 every x >= 0 accepts; x < 0 always declines.
double acceptance_probability(double C, double x);

double dispatch_pool_size(double C, double g, double x);

struct FluidSplit {
  double dispatched = 0, undispatched = 0;
};
FluidSplit fluid_single_destination(double R, double M, double x, double C);

// Destination slots follow MarketInstance::outgoing(l).
struct FluidMatchInputs {
  double supply = 0;
  std::vector<double> requests;          // R_bar per slot
  std::vector<double> thresholds;        // x per slot
  std::vector<double> relocation;        // e per slot
  std::vector<double> planned_dispatch;  // g* per slot, sizes the stage-one pools
  double C = 0;
};
struct FluidMatchOutcome {
  std::vector<double> dispatched, relocated;
};
FluidMatchOutcome fluid_match(const FluidMatchInputs& in);

// Largest-remainder apportionment of `total` by weights, ties to the lower index.
std::vector<long> largest_remainder(long total, const std::vector<double>& weights);

struct MatchDriver {
  std::uint64_t id = 0;
  std::vector<double> accept;  // per slot
  std::size_t relocate = 0;    // r_i
};

struct MatchInputs {
  std::vector<MatchDriver> drivers;
  std::vector<long> requests;         // R per slot
  std::vector<double> pool_weights;   // g* per slot; all zero skips stage one
};

struct DriverAssignment {
  std::uint64_t id = 0;
  std::size_t dest = 0;
  bool dispatch = false;
  int offered = -1;  // slot offered, if any
};

struct MatchOutcome {
  std::vector<long> dispatched, relocated;
  std::vector<DriverAssignment> assignments;  // same order as MatchInputs::drivers
};

struct SingleDestinationResult {
  long accepted = 0;
  std::vector<std::size_t> remaining;  // drivers never offered
  std::vector<std::size_t> offered_accept, offered_decline;
};

SingleDestinationResult sample_single_destination(KeyedStream& rng, long R, std::vector<std::size_t> roster,
                                                  std::size_t slot, const std::vector<MatchDriver>& drivers);

MatchOutcome sample_match(KeyedStream& rng, const MatchInputs& in);

using MatchCounts = std::pair<std::vector<long>, std::vector<long>>;  // (G, H)
std::map<MatchCounts, double> enumerate_match_distribution(const MatchInputs& in);

}  // namespace ridemarket
