#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ridemarket/matching_engine.hpp"
#include "ridemarket/ssp_mechanism.hpp"

namespace ridemarket {

enum class MechanismKind { Ssp, Static };

struct SimConfig {
  std::shared_ptr<const MarketInstance> instance;
  long k = 100;
  MechanismKind mechanism = MechanismKind::Ssp;
  StrategyProfile profile = StrategyProfile::sigma_star();
  int horizon = 0;  // 0 runs to the end of the tree
  std::uint64_t seed = 1;
  int episodes = 200;
  std::optional<SamplingFamily> demand_family, entry_family;
  SolveOptions solve{1e-8, 50000};
};

// Expected initial supply: root entries.
MarketState initial_state(const MarketInstance& inst);
std::shared_ptr<Mechanism> make_mechanism(const SimConfig& cfg);

struct TraceRow {
  int period = 0;
  NodeId node = 0;
  LocationId location = 0;
  std::uint64_t driver = 0;
  LocationId origin = 0, dest = 0;
  bool dispatch = false;
  double price = 0, X = 0, reward = 0, welfare = 0, rider_value = 0;
};

struct PeriodRecord {
  int period = 0;
  NodeId node = 0;
  std::vector<long> entries;                   // per location
  std::vector<long> riders, requests;          // per route
  std::vector<double> prices;                  // per route
  std::vector<double> state;                   // normalized supply seen by the mechanism
  std::vector<long> dispatched, relocated;     // per route
  double rider_payments = 0, driver_receipts = 0;
};

struct EpisodeTrace {
  long k = 1;
  std::vector<PeriodRecord> periods;
  std::vector<TraceRow> rows;
  double welfare = 0;  // sum of W over rows, not normalized
};

// One tagged driver chosen uniformly among those at `location` in the first period.
struct TaggedAction {
  enum Kind { Follow, Flip, Relocate } kind = Follow;
  std::size_t slot = 0;  // destination slot for Relocate (declines any offer)
};
struct TagSpec {
  LocationId location = 0;
  TaggedAction action;
};
struct TagResult {
  bool present = false;
  double utility = 0;  // cumulative reward from period 1
  int offered = -1;    // slot offered in period 1
  bool dispatched = false;
  std::size_t slot = 0;  // slot taken in period 1
  double X = 0;
};

class Simulator {
 public:
  explicit Simulator(SimConfig cfg);
  const SimConfig& config() const { return cfg_; }
  const Mechanism& mechanism() const { return *mech_; }

  EpisodeTrace run_episode(int episode) const;
  // lighter path used by the Monte-Carlo estimators
  double episode_welfare(int episode, const std::vector<TagSpec>& tags, std::vector<TagResult>* tagged) const;

 private:
  double simulate(int episode, const std::vector<TagSpec>& tags, std::vector<TagResult>* tagged,
                  EpisodeTrace* trace) const;
  SimConfig cfg_;
  std::shared_ptr<Mechanism> mech_;
};

EpisodeTrace run_episode(const SimConfig& cfg, int episode = 0);
double normalized_welfare(const EpisodeTrace& trace);

struct Estimate {
  double mean = 0, se = 0;
  long n = 0;
};
Estimate mean_normalized_welfare(const SimConfig& cfg);
Estimate estimate_utility_to_go(const SimConfig& cfg, LocationId location, TaggedAction action, int rollouts);

struct AuditCell {
  LocationId location = 0;
  int offered = -1;  // -1: no offer
  int bucket = 0;
  std::string deviation;
  long n = 0;
  double mean_gap = 0, se = 0;
};
struct LocationAudit {
  LocationId location = 0;
  double eps_hat = 0, se = 0;
  double mean_drivers = 0;
  bool low_confidence = false;
};
struct AuditReport {
  std::vector<AuditCell> cells;
  std::vector<LocationAudit> locations;
  double eps_hat = 0, se = 0;       // max over audited locations
  double fraction_above = 0;        // tagged samples in cells whose best deviation gains more than the threshold
};
struct AuditOptions {
  int episodes = 200;
  int buckets = 4;
  long min_cell = 30;
  double threshold = 0.05;
  bool flip = true;
  bool relocations = true;
};
AuditReport audit_incentives(const SimConfig& cfg, const AuditOptions& opt);

void write_trace_csv(std::ostream& os, const MarketInstance& inst, const EpisodeTrace& trace);
void write_audit_csv(std::ostream& os, const MarketInstance& inst, const AuditReport& rep);

}  // namespace ridemarket
