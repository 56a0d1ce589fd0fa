#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ridemarket/fluid_solver.hpp"
#include "ridemarket/market_model.hpp"

namespace ridemarket {

using PriceVector = std::vector<double>;  // per route, at one node

// Per-route threshold x and relocation probability e (e sums to 1 over each origin's routes).
// A threshold below zero declines every offer, which is how C = 0 strategies refuse dispatches.
struct FluidStrategy {
  std::vector<double> x, e;
};

PriceVector prices_from_plan(const MarketInstance& inst, NodeId node, const FlowPlan& plan);
std::pair<PriceVector, SolveReport> ssp_prices(const MarketInstance& inst, const MarketState& state,
                                               const SolveOptions& opt = {});

FluidStrategy strategy_from_flows(const MarketInstance& inst, const std::vector<double>& supply,
                                  const std::vector<double>& f, const std::vector<double>& g);
FluidStrategy optimal_fluid_strategy(const MarketInstance& inst, const MarketState& state,
                                     const SolveOptions& opt = {});

struct StaticPlan {
  SolveReport solve;
  std::vector<PriceVector> prices;               // [node]
  std::vector<std::vector<double>> supply;       // anticipated S* [node]
  std::vector<std::vector<double>> f, g;         // anticipated flows [node][route]
};
StaticPlan static_plan(const MarketInstance& inst, const MarketState& initial, const SolveOptions& opt = {});

// What a mechanism shows the market at one node and state.
struct PricingContext {
  NodeId node = 0;
  PriceVector prices;
  std::vector<double> planned_dispatch;  // g* per route: pool sizing (and request cap when static)
  bool cap_requests = false;
  FluidStrategy reference;               // the mechanism's Sigma*
  std::shared_ptr<const SolveReport> solve;
  std::shared_ptr<const DualCertificate> duals;  // SSP only
};

class Mechanism {
 public:
  virtual ~Mechanism() = default;
  virtual std::shared_ptr<const PricingContext> context(const MarketState& state) const = 0;
  virtual bool resolves() const = 0;
  virtual std::string name() const = 0;
  const MarketInstance& instance() const { return *inst_; }

 protected:
  explicit Mechanism(std::shared_ptr<const MarketInstance> inst) : inst_(std::move(inst)) {}
  std::shared_ptr<const MarketInstance> inst_;
};

class SspMechanism final : public Mechanism {
 public:
  explicit SspMechanism(std::shared_ptr<const MarketInstance> inst, SolveOptions opt = {});
  std::shared_ptr<const PricingContext> context(const MarketState& state) const override;
  bool resolves() const override { return true; }
  std::string name() const override { return "ssp"; }

 private:
  SolveOptions opt_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<NodeId, std::vector<double>>, std::shared_ptr<const PricingContext>> cache_;
};

class StaticMechanism final : public Mechanism {
 public:
  StaticMechanism(std::shared_ptr<const MarketInstance> inst, const MarketState& initial, SolveOptions opt = {});
  std::shared_ptr<const PricingContext> context(const MarketState& state) const override;
  bool resolves() const override { return false; }
  std::string name() const override { return "static"; }
  const StaticPlan& plan() const { return plan_; }

 private:
  StaticPlan plan_;
  std::vector<std::shared_ptr<const PricingContext>> contexts_;
};

class StrategyProfile {
 public:
  using Fn = std::function<FluidStrategy(const MarketInstance&, const PricingContext&, const MarketState&)>;
  static StrategyProfile sigma_star();
  static StrategyProfile all_exit();
  static StrategyProfile custom(std::string name, Fn fn);

  FluidStrategy operator()(const MarketInstance& inst, const PricingContext& ctx, const MarketState& s) const {
    return fn_(inst, ctx, s);
  }
  const std::string& name() const { return name_; }
  bool is_sigma_star() const { return sigma_star_; }

 private:
  StrategyProfile(std::string name, Fn fn, bool star) : name_(std::move(name)), fn_(std::move(fn)), sigma_star_(star) {}
  std::string name_;
  Fn fn_;
  bool sigma_star_ = false;
};

// Sigma* with every driver at a location with an exit route declining and leaving.
FluidStrategy all_exit_strategy(const MarketInstance& inst, const FluidStrategy& base);

// One period of fluid dynamics at a state.
struct FluidStep {
  std::shared_ptr<const PricingContext> ctx;
  FluidStrategy strategy;
  std::vector<double> requests;  // per route
  std::vector<double> f, g;      // realized per route
};
FluidStep fluid_step(const MarketInstance& inst, const Mechanism& mech, const StrategyProfile& profile,
                     const MarketState& state, const std::optional<FluidStrategy>& override_strategy = std::nullopt);

struct QTable {
  std::vector<double> move;   // Q(l, d, 0) per route
  std::vector<double> price;  // per route
  std::vector<double> value;  // V per location
  double dispatch(RouteId r, double X) const { return price[r] - X + move[r]; }
};

// Q and V at `state` for drivers following `profile` (or `override_strategy` at this period only).
QTable q_and_value(const MarketInstance& inst, const Mechanism& mech, const StrategyProfile& profile,
                   const MarketState& state, const std::optional<FluidStrategy>& override_strategy = std::nullopt);

struct ICReport {
  bool pass = true;
  double worst = 0;  // largest violation beyond epsilon
  int condition = 0;  // 1 relocation, 2 accept, 3 decline
  RouteId route = kInvalid;
  QTable q;
  FluidStep step;
};

ICReport check_incentive_conditions(const MarketInstance& inst, const Mechanism& mech, const StrategyProfile& profile,
                                    const MarketState& state, double eps,
                                    const std::optional<FluidStrategy>& override_strategy = std::nullopt);

}  // namespace ridemarket
