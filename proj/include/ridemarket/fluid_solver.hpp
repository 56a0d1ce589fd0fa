#pragma once

#include <stdexcept>
#include <vector>

#include "ridemarket/market_model.hpp"

namespace ridemarket {

struct InfeasiblePlan : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NotOptimal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RewardValue {
  double utility = 0, marginal = 0, price = 0;
};
// U(g), dU/dg and the welfare-optimal price for a route with mean demand D and value law dist
RewardValue reward_eval(const ValueDistribution* dist, double D, double g);
inline RewardValue reward_eval(const DemandSpec& d, double g) { return reward_eval(d.value.get(), d.mean, g); }

struct PickupCost {
  double cost = 0, d_dispatch = 0, d_total = 0;
};
PickupCost pickup_cost_eval(double C, double g_sum, double f_sum);

struct ObjectiveEval {
  double value = 0;
  std::vector<double> grad_f, grad_g;  // same layout as FlowPlan
};
ObjectiveEval objective_and_gradient(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan);

FlowPlan linear_minimization_oracle(const MarketInstance& inst, const MarketState& state,
                                    const std::vector<double>& coef_f, const std::vector<double>& coef_g);

FlowPlan uniform_split_plan(const MarketInstance& inst, const MarketState& state);

struct SolveOptions {
  double tol = 1e-6;
  int max_iters = 50000;
};

struct SolveReport {
  FlowPlan plan;
  double value = 0;
  double gap = 0;
  int iterations = 0;
  bool converged = false;  // false means the iteration limit was hit
};

SolveReport solve_fluid(const MarketInstance& inst, const MarketState& state, const SolveOptions& opt = {});

struct DualCertificate {
  NodeId root = 0;
  std::size_t locations = 0, routes = 0;
  std::vector<double> eta;                // [node * L + l]
  std::vector<double> alpha, beta, gamma;  // [node * R + r]
  double Eta(NodeId n, LocationId l) const { return eta[n * locations + l]; }
};

// Supplies at or below this are treated as empty when extracting duals.
inline constexpr double kZeroSupply = 1e-9;

// duals without the optimality check
DualCertificate compute_duals(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan);
DualCertificate extract_duals(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan,
                              double tol = 1e-6);

// eta at the root by solving at S + h*1_l and reading the marginal there (cross-check for the empty case)
double eta_by_perturbation(const MarketInstance& inst, const MarketState& state, LocationId l, double h,
                           const SolveOptions& opt = {});

struct KktReport {
  std::vector<double> stationarity_f, stationarity_g;     // per arc, conditional units
  std::vector<double> slack_alpha, slack_beta, slack_gamma;  // f*alpha, g*beta, (f-g)*gamma
  double conservation = 0;  // max |sum_d f - S|
  double bounds = 0;        // max violation of 0 <= g <= f
  double max_stationarity = 0, max_slackness = 0;
  double max_residual() const;
};

KktReport kkt_residuals(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan,
                        const DualCertificate& duals);

}  // namespace ridemarket
