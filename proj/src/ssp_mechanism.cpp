#include "ridemarket/ssp_mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ridemarket/matching_engine.hpp"

namespace ridemarket {

PriceVector prices_from_plan(const MarketInstance& inst, NodeId node, const FlowPlan& plan) {
  PriceVector p(inst.num_routes());
  for (RouteId r = 0; r < inst.num_routes(); ++r) p[r] = reward_eval(inst.demand[node][r], plan.G(node, r)).price;
  return p;
}

std::pair<PriceVector, SolveReport> ssp_prices(const MarketInstance& inst, const MarketState& state,
                                               const SolveOptions& opt) {
  auto rep = solve_fluid(inst, state, opt);
  auto p = prices_from_plan(inst, state.node, rep.plan);
  return {std::move(p), std::move(rep)};
}

FluidStrategy strategy_from_flows(const MarketInstance& inst, const std::vector<double>& supply,
                                  const std::vector<double>& f, const std::vector<double>& g) {
  FluidStrategy s{std::vector<double>(inst.num_routes(), inst.C), std::vector<double>(inst.num_routes(), 0.0)};
  for (LocationId l = 0; l < inst.num_locations(); ++l) {
    const auto& out = inst.outgoing(l);
    double F = 0, G = 0;
    for (RouteId r : out) {
      F += f[r];
      G += g[r];
    }
    bool empty = supply[l] <= kZeroSupply || F <= 0;
    double idle = F - G;
    bool all_dispatch = !empty && idle <= 1e-9 * F;
    double x = empty || all_dispatch ? inst.C : std::clamp(inst.C * G / F, 0.0, inst.C);
    bool uniform = empty || all_dispatch;
    for (RouteId r : out) {
      s.x[r] = x;
      s.e[r] = uniform ? 1.0 / static_cast<double>(out.size()) : std::max(f[r] - g[r], 0.0) / idle;
    }
  }
  return s;
}

namespace {

std::vector<double> row(const std::vector<double>& v, NodeId n, std::size_t R) {
  return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(n * R),
                             v.begin() + static_cast<std::ptrdiff_t>((n + 1) * R));
}

}  // namespace

FluidStrategy optimal_fluid_strategy(const MarketInstance& inst, const MarketState& state, const SolveOptions& opt) {
  auto rep = solve_fluid(inst, state, opt);
  const auto R = inst.num_routes();
  return strategy_from_flows(inst, state.supply, row(rep.plan.f, state.node, R), row(rep.plan.g, state.node, R));
}

StaticPlan static_plan(const MarketInstance& inst, const MarketState& initial, const SolveOptions& opt) {
  StaticPlan sp;
  sp.solve = solve_fluid(inst, initial, opt);
  const auto R = inst.num_routes();
  sp.supply = plan_supplies(inst, initial, sp.solve.plan);
  sp.prices.resize(inst.num_nodes());
  sp.f.resize(inst.num_nodes());
  sp.g.resize(inst.num_nodes());
  for (NodeId n : inst.tree.subtree(initial.node)) {
    sp.prices[n] = prices_from_plan(inst, n, sp.solve.plan);
    sp.f[n] = row(sp.solve.plan.f, n, R);
    sp.g[n] = row(sp.solve.plan.g, n, R);
  }
  return sp;
}

SspMechanism::SspMechanism(std::shared_ptr<const MarketInstance> inst, SolveOptions opt)
    : Mechanism(std::move(inst)), opt_(opt) {}

std::shared_ptr<const PricingContext> SspMechanism::context(const MarketState& state) const {
  auto key = std::make_pair(state.node, state.supply);
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  const auto& inst = *inst_;
  auto ctx = std::make_shared<PricingContext>();
  auto [prices, rep] = ssp_prices(inst, state, opt_);
  ctx->node = state.node;
  ctx->prices = std::move(prices);
  ctx->planned_dispatch = row(rep.plan.g, state.node, inst.num_routes());
  ctx->reference = strategy_from_flows(inst, state.supply, row(rep.plan.f, state.node, inst.num_routes()),
                                       ctx->planned_dispatch);
  ctx->duals = std::make_shared<DualCertificate>(compute_duals(inst, state, rep.plan));
  ctx->solve = std::make_shared<SolveReport>(std::move(rep));
  std::lock_guard<std::mutex> lock(mu_);
  if (cache_.size() > 50000) cache_.clear();
  cache_.emplace(std::move(key), ctx);
  return ctx;
}

StaticMechanism::StaticMechanism(std::shared_ptr<const MarketInstance> inst, const MarketState& initial,
                                 SolveOptions opt)
    : Mechanism(std::move(inst)), plan_(static_plan(*inst_, initial, opt)) {
  const auto& inst_ref = *inst_;
  auto solve = std::make_shared<SolveReport>(plan_.solve);
  contexts_.resize(inst_ref.num_nodes());
  for (NodeId n : inst_ref.tree.subtree(initial.node)) {
    auto ctx = std::make_shared<PricingContext>();
    ctx->node = n;
    ctx->prices = plan_.prices[n];
    ctx->planned_dispatch = plan_.g[n];
    ctx->cap_requests = true;
    ctx->reference = strategy_from_flows(inst_ref, plan_.supply[n], plan_.f[n], plan_.g[n]);
    ctx->solve = solve;
    contexts_[n] = ctx;
  }
}

std::shared_ptr<const PricingContext> StaticMechanism::context(const MarketState& state) const {
  if (state.node >= contexts_.size() || !contexts_[state.node])
    throw NotDescendant("static plan does not cover this node");
  return contexts_[state.node];
}

FluidStrategy all_exit_strategy(const MarketInstance& inst, const FluidStrategy& base) {
  FluidStrategy s = base;
  for (LocationId l = 0; l < inst.num_locations(); ++l) {
    RouteId exit = kInvalid;
    for (RouteId r : inst.outgoing(l))
      if (inst.locations[inst.routes[r].destination].sink) {
        exit = r;
        break;
      }
    if (exit == kInvalid) continue;
    for (RouteId r : inst.outgoing(l)) {
      s.x[r] = -1.0;
      s.e[r] = r == exit ? 1.0 : 0.0;
    }
  }
  return s;
}

StrategyProfile StrategyProfile::sigma_star() {
  return StrategyProfile(
      "sigma-star", [](const MarketInstance&, const PricingContext& ctx, const MarketState&) { return ctx.reference; },
      true);
}

StrategyProfile StrategyProfile::all_exit() {
  return StrategyProfile(
      "all-exit",
      [](const MarketInstance& inst, const PricingContext& ctx, const MarketState&) {
        return all_exit_strategy(inst, ctx.reference);
      },
      false);
}

StrategyProfile StrategyProfile::custom(std::string name, Fn fn) {
  return StrategyProfile(std::move(name), std::move(fn), false);
}

namespace {

FluidMatchInputs match_inputs(const MarketInstance& inst, LocationId l, double supply, const FluidStep& st) {
  FluidMatchInputs in;
  in.supply = supply;
  in.C = inst.C;
  for (RouteId r : inst.outgoing(l)) {
    in.requests.push_back(st.requests[r]);
    in.thresholds.push_back(st.strategy.x[r]);
    in.relocation.push_back(st.strategy.e[r]);
    in.planned_dispatch.push_back(st.ctx->planned_dispatch[r]);
  }
  return in;
}

double mean_disutility(double C, double x) { return C > 0 ? 0.5 * std::clamp(x, 0.0, C) : 0.0; }

}  // namespace

FluidStep fluid_step(const MarketInstance& inst, const Mechanism& mech, const StrategyProfile& profile,
                     const MarketState& state, const std::optional<FluidStrategy>& override_strategy) {
  FluidStep st;
  st.ctx = mech.context(state);
  st.strategy = override_strategy ? *override_strategy : profile(inst, *st.ctx, state);
  const auto R = inst.num_routes();
  st.requests.assign(R, 0.0);
  st.f.assign(R, 0.0);
  st.g.assign(R, 0.0);
  for (RouteId r = 0; r < R; ++r) {
    st.requests[r] = expected_requests(inst, r, state.node, st.ctx->prices[r]);
    if (st.ctx->cap_requests) st.requests[r] = std::min(st.requests[r], st.ctx->planned_dispatch[r]);
  }
  for (LocationId l = 0; l < inst.num_locations(); ++l) {
    if (state.supply[l] <= 0) continue;
    auto out = fluid_match(match_inputs(inst, l, state.supply[l], st));
    const auto& slots = inst.outgoing(l);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      st.g[slots[k]] = out.dispatched[k];
      st.f[slots[k]] = out.dispatched[k] + out.relocated[k];
    }
  }
  return st;
}

namespace {

class Evaluator {
 public:
  Evaluator(const MarketInstance& inst, const Mechanism& mech, const StrategyProfile& profile)
      : inst_(inst), mech_(mech), profile_(profile), eta_path_(mech.resolves() && profile.is_sigma_star()) {}

  QTable table(const MarketState& s, const std::optional<FluidStrategy>& ov, FluidStep* step_out = nullptr) {
    const auto R = inst_.num_routes(), L = inst_.num_locations();
    FluidStep st = fluid_step(inst_, mech_, profile_, s, ov);
    QTable q;
    q.price = st.ctx->prices;
    q.move.assign(R, 0.0);
    q.value.assign(L, 0.0);
    const auto& kids = inst_.tree.node(s.node).children;
    std::vector<std::vector<double>> cont(kids.size());
    for (std::size_t i = 0; i < kids.size(); ++i) {
      MarketState next{kids[i], transition_supply(inst_, kids[i], st.f)};
      if (eta_path_ && !ov) {
        // continuation is eta of the tree duals from this state's solve
        const auto& d = *st.ctx->duals;
        cont[i].resize(L);
        for (LocationId l = 0; l < L; ++l) cont[i][l] = d.Eta(kids[i], l);
      } else if (eta_path_) {
        const auto& d = *mech_.context(next)->duals;
        cont[i].resize(L);
        for (LocationId l = 0; l < L; ++l) cont[i][l] = d.Eta(kids[i], l);
      } else {
        cont[i] = value(next);
      }
    }
    for (RouteId r = 0; r < R; ++r) {
      q.move[r] = -inst_.routes[r].cost;
      for (std::size_t i = 0; i < kids.size(); ++i)
        q.move[r] += inst_.tree.node(kids[i]).p * cont[i][inst_.routes[r].destination];
    }
    for (LocationId l = 0; l < L; ++l) {
      const auto& out = inst_.outgoing(l);
      double S = s.supply[l];
      double v = 0;
      if (S > kZeroSupply) {
        for (RouteId r : out)
          v += (st.f[r] - st.g[r]) * q.move[r] + st.g[r] * (q.dispatch(r, mean_disutility(inst_.C, st.strategy.x[r])));
        v /= S;
      } else if (eta_path_ && !ov) {
        v = st.ctx->duals->Eta(s.node, l);
      } else {
        // one driver of vanishing mass: per-unit outcome of the matching in the small-supply limit
        const double h = 1e-9;
        auto m = fluid_match(match_inputs(inst_, l, h, st));
        for (std::size_t k = 0; k < out.size(); ++k) {
          RouteId r = out[k];
          v += (m.relocated[k] / h) * q.move[r] +
               (m.dispatched[k] / h) * q.dispatch(r, mean_disutility(inst_.C, st.strategy.x[r]));
        }
      }
      q.value[l] = v;
    }
    if (step_out) *step_out = std::move(st);
    return q;
  }

  std::vector<double> value(const MarketState& s) {
    auto key = std::make_pair(s.node, s.supply);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    auto v = table(s, std::nullopt).value;
    memo_.emplace(std::move(key), v);
    return v;
  }

 private:
  const MarketInstance& inst_;
  const Mechanism& mech_;
  const StrategyProfile& profile_;
  bool eta_path_;
  std::map<std::pair<NodeId, std::vector<double>>, std::vector<double>> memo_;
};

}  // namespace

QTable q_and_value(const MarketInstance& inst, const Mechanism& mech, const StrategyProfile& profile,
                   const MarketState& state, const std::optional<FluidStrategy>& override_strategy) {
  Evaluator ev(inst, mech, profile);
  return ev.table(state, override_strategy);
}

ICReport check_incentive_conditions(const MarketInstance& inst, const Mechanism& mech, const StrategyProfile& profile,
                                    const MarketState& state, double eps,
                                    const std::optional<FluidStrategy>& override_strategy) {
  constexpr double kFlow = 1e-6;
  ICReport rep;
  Evaluator ev(inst, mech, profile);
  rep.q = ev.table(state, override_strategy, &rep.step);
  const auto& q = rep.q;
  const auto& st = rep.step;
  auto note = [&](double gap, int cond, RouteId r) {
    if (gap > rep.worst) {
      rep.worst = gap;
      rep.condition = cond;
      rep.route = r;
    }
  };
  for (LocationId l = 0; l < inst.num_locations(); ++l) {
    if (state.supply[l] <= kZeroSupply) continue;
    const auto& out = inst.outgoing(l);
    double best = -std::numeric_limits<double>::infinity();
    for (RouteId r : out) best = std::max(best, q.move[r]);
    for (RouteId r : out) {
      double x = st.strategy.x[r];
      double X = inst.C > 0 ? std::clamp(x, 0.0, inst.C) : 0.0;
      if (st.f[r] - st.g[r] > kFlow) note(best - q.move[r], 1, r);
      if (st.g[r] > kFlow) note(best - q.dispatch(r, X), 2, r);
      if (st.requests[r] > kFlow && acceptance_probability(inst.C, x) < 1.0) note(q.dispatch(r, X) - best, 3, r);
    }
  }
  rep.pass = rep.worst <= eps;
  return rep;
}

}  // namespace ridemarket
