#include "ridemarket/fluid_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ridemarket {

RewardValue reward_eval(const ValueDistribution* dist, double D, double g) {
  double vmax = dist ? dist->upper() : 0.0;
  if (D <= 0.0 || !dist) return {0.0, 0.0, vmax};
  if (g < 0.0) return {vmax * g, vmax, vmax};
  if (g >= D) return {D * dist->mean_above(0.0), 0.0, 0.0};
  double p = dist->quantile(1.0 - g / D);
  return {g * dist->mean_above(p), p, p};
}

PickupCost pickup_cost_eval(double C, double g, double f) {
  if (g > f + 1e-12) throw DomainError("dispatch volume exceeds total volume");
  if (f <= 0.0 || g <= 0.0) return {};
  double r = g / f;
  return {0.5 * C * g * r, C * r, -0.5 * C * r * r};
}

namespace {

struct Tree {
  std::vector<NodeId> order;  // parents first
  std::vector<double> prob;   // P(node | root), 0 outside
};

Tree tree_of(const MarketInstance& inst, NodeId root) {
  Tree t;
  t.order = inst.tree.subtree(root);
  t.prob.assign(inst.num_nodes(), 0.0);
  t.prob[root] = 1.0;
  for (NodeId n : t.order)
    if (n != root) t.prob[n] = t.prob[inst.tree.node(n).parent] * inst.tree.node(n).p;
  return t;
}

// W and optionally its gradient; tolerant of rounding-level infeasibility
double evaluate(const MarketInstance& inst, const Tree& tr, const double* f, const double* g,
                std::vector<double>* gf, std::vector<double>* gg) {
  const auto R = inst.num_routes();
  double W = 0.0;
  for (NodeId n : tr.order) {
    const double pi = tr.prob[n];
    double node_w = 0.0;
    for (LocationId l = 0; l < inst.num_locations(); ++l) {
      double F = 0, G = 0;
      for (RouteId r : inst.outgoing(l)) {
        F += f[n * R + r];
        G += std::max(g[n * R + r], 0.0);
      }
      double rho = F > 0 ? std::min(G / F, 1.0) : 0.0;
      for (RouteId r : inst.outgoing(l)) {
        auto rv = reward_eval(inst.demand[n][r], g[n * R + r]);
        node_w += rv.utility - inst.routes[r].cost * f[n * R + r];
        if (gf) {
          (*gf)[n * R + r] = pi * (-inst.routes[r].cost + 0.5 * inst.C * rho * rho);
          (*gg)[n * R + r] = pi * (rv.marginal - inst.C * rho);
        }
      }
      if (F > 0 && G > 0) node_w -= 0.5 * inst.C * G * rho;
    }
    W += pi * node_w;
  }
  return W;
}

void check_plan(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan) {
  if (plan.routes != inst.num_routes() || plan.f.size() != inst.num_nodes() * inst.num_routes() ||
      plan.g.size() != plan.f.size())
    throw InfeasiblePlan("plan dimensions do not match the instance");
  if (state.supply.size() != inst.num_locations()) throw InfeasiblePlan("state dimension mismatch");
  for (std::size_t i = 0; i < plan.f.size(); ++i) {
    if (!std::isfinite(plan.f[i]) || !std::isfinite(plan.g[i])) throw InfeasiblePlan("non-finite flow");
    if (plan.g[i] < -1e-9 || plan.g[i] > plan.f[i] + 1e-9) throw InfeasiblePlan("flow violates 0 <= g <= f");
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c,
           const std::vector<double>& d) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i] + c[i] * d[i];
  return s;
}

}  // namespace

ObjectiveEval objective_and_gradient(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan) {
  check_plan(inst, state, plan);
  auto tr = tree_of(inst, state.node);
  ObjectiveEval ev;
  ev.grad_f.assign(plan.f.size(), 0.0);
  ev.grad_g.assign(plan.g.size(), 0.0);
  ev.value = evaluate(inst, tr, plan.f.data(), plan.g.data(), &ev.grad_f, &ev.grad_g);
  return ev;
}

FlowPlan linear_minimization_oracle(const MarketInstance& inst, const MarketState& state,
                                    const std::vector<double>& cf, const std::vector<double>& cg) {
  const auto L = inst.num_locations(), R = inst.num_routes();
  const auto order = inst.tree.subtree(state.node);
  std::vector<double> J(inst.num_nodes() * L, 0.0);
  std::vector<RouteId> choice(inst.num_nodes() * L, kInvalid);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeId n = *it;
    const auto& kids = inst.tree.node(n).children;
    for (LocationId l = 0; l < L; ++l) {
      double best = -std::numeric_limits<double>::infinity();
      for (RouteId r : inst.outgoing(l)) {
        double v = cf[n * R + r] + std::max(cg[n * R + r], 0.0);
        for (NodeId c : kids) v += J[c * L + inst.routes[r].destination];
        if (v > best) {
          best = v;
          choice[n * L + l] = r;
        }
      }
      J[n * L + l] = best;
    }
  }
  FlowPlan v(state.node, inst.num_nodes(), R);
  std::vector<std::vector<double>> S(inst.num_nodes());
  for (NodeId n : order) {
    if (n == state.node) {
      S[n] = state.supply;
    } else {
      NodeId p = inst.tree.node(n).parent;
      S[n] = transition_supply(inst, n, std::vector<double>(v.f.begin() + p * R, v.f.begin() + (p + 1) * R));
    }
    for (LocationId l = 0; l < L; ++l) {
      RouteId r = choice[n * L + l];
      if (r == kInvalid || S[n][l] == 0.0) continue;
      v.F(n, r) = S[n][l];
      if (cg[n * R + r] >= 0.0) v.G(n, r) = S[n][l];
    }
  }
  return v;
}

FlowPlan uniform_split_plan(const MarketInstance& inst, const MarketState& state) {
  const auto L = inst.num_locations(), R = inst.num_routes();
  FlowPlan x(state.node, inst.num_nodes(), R);
  for (NodeId n : inst.tree.subtree(state.node)) {
    std::vector<double> S;
    if (n == state.node) {
      S = state.supply;
    } else {
      NodeId p = inst.tree.node(n).parent;
      S = transition_supply(inst, n, std::vector<double>(x.f.begin() + p * R, x.f.begin() + (p + 1) * R));
    }
    for (LocationId l = 0; l < L; ++l) {
      const auto& out = inst.outgoing(l);
      for (RouteId r : out) {
        x.F(n, r) = S[l] / static_cast<double>(out.size());
        x.G(n, r) = 0.5 * x.F(n, r);
      }
    }
  }
  return x;
}

SolveReport solve_fluid(const MarketInstance& inst, const MarketState& state, const SolveOptions& opt) {
  if (!(opt.tol > 0)) throw DomainError("tol must be positive");
  require_valid(inst);
  if (state.supply.size() != inst.num_locations()) throw DomainError("state dimension mismatch");
  for (double s : state.supply)
    if (!(s >= 0) || !std::isfinite(s)) throw DomainError("supply must be finite and >= 0");

  const auto tr = tree_of(inst, state.node);
  const std::size_t n = inst.num_nodes() * inst.num_routes();

  struct Atom {
    std::vector<double> f, g;
    double w;
  };
  FlowPlan x = uniform_split_plan(inst, state);
  std::vector<Atom> atoms{{x.f, x.g, 1.0}};
  std::vector<double> gf(n), gg(n), tf(n), tg(n), df(n), dg(n), sf(n), sg(n);

  SolveReport rep;
  double W = 0;
  for (int it = 0;; ++it) {
    W = evaluate(inst, tr, x.f.data(), x.g.data(), &gf, &gg);
    FlowPlan v = linear_minimization_oracle(inst, state, gf, gg);
    double gx = dot(gf, x.f, gg, x.g);
    rep.gap = dot(gf, v.f, gg, v.g) - gx;
    rep.iterations = it;
    if (rep.gap <= opt.tol * std::max(1.0, std::abs(W))) {
      rep.converged = true;
      break;
    }
    if (it >= opt.max_iters) break;

    std::size_t iv = atoms.size();
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (atoms[i].f == v.f && atoms[i].g == v.g) iv = i;
    if (iv == atoms.size()) atoms.push_back({v.f, v.g, 0.0});
    std::size_t ia = iv;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (atoms[i].w <= 0) continue;
      double s = dot(gf, atoms[i].f, gg, atoms[i].g);
      if (s < worst) {
        worst = s;
        ia = i;
      }
    }
    double gmax;
    if (ia == iv) {  // plain FW step towards v
      for (std::size_t i = 0; i < n; ++i) {
        df[i] = v.f[i] - x.f[i];
        dg[i] = v.g[i] - x.g[i];
      }
      gmax = 1.0;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        df[i] = atoms[iv].f[i] - atoms[ia].f[i];
        dg[i] = atoms[iv].g[i] - atoms[ia].g[i];
      }
      gmax = atoms[ia].w;
    }

    // phi is concave along the segment; bisect on the sign of its slope
    auto slope = [&](double s) {
      for (std::size_t i = 0; i < n; ++i) {
        tf[i] = x.f[i] + s * df[i];
        tg[i] = x.g[i] + s * dg[i];
      }
      evaluate(inst, tr, tf.data(), tg.data(), &sf, &sg);
      return dot(sf, df, sg, dg);
    };
    double step = gmax;
    if (slope(gmax) < 0.0) {
      double a = 0, b = gmax;
      for (int k = 0; k < 64 && b - a > 1e-17 * gmax; ++k) {
        double mid = 0.5 * (a + b);
        (slope(mid) > 0.0 ? a : b) = mid;
      }
      step = 0.5 * (a + b);
    }

    for (std::size_t i = 0; i < n; ++i) {
      x.f[i] += step * df[i];
      x.g[i] += step * dg[i];
    }
    if (ia == iv) {
      for (auto& at : atoms) at.w *= (1.0 - step);
      atoms[iv].w += step;
    } else {
      atoms[iv].w += step;
      atoms[ia].w -= step;
      if (step == gmax) atoms[ia].w = 0.0;
    }
    atoms.erase(std::remove_if(atoms.begin(), atoms.end(), [](const Atom& at) { return at.w <= 1e-15; }),
                atoms.end());
    if (it % 64 == 63) {  // refresh x from the active set to stop drift
      double tot = 0;
      for (auto& at : atoms) tot += at.w;
      std::fill(x.f.begin(), x.f.end(), 0.0);
      std::fill(x.g.begin(), x.g.end(), 0.0);
      for (auto& at : atoms) {
        at.w /= tot;
        for (std::size_t i = 0; i < n; ++i) {
          x.f[i] += at.w * at.f[i];
          x.g[i] += at.w * at.g[i];
        }
      }
    }
  }

  // g beyond D_bar earns nothing; clipping keeps W and removes the C = 0 ambiguity
  for (NodeId nd : tr.order)
    for (RouteId r = 0; r < inst.num_routes(); ++r) {
      double& f = x.F(nd, r);
      double& g = x.G(nd, r);
      f = std::max(f, 0.0);
      g = std::clamp(g, 0.0, f);
      g = std::min(g, inst.demand[nd][r].mean);
    }
  rep.plan = x;
  rep.value = evaluate(inst, tr, x.f.data(), x.g.data(), nullptr, nullptr);
  return rep;
}

namespace {

struct Marginals {
  std::vector<double> mf, mg;  // conditional (unweighted) marginal values per arc
};

// Fill eta bottom-up and return per-arc marginals consistent with it.
Marginals compute_eta(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan,
                      const std::vector<std::vector<double>>& S, std::vector<double>& eta) {
  const auto L = inst.num_locations(), R = inst.num_routes();
  const double C = inst.C;
  Marginals m{std::vector<double>(plan.f.size(), 0.0), std::vector<double>(plan.f.size(), 0.0)};
  eta.assign(inst.num_nodes() * L, 0.0);
  const auto order = inst.tree.subtree(state.node);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeId n = *it;
    const auto& kids = inst.tree.node(n).children;
    for (LocationId l = 0; l < L; ++l) {
      double F = 0, G = 0;
      for (RouteId r : inst.outgoing(l)) {
        F += plan.F(n, r);
        G += plan.G(n, r);
      }
      double rho = F > 0 ? G / F : 0.0;
      double weighted = 0;
      double best_move = -std::numeric_limits<double>::infinity(), best_serve = best_move;
      for (RouteId r : inst.outgoing(l)) {
        double cont = 0;
        for (NodeId c : kids) cont += inst.tree.node(c).p * eta[c * L + inst.routes[r].destination];
        double base = -inst.routes[r].cost + cont;
        auto rv = reward_eval(inst.demand[n][r], plan.G(n, r));
        m.mf[n * R + r] = base + 0.5 * C * rho * rho;
        m.mg[n * R + r] = rv.marginal - C * rho;
        weighted += plan.F(n, r) * m.mf[n * R + r] + plan.G(n, r) * m.mg[n * R + r];
        best_move = std::max(best_move, base);
        best_serve = std::max(best_serve, base + reward_eval(inst.demand[n][r], 0.0).marginal);
      }
      double& e = eta[n * L + l];
      if (S[n][l] > kZeroSupply) {
        e = weighted / S[n][l];
      } else {
        // right derivative: one infinitesimal driver picks its best trip and dispatch share
        double gain = best_serve - best_move;
        double share = C > 0 ? std::clamp(gain / C, 0.0, 1.0) : (gain > 0 ? 1.0 : 0.0);
        e = best_move + share * gain - 0.5 * C * share * share;
      }
    }
  }
  return m;
}

}  // namespace

DualCertificate compute_duals(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan) {
  check_plan(inst, state, plan);
  const auto L = inst.num_locations(), R = inst.num_routes();
  auto S = plan_supplies(inst, state, plan);
  DualCertificate d;
  d.root = state.node;
  d.locations = L;
  d.routes = R;
  auto m = compute_eta(inst, state, plan, S, d.eta);
  d.alpha.assign(plan.f.size(), 0.0);
  d.beta.assign(plan.f.size(), 0.0);
  d.gamma.assign(plan.f.size(), 0.0);
  for (NodeId n : inst.tree.subtree(state.node))
    for (RouteId r = 0; r < R; ++r) {
      std::size_t i = n * R + r;
      double sg = m.mg[i];
      double sf = m.mf[i] - d.eta[n * L + inst.routes[r].origin];
      d.gamma[i] = std::max(sg, 0.0);
      d.beta[i] = std::max(-sg, 0.0);
      d.alpha[i] = std::max(-sf - d.gamma[i], 0.0);
    }
  return d;
}

DualCertificate extract_duals(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan,
                              double tol) {
  auto d = compute_duals(inst, state, plan);
  auto kkt = kkt_residuals(inst, state, plan, d);
  double scale = 1.0;
  for (double e : d.eta) scale = std::max(scale, std::abs(e));
  if (std::max(kkt.max_stationarity, kkt.max_slackness) > 100.0 * tol * scale)
    throw NotOptimal("stationarity residual " + std::to_string(std::max(kkt.max_stationarity, kkt.max_slackness)) +
                     " exceeds tolerance");
  return d;
}

double eta_by_perturbation(const MarketInstance& inst, const MarketState& state, LocationId l, double h,
                           const SolveOptions& opt) {
  MarketState s = state;
  s.supply.at(l) += h;
  auto rep = solve_fluid(inst, s, opt);
  auto S = plan_supplies(inst, s, rep.plan);
  std::vector<double> eta;
  compute_eta(inst, s, rep.plan, S, eta);
  return eta[s.node * inst.num_locations() + l];
}

double KktReport::max_residual() const {
  return std::max({max_stationarity, max_slackness, conservation, bounds});
}

KktReport kkt_residuals(const MarketInstance& inst, const MarketState& state, const FlowPlan& plan,
                        const DualCertificate& duals) {
  const auto L = inst.num_locations(), R = inst.num_routes();
  const double C = inst.C;
  KktReport k;
  const auto size = inst.num_nodes() * R;
  k.stationarity_f.assign(size, 0.0);
  k.stationarity_g.assign(size, 0.0);
  k.slack_alpha.assign(size, 0.0);
  k.slack_beta.assign(size, 0.0);
  k.slack_gamma.assign(size, 0.0);
  auto S = plan_supplies(inst, state, plan);
  for (NodeId n : inst.tree.subtree(state.node)) {
    const auto& kids = inst.tree.node(n).children;
    for (LocationId l = 0; l < L; ++l) {
      double F = 0, G = 0;
      for (RouteId r : inst.outgoing(l)) {
        F += plan.F(n, r);
        G += plan.G(n, r);
      }
      k.conservation = std::max(k.conservation, std::abs(F - S[n][l]));
      double rho = F > 0 ? G / F : 0.0;
      for (RouteId r : inst.outgoing(l)) {
        std::size_t i = n * R + r;
        double f = plan.f[i], g = plan.g[i];
        k.bounds = std::max({k.bounds, -g, g - f, -f});
        k.slack_alpha[i] = std::abs(f * duals.alpha[i]);
        k.slack_beta[i] = std::abs(g * duals.beta[i]);
        k.slack_gamma[i] = std::abs((f - g) * duals.gamma[i]);
        k.max_slackness = std::max({k.max_slackness, k.slack_alpha[i], k.slack_beta[i], k.slack_gamma[i]});
        if (S[n][l] <= kZeroSupply) continue;
        double cont = 0;
        for (NodeId c : kids) cont += inst.tree.node(c).p * duals.eta[c * L + inst.routes[r].destination];
        double sf = -inst.routes[r].cost + 0.5 * C * rho * rho + cont - duals.eta[n * L + l];
        double sg = reward_eval(inst.demand[n][r], g).marginal - C * rho;
        k.stationarity_f[i] = std::abs(sf + duals.alpha[i] + duals.gamma[i]);
        k.stationarity_g[i] = std::abs(sg - duals.gamma[i] + duals.beta[i]);
        k.max_stationarity = std::max({k.max_stationarity, k.stationarity_f[i], k.stationarity_g[i]});
      }
    }
  }
  return k;
}

}  // namespace ridemarket
