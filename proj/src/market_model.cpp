#include "ridemarket/market_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace ridemarket {

UniformValue::UniformValue(double vmax) : vmax_(vmax) {
  if (!(vmax >= 0.0) || !std::isfinite(vmax)) throw DomainError("uniform upper bound must be finite and >= 0");
}

double UniformValue::cdf(double v) const {
  if (vmax_ <= 0.0) return v >= 0.0 ? 1.0 : 0.0;
  return std::clamp(v / vmax_, 0.0, 1.0);
}

double UniformValue::quantile(double u) const { return std::clamp(u, 0.0, 1.0) * vmax_; }

double UniformValue::mean_above(double p) const {
  double lo = std::clamp(p, 0.0, vmax_);
  return 0.5 * (lo + vmax_);
}

const char* family_name(SamplingFamily f) {
  switch (f) {
    case SamplingFamily::Binomial: return "binomial";
    case SamplingFamily::Poisson: return "poisson";
    case SamplingFamily::Deterministic: return "deterministic";
  }
  return "binomial";
}

std::optional<SamplingFamily> parse_family(const std::string& s) {
  if (s == "binomial") return SamplingFamily::Binomial;
  if (s == "poisson") return SamplingFamily::Poisson;
  if (s == "deterministic") return SamplingFamily::Deterministic;
  return std::nullopt;
}

ScenarioTree::ScenarioTree(std::vector<ScenarioNode> nodes) : nodes_(std::move(nodes)) {
  for (auto& n : nodes_) n.children.clear();
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    NodeId p = nodes_[i].parent;
    if (p == kInvalid) {
      if (root_ == kInvalid) root_ = i;
    } else if (p < nodes_.size()) {
      nodes_[p].children.push_back(i);
    }
    horizon_ = std::max(horizon_, nodes_[i].t);
  }
}

NodeId ScenarioTree::find(const std::string& id) const {
  for (NodeId i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return kInvalid;
}

bool ScenarioTree::is_descendant(NodeId ancestor, NodeId n) const {
  std::size_t guard = 0;
  while (n != kInvalid && n < nodes_.size() && guard++ <= nodes_.size()) {
    if (n == ancestor) return true;
    n = nodes_[n].parent;
  }
  return false;
}

std::vector<NodeId> ScenarioTree::subtree(NodeId r) const {
  std::vector<NodeId> out{r};
  for (std::size_t i = 0; i < out.size(); ++i)
    for (NodeId c : nodes_.at(out[i]).children) out.push_back(c);
  return out;
}

RouteId MarketInstance::route_between(LocationId o, LocationId d) const {
  for (RouteId r = 0; r < routes.size(); ++r)
    if (routes[r].origin == o && routes[r].destination == d) return r;
  return kInvalid;
}

LocationId MarketInstance::find_location(const std::string& name) const {
  for (LocationId l = 0; l < locations.size(); ++l)
    if (locations[l].name == name) return l;
  return kInvalid;
}

void MarketInstance::finalize() {
  outgoing_.assign(locations.size(), {});
  for (RouteId r = 0; r < routes.size(); ++r)
    if (routes[r].origin < locations.size()) outgoing_[routes[r].origin].push_back(r);
  for (auto& v : outgoing_)
    std::stable_sort(v.begin(), v.end(),
                     [&](RouteId a, RouteId b) { return routes[a].destination < routes[b].destination; });
  demand.resize(tree.size());
  for (auto& row : demand) row.resize(routes.size());
  entries.resize(tree.size());
  for (auto& row : entries) row.resize(locations.size(), 0.0);
}

ValidationReport validate_instance(const MarketInstance& inst) {
  ValidationReport rep;
  auto bad = [&](std::string s) { rep.violations.push_back(std::move(s)); };
  const auto L = inst.num_locations();
  const auto& tree = inst.tree;

  if (L == 0) bad("no locations");
  if (!(inst.C >= 0.0) || !std::isfinite(inst.C)) bad("C must be finite and >= 0");

  std::set<std::string> names;
  for (const auto& l : inst.locations)
    if (!names.insert(l.name).second) bad("duplicate location '" + l.name + "'");

  std::set<std::pair<LocationId, LocationId>> seen;
  for (RouteId r = 0; r < inst.num_routes(); ++r) {
    const auto& rt = inst.routes[r];
    if (rt.origin >= L || rt.destination >= L) {
      bad("route " + std::to_string(r) + " references an unknown location");
      continue;
    }
    if (!std::isfinite(rt.cost)) bad("route " + std::to_string(r) + " has a non-finite cost");
    if (!seen.insert({rt.origin, rt.destination}).second)
      bad("duplicate route " + inst.locations[rt.origin].name + "->" + inst.locations[rt.destination].name);
  }
  for (LocationId l = 0; l < L; ++l) {
    bool has = false;
    for (const auto& rt : inst.routes) has = has || rt.origin == l;
    if (!has) bad("location '" + inst.locations[l].name + "' has no outgoing route");
  }

  if (tree.size() == 0) {
    bad("scenario tree is empty");
    return rep;
  }
  std::size_t roots = 0;
  std::set<std::string> ids;
  for (NodeId n = 0; n < tree.size(); ++n) {
    const auto& nd = tree.node(n);
    if (!ids.insert(nd.id).second) bad("duplicate node id '" + nd.id + "'");
    if (nd.parent == kInvalid) {
      ++roots;
      continue;
    }
    if (nd.parent >= tree.size()) {
      bad("node '" + nd.id + "' references an unknown parent");
      continue;
    }
    if (tree.node(nd.parent).t + 1 != nd.t) bad("node '" + nd.id + "' is not one period after its parent");
    if (!(nd.p > 0.0 && nd.p <= 1.0)) bad("node '" + nd.id + "' has probability outside (0,1]");
    if (!tree.is_descendant(tree.root(), n)) bad("node '" + nd.id + "' is not reachable from the root");
  }
  if (roots != 1) bad("scenario tree must have exactly one root, found " + std::to_string(roots));
  for (NodeId n = 0; n < tree.size(); ++n) {
    const auto& nd = tree.node(n);
    if (nd.children.empty()) {
      if (nd.t != tree.horizon()) bad("leaf '" + nd.id + "' ends before the horizon");
      continue;
    }
    double s = 0.0;
    for (NodeId c : nd.children) s += tree.node(c).p;
    if (std::abs(s - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "children of node '" << nd.id << "' have probabilities summing to " << s;
      bad(os.str());
    }
  }

  for (NodeId n = 0; n < inst.demand.size() && n < tree.size(); ++n)
    for (RouteId r = 0; r < inst.demand[n].size() && r < inst.num_routes(); ++r) {
      const auto& d = inst.demand[n][r];
      if (!(d.mean >= 0.0) || !std::isfinite(d.mean))
        bad("demand on route " + std::to_string(r) + " at node '" + tree.node(n).id + "' is negative");
      if (d.mean > 0.0 && !d.value)
        bad("demand on route " + std::to_string(r) + " at node '" + tree.node(n).id + "' has no value distribution");
      const auto o = inst.routes[r].origin;
      if (d.mean > 0.0 && o < L && inst.locations[o].sink)
        bad("sink '" + inst.locations[o].name + "' has outgoing demand at node '" + tree.node(n).id + "'");
    }
  for (NodeId n = 0; n < inst.entries.size() && n < tree.size(); ++n)
    for (LocationId l = 0; l < inst.entries[n].size() && l < L; ++l)
      if (!(inst.entries[n][l] >= 0.0) || !std::isfinite(inst.entries[n][l]))
        bad("entries at '" + inst.locations[l].name + "' node '" + tree.node(n).id + "' are negative");
  return rep;
}

void require_valid(const MarketInstance& inst) {
  auto rep = validate_instance(inst);
  if (!rep.ok()) throw InvalidInstance("invalid instance: " + rep.violations.front());
}

double node_probability(const ScenarioTree& tree, NodeId from, NodeId to) {
  if (!tree.is_descendant(from, to)) throw NotDescendant("node is not a descendant");
  double p = 1.0;
  while (to != from) {
    p *= tree.node(to).p;
    to = tree.node(to).parent;
  }
  return p;
}

std::vector<double> transition_supply(const MarketInstance& inst, NodeId child,
                                      const std::vector<double>& parent_flows) {
  std::vector<double> s = inst.entries.at(child);
  for (RouteId r = 0; r < inst.num_routes(); ++r) s[inst.routes[r].destination] += parent_flows.at(r);
  return s;
}

double expected_requests(const MarketInstance& inst, RouteId route, NodeId node, double price) {
  const auto& d = inst.demand.at(node).at(route);
  if (d.mean <= 0.0 || !d.value) return 0.0;
  return d.mean * (1.0 - d.value->cdf(price));
}

std::vector<std::vector<double>> plan_supplies(const MarketInstance& inst, const MarketState& state,
                                               const FlowPlan& plan) {
  std::vector<std::vector<double>> S(inst.num_nodes());
  const auto R = inst.num_routes();
  for (NodeId n : inst.tree.subtree(state.node)) {
    if (n == state.node) {
      S[n] = state.supply;
      continue;
    }
    NodeId p = inst.tree.node(n).parent;
    std::vector<double> flows(plan.f.begin() + p * R, plan.f.begin() + (p + 1) * R);
    S[n] = transition_supply(inst, n, flows);
  }
  return S;
}

}  // namespace ridemarket
