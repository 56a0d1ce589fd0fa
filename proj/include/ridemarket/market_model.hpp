#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ridemarket {

using LocationId = std::size_t;
using NodeId = std::size_t;
using RouteId = std::size_t;

inline constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct NotDescendant : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidInstance : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Rider value distribution F. Only Uniform(0, vmax) ships, but callers go through this.
class ValueDistribution {
 public:
  virtual ~ValueDistribution() = default;
  virtual double cdf(double v) const = 0;
  virtual double quantile(double u) const = 0;
  // E[V | V >= p]
  virtual double mean_above(double p) const = 0;
  virtual double upper() const = 0;
  virtual double sample(double u01) const { return quantile(u01); }
};

class UniformValue final : public ValueDistribution {
 public:
  explicit UniformValue(double vmax);
  double cdf(double v) const override;
  double quantile(double u) const override;
  double mean_above(double p) const override;
  double upper() const override { return vmax_; }

 private:
  double vmax_;
};

enum class SamplingFamily { Binomial, Poisson, Deterministic };

const char* family_name(SamplingFamily f);
std::optional<SamplingFamily> parse_family(const std::string& s);

struct ScenarioNode {
  std::string id;
  int t = 1;
  NodeId parent = kInvalid;  // kInvalid for the root
  double p = 1.0;            // probability conditional on parent
  std::vector<NodeId> children;
};

class ScenarioTree {
 public:
  ScenarioTree() = default;
  // parent indices may be kInvalid for roots; children lists are rebuilt here
  explicit ScenarioTree(std::vector<ScenarioNode> nodes);

  std::size_t size() const { return nodes_.size(); }
  const ScenarioNode& node(NodeId n) const { return nodes_.at(n); }
  const std::vector<ScenarioNode>& nodes() const { return nodes_; }
  NodeId root() const { return root_; }
  int horizon() const { return horizon_; }
  NodeId find(const std::string& id) const;

  bool is_descendant(NodeId ancestor, NodeId n) const;
  // nodes of the subtree at r, parents before children
  std::vector<NodeId> subtree(NodeId r) const;

 private:
  std::vector<ScenarioNode> nodes_;
  NodeId root_ = kInvalid;
  int horizon_ = 0;
};

struct Location {
  std::string name;
  bool sink = false;
};

struct Route {
  LocationId origin = kInvalid;
  LocationId destination = kInvalid;
  double cost = 0.0;
};

struct DemandSpec {
  double mean = 0.0;  // D_bar
  std::shared_ptr<const ValueDistribution> value;
  double vmax() const { return value ? value->upper() : 0.0; }
};

struct MarketInstance {
  std::vector<Location> locations;
  ScenarioTree tree;
  std::vector<Route> routes;
  std::vector<std::vector<DemandSpec>> demand;  // [node][route]
  std::vector<std::vector<double>> entries;     // [node][location]
  double C = 0.0;
  SamplingFamily demand_family = SamplingFamily::Binomial;
  SamplingFamily entry_family = SamplingFamily::Binomial;

  std::size_t num_locations() const { return locations.size(); }
  std::size_t num_routes() const { return routes.size(); }
  std::size_t num_nodes() const { return tree.size(); }

  // Outgoing routes of l sorted by destination index. Call finalize() after edits.
  const std::vector<RouteId>& outgoing(LocationId l) const { return outgoing_.at(l); }
  RouteId route_between(LocationId o, LocationId d) const;
  LocationId find_location(const std::string& name) const;
  void finalize();

 private:
  std::vector<std::vector<RouteId>> outgoing_;
};

struct MarketState {
  NodeId node = 0;
  std::vector<double> supply;  // per location, normalized by k
};

// Fluid flows over every tree node; entries outside the subtree of root are zero.
struct FlowPlan {
  NodeId root = 0;
  std::size_t routes = 0;
  std::vector<double> f, g;  // [node * routes + route]

  FlowPlan() = default;
  FlowPlan(NodeId r, std::size_t nodes, std::size_t nroutes)
      : root(r), routes(nroutes), f(nodes * nroutes, 0.0), g(nodes * nroutes, 0.0) {}
  double& F(NodeId n, RouteId r) { return f[n * routes + r]; }
  double& G(NodeId n, RouteId r) { return g[n * routes + r]; }
  double F(NodeId n, RouteId r) const { return f[n * routes + r]; }
  double G(NodeId n, RouteId r) const { return g[n * routes + r]; }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_instance(const MarketInstance& inst);
void require_valid(const MarketInstance& inst);

// P(to | from); throws NotDescendant.
double node_probability(const ScenarioTree& tree, NodeId from, NodeId to);

// supply at `child` given flows (per route) at its parent
std::vector<double> transition_supply(const MarketInstance& inst, NodeId child,
                                      const std::vector<double>& parent_flows);

// requests D_bar (1 - F(P)) on route at node
double expected_requests(const MarketInstance& inst, RouteId route, NodeId node, double price);

// Supplies S(tau) for every node of the plan's subtree (others empty).
std::vector<std::vector<double>> plan_supplies(const MarketInstance& inst, const MarketState& state,
                                               const FlowPlan& plan);

}  // namespace ridemarket
