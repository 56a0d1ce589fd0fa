#include "ridemarket/instance_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ridemarket {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed,
               std::initializer_list<const char*> required) {
  if (!j.is_object()) fail(where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) fail(where, "unknown key '" + it.key() + "'");
  for (const char* k : required)
    if (!j.contains(k)) fail(where, "missing field '" + std::string(k) + "'");
}

double num(const json& j, const std::string& where, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) fail(where, "field '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

std::string str(const json& j, const std::string& where, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) fail(where, "field '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

const json& arr(const json& j, const std::string& where, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) fail(where, "field '" + std::string(key) + "' must be an array");
  return v;
}

}  // namespace

MarketInstance parse_instance(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte -> line
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    fail("line " + std::to_string(line), e.what());
  }
  only_keys(root, "instance", {"locations", "scenario_tree", "routes", "demand", "entries", "C", "sampling"},
            {"locations", "scenario_tree", "routes", "demand", "entries", "C"});

  MarketInstance inst;
  inst.C = num(root, "instance", "C");

  const auto& locs = arr(root, "instance", "locations");
  for (std::size_t i = 0; i < locs.size(); ++i) {
    std::string w = "locations[" + std::to_string(i) + "]";
    only_keys(locs[i], w, {"name", "sink"}, {"name"});
    Location l;
    l.name = str(locs[i], w, "name");
    if (locs[i].contains("sink")) {
      if (!locs[i]["sink"].is_boolean()) fail(w, "field 'sink' must be a boolean");
      l.sink = locs[i]["sink"].get<bool>();
    }
    inst.locations.push_back(l);
  }

  only_keys(root["scenario_tree"], "scenario_tree", {"nodes"}, {"nodes"});
  const auto& nodes = arr(root["scenario_tree"], "scenario_tree", "nodes");
  std::vector<ScenarioNode> tn;
  std::vector<std::string> parent_names;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::string w = "scenario_tree.nodes[" + std::to_string(i) + "]";
    only_keys(nodes[i], w, {"id", "t", "parent", "p"}, {"id", "t", "parent", "p"});
    ScenarioNode n;
    n.id = str(nodes[i], w, "id");
    if (!nodes[i]["t"].is_number_integer()) fail(w, "field 't' must be an integer");
    n.t = nodes[i]["t"].get<int>();
    n.p = num(nodes[i], w, "p");
    if (nodes[i]["parent"].is_null()) {
      parent_names.emplace_back();
    } else {
      parent_names.push_back(str(nodes[i], w, "parent"));
      if (parent_names.back().empty()) fail(w, "field 'parent' must be null or a node id");
    }
    tn.push_back(n);
  }
  for (std::size_t i = 0; i < tn.size(); ++i) {
    if (parent_names[i].empty()) continue;
    tn[i].parent = kInvalid - 1;  // unknown unless found
    for (std::size_t j = 0; j < tn.size(); ++j)
      if (tn[j].id == parent_names[i]) tn[i].parent = j;
  }
  inst.tree = ScenarioTree(std::move(tn));

  const auto& routes = arr(root, "instance", "routes");
  for (std::size_t i = 0; i < routes.size(); ++i) {
    std::string w = "routes[" + std::to_string(i) + "]";
    only_keys(routes[i], w, {"origin", "destination", "cost"}, {"origin", "destination", "cost"});
    Route r;
    r.origin = inst.find_location(str(routes[i], w, "origin"));
    r.destination = inst.find_location(str(routes[i], w, "destination"));
    r.cost = num(routes[i], w, "cost");
    inst.routes.push_back(r);
  }
  inst.finalize();

  const auto& dem = arr(root, "instance", "demand");
  for (std::size_t i = 0; i < dem.size(); ++i) {
    std::string w = "demand[" + std::to_string(i) + "]";
    only_keys(dem[i], w, {"route", "node", "D_bar", "V_max"}, {"route", "node", "D_bar", "V_max"});
    const auto& rt = dem[i]["route"];
    if (!rt.is_array() || rt.size() != 2 || !rt[0].is_string() || !rt[1].is_string())
      fail(w, "field 'route' must be [origin, destination]");
    RouteId r = inst.route_between(inst.find_location(rt[0].get<std::string>()),
                                   inst.find_location(rt[1].get<std::string>()));
    if (r == kInvalid) fail(w, "field 'route' names no declared route");
    NodeId n = inst.tree.find(str(dem[i], w, "node"));
    if (n == kInvalid) fail(w, "field 'node' names no scenario node");
    double vmax = num(dem[i], w, "V_max");
    if (vmax < 0) fail(w, "field 'V_max' must be >= 0");
    inst.demand[n][r] = DemandSpec{num(dem[i], w, "D_bar"), std::make_shared<UniformValue>(vmax)};
  }

  const auto& ent = arr(root, "instance", "entries");
  for (std::size_t i = 0; i < ent.size(); ++i) {
    std::string w = "entries[" + std::to_string(i) + "]";
    only_keys(ent[i], w, {"location", "node", "M_bar"}, {"location", "node", "M_bar"});
    LocationId l = inst.find_location(str(ent[i], w, "location"));
    if (l == kInvalid) fail(w, "field 'location' names no location");
    NodeId n = inst.tree.find(str(ent[i], w, "node"));
    if (n == kInvalid) fail(w, "field 'node' names no scenario node");
    inst.entries[n][l] = num(ent[i], w, "M_bar");
  }

  if (root.contains("sampling")) {
    only_keys(root["sampling"], "sampling", {"demand", "entries"}, {});
    for (const char* k : {"demand", "entries"}) {
      if (!root["sampling"].contains(k)) continue;
      auto fam = parse_family(str(root["sampling"], "sampling", k));
      if (!fam) fail("sampling", std::string("unknown family for '") + k + "'");
      (std::string(k) == "demand" ? inst.demand_family : inst.entry_family) = *fam;
    }
  }
  return inst;
}

MarketInstance parse_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_instance(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string write_instance(const MarketInstance& inst) {
  json root;
  json locs = json::array();
  for (const auto& l : inst.locations) locs.push_back(json{{"name", l.name}, {"sink", l.sink}});
  root["locations"] = locs;

  json nodes = json::array();
  for (const auto& n : inst.tree.nodes()) {
    json p = n.parent == kInvalid ? json(nullptr) : json(inst.tree.node(n.parent).id);
    nodes.push_back(json{{"id", n.id}, {"t", n.t}, {"parent", p}, {"p", n.p}});
  }
  root["scenario_tree"] = json{{"nodes", nodes}};

  auto lname = [&](LocationId l) { return inst.locations.at(l).name; };
  json routes = json::array();
  for (const auto& r : inst.routes)
    routes.push_back(json{{"origin", lname(r.origin)}, {"destination", lname(r.destination)}, {"cost", r.cost}});
  root["routes"] = routes;

  json dem = json::array();
  for (NodeId n = 0; n < inst.num_nodes(); ++n)
    for (RouteId r = 0; r < inst.num_routes(); ++r) {
      const auto& d = inst.demand[n][r];
      if (d.mean == 0.0 && !d.value) continue;
      const auto& rt = inst.routes[r];
      dem.push_back(json{{"route", json::array({lname(rt.origin), lname(rt.destination)})},
                         {"node", inst.tree.node(n).id},
                         {"D_bar", d.mean},
                         {"V_max", d.vmax()}});
    }
  root["demand"] = dem;

  json ent = json::array();
  for (NodeId n = 0; n < inst.num_nodes(); ++n)
    for (LocationId l = 0; l < inst.num_locations(); ++l)
      if (inst.entries[n][l] != 0.0)
        ent.push_back(json{{"location", lname(l)}, {"node", inst.tree.node(n).id}, {"M_bar", inst.entries[n][l]}});
  root["entries"] = ent;
  root["C"] = inst.C;
  root["sampling"] = json{{"demand", family_name(inst.demand_family)}, {"entries", family_name(inst.entry_family)}};
  return root.dump(2) + "\n";
}

namespace {

MarketInstance build(std::vector<Location> locs, std::vector<ScenarioNode> nodes,
                     std::vector<std::tuple<std::string, std::string, double>> routes) {
  MarketInstance inst;
  inst.locations = std::move(locs);
  inst.tree = ScenarioTree(std::move(nodes));
  for (auto& [o, d, c] : routes) inst.routes.push_back(Route{inst.find_location(o), inst.find_location(d), c});
  inst.finalize();
  return inst;
}

}  // namespace

MarketInstance example_network_instance() {
  // t=1: 10 drivers at A choose between B (next period) and exit (utility 1).
  auto inst = build({{"A", false}, {"B", false}, {"X", true}},
                    {{"root", 1, kInvalid, 1.0, {}}, {"rain", 2, 0, 0.5, {}}, {"shine", 2, 0, 0.5, {}}},
                    {{"A", "B", 0.0}, {"A", "X", -1.0}, {"B", "B", 0.0}, {"X", "X", 0.0}});
  RouteId bb = inst.route_between(1, 1);
  inst.demand[1][bb] = DemandSpec{6.0, std::make_shared<UniformValue>(4.0)};
  inst.demand[2][bb] = DemandSpec{2.0, std::make_shared<UniformValue>(4.0)};
  inst.entries[0][0] = 10.0;
  inst.C = 0.0;
  return inst;
}

MarketInstance resolve_demo_instance() {
  // normalized by k: one unit enters at A1, exit pays 1/2, period-2 riders D=1/2 with values U(0,1)
  auto inst = build({{"A1", false}, {"A2", false}, {"X", true}},
                    {{"root", 1, kInvalid, 1.0, {}}, {"late", 2, 0, 1.0, {}}},
                    {{"A1", "A2", 0.0}, {"A1", "X", -0.5}, {"A2", "A2", 0.0}, {"X", "X", 0.0}});
  inst.demand[1][inst.route_between(1, 1)] = DemandSpec{0.5, std::make_shared<UniformValue>(1.0)};
  inst.entries[0][0] = 1.0;
  inst.C = 0.0;
  inst.entry_family = SamplingFamily::Deterministic;
  return inst;
}

}  // namespace ridemarket
