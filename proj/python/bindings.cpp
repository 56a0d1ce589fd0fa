#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ridemarket/concentration_lab.hpp"
#include "ridemarket/experiments.hpp"
#include "ridemarket/instance_io.hpp"
#include "ridemarket/two_level_sim.hpp"

namespace py = pybind11;
using namespace ridemarket;

namespace {

using Instance = std::shared_ptr<const MarketInstance>;

Instance own(MarketInstance m) { return std::make_shared<const MarketInstance>(std::move(m)); }

MarketState state_for(const MarketInstance& inst, const std::optional<std::string>& node,
                      const std::optional<std::vector<double>>& supply) {
  NodeId n = inst.tree.root();
  if (node) {
    n = inst.tree.find(*node);
    if (n == kInvalid) throw py::value_error("unknown node '" + *node + "'");
  }
  MarketState st{n, supply ? *supply : inst.entries[n]};
  if (st.supply.size() != inst.num_locations()) throw py::value_error("supply needs one entry per location");
  return st;
}

std::string route_name(const MarketInstance& inst, RouteId r) {
  return inst.locations[inst.routes[r].origin].name + "->" + inst.locations[inst.routes[r].destination].name;
}

py::dict by_route(const MarketInstance& inst, const std::vector<double>& v) {
  py::dict d;
  for (RouteId r = 0; r < inst.num_routes(); ++r) d[py::str(route_name(inst, r))] = v[r];
  return d;
}

py::dict tail_dict(const TailCheckResult& r) {
  py::dict d;
  d["check"] = r.check;
  for (const auto& [k, v] : r.params) d[py::str(k)] = v;
  d["trials"] = r.trials;
  d["frequency"] = r.frequency;
  d["se"] = r.se;
  d["bound"] = r.bound;
  d["pass"] = r.pass;
  d["vacuous"] = r.vacuous;
  return d;
}

SimConfig sim_config(Instance inst, long k, const std::string& mechanism, const std::string& profile, int episodes,
                     std::uint64_t seed) {
  SimConfig c;
  c.instance = std::move(inst);
  c.k = k;
  if (mechanism == "ssp") c.mechanism = MechanismKind::Ssp;
  else if (mechanism == "static") c.mechanism = MechanismKind::Static;
  else throw py::value_error("mechanism must be 'ssp' or 'static'");
  if (profile == "sigma-star") c.profile = StrategyProfile::sigma_star();
  else if (profile == "all-exit") c.profile = StrategyProfile::all_exit();
  else throw py::value_error("profile must be 'sigma-star' or 'all-exit'");
  c.episodes = episodes;
  c.seed = seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ride-hailing market: fluid program, pricing, two-level simulation";
  m.attr("__version__") = version_string();

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<InvalidInstance>(m, "InvalidInstance", PyExc_ValueError);
  py::register_exception<PreconditionViolated>(m, "PreconditionViolated", PyExc_ValueError);
  py::register_exception<UnknownExperiment>(m, "UnknownExperiment", PyExc_KeyError);

  py::class_<MarketInstance, std::shared_ptr<MarketInstance>>(m, "Instance")
      .def_property_readonly("locations",
                             [](const MarketInstance& i) {
                               std::vector<std::string> v;
                               for (const auto& l : i.locations) v.push_back(l.name);
                               return v;
                             })
      .def_property_readonly("routes",
                             [](const MarketInstance& i) {
                               std::vector<std::string> v;
                               for (RouteId r = 0; r < i.num_routes(); ++r) v.push_back(route_name(i, r));
                               return v;
                             })
      .def_property_readonly("nodes",
                             [](const MarketInstance& i) {
                               std::vector<std::string> v;
                               for (const auto& n : i.tree.nodes()) v.push_back(n.id);
                               return v;
                             })
      .def_readonly("C", &MarketInstance::C)
      .def("to_json", [](const MarketInstance& i) { return write_instance(i); });

  auto wrap = [](MarketInstance x) { return std::make_shared<MarketInstance>(std::move(x)); };
  m.def("load", [wrap](const std::string& path) { return wrap(parse_instance_file(path)); }, py::arg("path"));
  m.def("parse", [wrap](const std::string& text) { return wrap(parse_instance(text)); }, py::arg("text"));
  m.def("example_network", [wrap] { return wrap(example_network_instance()); });
  m.def("resolve_demo", [wrap] { return wrap(resolve_demo_instance()); });

  m.def("validate", [](const MarketInstance& i) { return validate_instance(i).violations; },
        "List of violations; empty when the instance is valid.");

  m.def(
      "solve",
      [](const MarketInstance& i, std::optional<std::string> node, std::optional<std::vector<double>> supply,
         double tol, int max_iters) {
        auto st = state_for(i, node, supply);
        auto rep = solve_fluid(i, st, {tol, max_iters});
        auto duals = compute_duals(i, st, rep.plan);
        py::dict out, f, g, eta;
        for (NodeId n : i.tree.subtree(st.node)) {
          const auto& id = i.tree.node(n).id;
          std::vector<double> fn(rep.plan.f.begin() + n * i.num_routes(), rep.plan.f.begin() + (n + 1) * i.num_routes());
          std::vector<double> gn(rep.plan.g.begin() + n * i.num_routes(), rep.plan.g.begin() + (n + 1) * i.num_routes());
          f[py::str(id)] = by_route(i, fn);
          g[py::str(id)] = by_route(i, gn);
          py::dict e;
          for (LocationId l = 0; l < i.num_locations(); ++l) e[py::str(i.locations[l].name)] = duals.Eta(n, l);
          eta[py::str(id)] = e;
        }
        out["value"] = rep.value;
        out["gap"] = rep.gap;
        out["iterations"] = rep.iterations;
        out["converged"] = rep.converged;
        out["f"] = f;
        out["g"] = g;
        out["eta"] = eta;
        return out;
      },
      py::arg("instance"), py::arg("node") = py::none(), py::arg("supply") = py::none(), py::arg("tol") = 1e-8,
      py::arg("max_iters") = 50000);

  m.def(
      "prices",
      [](const MarketInstance& i, const std::string& mechanism, std::optional<std::string> node,
         std::optional<std::vector<double>> supply) {
        auto st = state_for(i, node, supply);
        if (mechanism == "ssp") return by_route(i, ssp_prices(i, st, {1e-8, 50000}).first);
        if (mechanism != "static") throw py::value_error("mechanism must be 'ssp' or 'static'");
        auto plan = static_plan(i, state_for(i, std::nullopt, std::nullopt), {1e-8, 50000});
        return by_route(i, plan.prices[st.node]);
      },
      py::arg("instance"), py::arg("mechanism") = "ssp", py::arg("node") = py::none(), py::arg("supply") = py::none());

  m.def(
      "check_incentives",
      [](std::shared_ptr<MarketInstance> i, const std::string& mechanism, const std::string& profile, double eps) {
        Instance inst = i;
        auto cfg = sim_config(inst, 1, mechanism, profile, 1, 1);
        auto mech = make_mechanism(cfg);
        auto rep = check_incentive_conditions(*inst, *mech, cfg.profile, initial_state(*inst), eps);
        py::dict d;
        d["pass"] = rep.pass;
        d["worst"] = rep.worst;
        d["condition"] = rep.condition;
        return d;
      },
      py::arg("instance"), py::arg("mechanism") = "ssp", py::arg("profile") = "sigma-star", py::arg("eps") = 1e-4);

  m.def(
      "simulate",
      [](std::shared_ptr<MarketInstance> i, long k, const std::string& mechanism, const std::string& profile,
         int episodes, std::uint64_t seed) {
        auto w = mean_normalized_welfare(sim_config(i, k, mechanism, profile, episodes, seed));
        py::dict d;
        d["welfare"] = w.mean;
        d["se"] = w.se;
        d["episodes"] = w.n;
        return d;
      },
      py::arg("instance"), py::arg("k") = 100, py::arg("mechanism") = "ssp", py::arg("profile") = "sigma-star",
      py::arg("episodes") = 200, py::arg("seed") = 1);

  m.def(
      "trace_csv",
      [](std::shared_ptr<MarketInstance> i, long k, const std::string& mechanism, int episode, std::uint64_t seed) {
        auto cfg = sim_config(i, k, mechanism, "sigma-star", 1, seed);
        std::ostringstream os;
        write_trace_csv(os, *i, run_episode(cfg, episode));
        return os.str();
      },
      py::arg("instance"), py::arg("k") = 100, py::arg("mechanism") = "ssp", py::arg("episode") = 0,
      py::arg("seed") = 1);

  m.def("negbin_universal_check",
        [](long R, double p, long k, long trials, std::uint64_t seed) {
          return tail_dict(negbin_universal_check(R, p, k, trials, seed));
        },
        py::arg("R"), py::arg("p"), py::arg("k"), py::arg("trials") = 100000, py::arg("seed") = 1);
  m.def("negbin_relative_check",
        [](long R, double p, double eps, long trials, std::uint64_t seed) {
          return tail_dict(negbin_relative_check(R, p, eps, trials, seed));
        },
        py::arg("R"), py::arg("p"), py::arg("eps"), py::arg("trials") = 100000, py::arg("seed") = 1);
  m.def("dkw_check",
        [](long n, double eps, long trials, std::uint64_t seed) { return tail_dict(dkw_check(n, eps, trials, seed)); },
        py::arg("n"), py::arg("eps"), py::arg("trials") = 100000, py::arg("seed") = 1);

  m.def("experiments", &experiment_names);
  m.def(
      "run_experiment",
      [](const std::string& name, std::vector<long> ks, int episodes, std::uint64_t seed, const std::string& out_dir) {
        ExperimentSpec spec;
        spec.name = name;
        spec.ks = std::move(ks);
        spec.episodes = episodes;
        spec.seed = seed;
        spec.out_dir = out_dir;
        std::ostringstream log;
        int rc = run_experiment(spec, log);
        return py::make_tuple(rc, log.str());
      },
      py::arg("name"), py::arg("ks") = std::vector<long>{}, py::arg("episodes") = 0, py::arg("seed") = 1,
      py::arg("out_dir") = ".");
}
