// ridemarket command line front end
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ridemarket/experiments.hpp"
#include "ridemarket/instance_io.hpp"

using namespace ridemarket;

namespace {

struct Global {
  std::uint64_t seed = 1;
  std::string out = ".";
  double tol = 1e-8;
  int max_iters = 50000;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string canonical(const std::string& cmd, const std::vector<std::string>& parts, const Global& g) {
  std::ostringstream os;
  os << cmd;
  for (const auto& p : parts) os << '|' << p;
  os << "|seed=" << g.seed << "|tol=" << g.tol << "|max_iters=" << g.max_iters;
  return os.str();
}

void write_file(const Global& g, const std::string& name, const std::string& hash_src, const std::string& body) {
  std::filesystem::create_directories(g.out);
  auto path = std::filesystem::path(g.out) / name;
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write " + path.string());
  os << report_header(g.seed, config_hash(hash_src)) << '\n' << body;
  std::cout << "wrote " << path.string() << '\n';
}

std::shared_ptr<MarketInstance> load(const std::string& path) {
  try {
    return std::make_shared<MarketInstance>(parse_instance_file(path));
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

MarketState parse_state(const MarketInstance& inst, const std::string& node, const std::string& supply) {
  MarketState s = initial_state(inst);
  if (!node.empty()) {
    s.node = inst.tree.find(node);
    if (s.node == kInvalid) throw UsageError("unknown node '" + node + "'");
  }
  if (!supply.empty()) {
    s.supply.clear();
    std::stringstream ss(supply);
    std::string tok;
    while (std::getline(ss, tok, ',')) s.supply.push_back(std::stod(tok));
    if (s.supply.size() != inst.num_locations()) throw UsageError("--supply needs one value per location");
  }
  return s;
}

MechanismKind parse_mech(const std::string& m) {
  if (m == "ssp") return MechanismKind::Ssp;
  if (m == "static") return MechanismKind::Static;
  throw UsageError("unknown mechanism '" + m + "'");
}

StrategyProfile parse_profile(const std::string& p) {
  if (p == "sigma-star") return StrategyProfile::sigma_star();
  if (p == "all-exit") return StrategyProfile::all_exit();
  throw UsageError("unknown profile '" + p + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ridemarket: stochastic spatiotemporal ridesharing market tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  Global g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--tol", g.tol, "relative solver tolerance")->capture_default_str();
  app.add_option("--max-iters", g.max_iters, "solver iteration limit")->capture_default_str();

  std::string inst_path, node, supply, mech = "ssp", profile = "sigma-star", trace, experiment, suite;
  long k = 100, trials = 100000;
  int episodes = 0;
  std::vector<long> ks;

  auto* validate = app.add_subcommand("validate", "check an instance file");
  validate->add_option("instance", inst_path)->required();

  auto* solve = app.add_subcommand("solve", "solve the fluid program and report flows and duals");
  solve->add_option("instance", inst_path)->required();
  solve->add_option("--node", node, "scenario node (default root)");
  solve->add_option("--supply", supply, "comma-separated supply per location (default root entries)");

  auto* price = app.add_subcommand("price", "prices a mechanism posts at a state");
  price->add_option("instance", inst_path)->required();
  price->add_option("--mechanism", mech)->check(CLI::IsMember({"ssp", "static"}))->capture_default_str();
  price->add_option("--node", node);
  price->add_option("--supply", supply);

  auto* simulate = app.add_subcommand("simulate", "run two-level episodes");
  simulate->add_option("instance", inst_path)->required();
  simulate->add_option("--k", k)->capture_default_str();
  simulate->add_option("--mechanism", mech)->check(CLI::IsMember({"ssp", "static"}))->capture_default_str();
  simulate->add_option("--profile", profile)->check(CLI::IsMember({"sigma-star", "all-exit"}))->capture_default_str();
  simulate->add_option("--episodes", episodes, "episodes (default 200)");
  simulate->add_option("--trace", trace, "trace CSV file name for episode 0");

  auto* audit = app.add_subcommand("audit", "estimate the incentive gap by tagged-driver deviations");
  audit->add_option("instance", inst_path)->required();
  audit->add_option("--k", k)->capture_default_str();
  audit->add_option("--mechanism", mech)->check(CLI::IsMember({"ssp", "static"}))->capture_default_str();
  audit->add_option("--episodes", episodes, "episodes (default 200)");

  auto* conc = app.add_subcommand("concentration", "Monte-Carlo checks of the tail bounds");
  conc->add_option("--suite", suite)->required()->check(CLI::IsMember({"negbin", "dkw", "matching", "swr"}));
  conc->add_option("--trials", trials)->capture_default_str();

  auto* run = app.add_subcommand("run", "run a named experiment");
  run->add_option("experiment", experiment)->required();
  run->add_option("--k", ks, "population scale(s)");
  run->add_option("--episodes", episodes, "episodes, rollouts or trials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    SolveOptions opt{g.tol, g.max_iters};
    if (*validate) {
      auto inst = load(inst_path);
      auto rep = validate_instance(*inst);
      for (const auto& v : rep.violations) std::cout << "violation: " << v << '\n';
      std::cout << (rep.ok() ? "valid\n" : "invalid\n");
      return rep.ok() ? 0 : 1;
    }
    if (*solve) {
      auto inst = load(inst_path);
      require_valid(*inst);
      auto state = parse_state(*inst, node, supply);
      auto rep = solve_fluid(*inst, state, opt);
      auto duals = compute_duals(*inst, state, rep.plan);
      std::ostringstream body;
      body << "node,origin,destination,f,g,price\n";
      for (NodeId n : inst->tree.subtree(state.node)) {
        auto P = prices_from_plan(*inst, n, rep.plan);
        for (RouteId r = 0; r < inst->num_routes(); ++r)
          body << inst->tree.node(n).id << ',' << inst->locations[inst->routes[r].origin].name << ','
               << inst->locations[inst->routes[r].destination].name << ',' << fmt(rep.plan.F(n, r)) << ','
               << fmt(rep.plan.G(n, r)) << ',' << fmt(P[r]) << '\n';
      }
      std::ostringstream eta;
      eta << "node,location,eta\n";
      for (NodeId n : inst->tree.subtree(state.node))
        for (LocationId l = 0; l < inst->num_locations(); ++l)
          eta << inst->tree.node(n).id << ',' << inst->locations[l].name << ',' << fmt(duals.Eta(n, l)) << '\n';
      std::string src = canonical("solve", {inst_path, node, supply}, g);
      write_file(g, "flows.csv", src, body.str());
      write_file(g, "duals.csv", src, eta.str());
      std::cout << "value " << fmt(rep.value) << " gap " << fmt(rep.gap) << " iterations " << rep.iterations
                << (rep.converged ? "" : " (iteration limit)") << '\n';
      return rep.converged ? 0 : 1;
    }
    if (*price) {
      auto inst = load(inst_path);
      require_valid(*inst);
      auto state = parse_state(*inst, node, supply);
      std::shared_ptr<Mechanism> m;
      if (parse_mech(mech) == MechanismKind::Ssp)
        m = std::make_shared<SspMechanism>(inst, opt);
      else
        m = std::make_shared<StaticMechanism>(inst, initial_state(*inst), opt);
      auto ctx = m->context(state);
      std::cout << "origin,destination,price,planned_dispatch\n";
      for (RouteId r = 0; r < inst->num_routes(); ++r)
        std::cout << inst->locations[inst->routes[r].origin].name << ','
                  << inst->locations[inst->routes[r].destination].name << ',' << fmt(ctx->prices[r]) << ','
                  << fmt(ctx->planned_dispatch[r]) << '\n';
      return 0;
    }
    if (*simulate || *audit) {
      auto inst = load(inst_path);
      SimConfig cfg;
      cfg.instance = inst;
      cfg.k = k;
      cfg.mechanism = parse_mech(mech);
      cfg.profile = parse_profile(profile);
      cfg.seed = g.seed;
      cfg.episodes = episodes > 0 ? episodes : 200;
      cfg.solve = opt;
      std::string src = canonical(*simulate ? "simulate" : "audit",
                                  {inst_path, std::to_string(k), mech, profile, std::to_string(cfg.episodes)}, g);
      if (*simulate) {
        auto est = mean_normalized_welfare(cfg);
        double phi = solve_fluid(*inst, initial_state(*inst), opt).value;
        std::cout << "normalized welfare " << fmt(est.mean) << " se " << fmt(est.se) << " over " << est.n
                  << " episodes; fluid bound " << fmt(phi) << '\n';
        if (!trace.empty()) {
          std::ostringstream body;
          write_trace_csv(body, *inst, run_episode(cfg, 0));
          write_file(g, trace, src, body.str());
        }
        std::ostringstream body;
        body << "k,mechanism,profile,episodes,welfare,se,phi\n"
             << k << ',' << mech << ',' << profile << ',' << est.n << ',' << fmt(est.mean) << ',' << fmt(est.se)
             << ',' << fmt(phi) << '\n';
        write_file(g, "simulate.csv", src, body.str());
        return 0;
      }
      AuditOptions ao;
      ao.episodes = cfg.episodes;
      auto rep = audit_incentives(cfg, ao);
      std::ostringstream body;
      write_audit_csv(body, *inst, rep);
      write_file(g, "audit.csv", src, body.str());
      std::cout << "eps_hat " << fmt(rep.eps_hat) << " se " << fmt(rep.se) << "; fraction above threshold "
                << fmt(rep.fraction_above) << '\n';
      for (const auto& l : rep.locations)
        std::cout << "  " << inst->locations[l.location].name << ": eps_hat " << fmt(l.eps_hat) << " se "
                  << fmt(l.se) << (l.low_confidence ? " (low confidence)" : "") << '\n';
      return 0;
    }
    if (*conc) {
      auto s = concentration_suite(trials, g.seed, {suite});
      std::ostringstream body;
      bool ok = true;
      if (suite == "matching") {
        write_sweep_csv(body, s.matching);
        for (std::size_t i = 0; i < s.matching.size(); ++i)
          if (s.matching[i].k >= 100) ok = ok && s.matching[i].mean_deviation <= s.matching[i].envelope;
      } else {
        const auto& rows = suite == "negbin" ? s.negbin : suite == "dkw" ? s.dkw : s.swr;
        write_tail_csv(body, rows);
        for (const auto& r : rows) ok = ok && r.pass;
      }
      write_file(g, suite + ".csv", canonical("concentration", {suite, std::to_string(trials)}, g), body.str());
      std::cout << (ok ? "all checks pass\n" : "some checks fail\n");
      return ok ? 0 : 1;
    }
    if (*run) {
      ExperimentSpec spec;
      spec.name = experiment;
      spec.ks = ks;
      spec.episodes = episodes;
      spec.seed = g.seed;
      spec.tol = g.tol;
      spec.max_iters = g.max_iters;
      spec.out_dir = g.out;
      return run_experiment(spec, std::cout);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const UnknownExperiment& e) {
    std::cerr << "error: " << e.what() << "; known:";
    for (const auto& n : experiment_names()) std::cerr << ' ' << n;
    std::cerr << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
