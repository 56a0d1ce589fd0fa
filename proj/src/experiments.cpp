#include "ridemarket/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ridemarket/instance_io.hpp"

#ifndef RIDEMARKET_VERSION
#define RIDEMARKET_VERSION "0.0.0"
#endif

namespace ridemarket {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_report(const ExperimentSpec& spec, const std::string& file, const std::string& body, std::ostream& log) {
  std::filesystem::create_directories(spec.out_dir);
  auto path = std::filesystem::path(spec.out_dir) / file;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << report_header(spec.seed, spec_hash(spec)) << '\n' << body;
  log << "wrote " << path.string() << '\n';
}

SolveOptions solve_opts(const ExperimentSpec& s) { return {s.tol, s.max_iters}; }

int example_network(const ExperimentSpec& spec, std::ostream& log) {
  auto r = example_network_experiment(solve_opts(spec));
  struct Row {
    const char* name;
    double value, expected;
    bool pass;
  };
  std::vector<Row> rows = {
      {"f_star", r.f_star, 3.0, std::abs(r.f_star - 3) <= 1e-3},
      {"price_rain", r.price_rain, 2.0, std::abs(r.price_rain - 2) <= 1e-3},
      {"price_shine", r.price_shine, 0.0, std::abs(r.price_shine) <= 1e-3},
      {"eta_root_A", r.eta_root, 1.0, std::abs(r.eta_root - 1) <= 1e-3},
      {"phi", r.phi, 13.5, std::abs(r.phi - 13.5) <= 1e-3},
      {"ic_sigma_star", r.ic_sigma_star.pass ? 1.0 : 0.0, 1.0, r.ic_sigma_star.pass},
  };
  std::ostringstream body;
  body << "quantity,value,expected,pass\n";
  bool ok = true;
  log << "quantity        value        expected\n";
  for (const auto& row : rows) {
    body << row.name << ',' << fmt(row.value) << ',' << fmt(row.expected) << ',' << (row.pass ? 1 : 0) << '\n';
    char line[128];
    std::snprintf(line, sizeof line, "%-15s %-12.6g %-8.6g %s\n", row.name, row.value, row.expected,
                  row.pass ? "ok" : "FAIL");
    log << line;
    ok = ok && row.pass;
  }
  body << "ic_all_exit_static," << (r.ic_all_exit_static.pass ? 1 : 0) << ",,\n";
  log << "all-exit under static prices: IC " << (r.ic_all_exit_static.pass ? "holds" : "violated") << '\n';
  write_report(spec, "example_network.csv", body.str(), log);
  return ok ? 0 : 1;
}

int resolve_demo(const ExperimentSpec& spec, std::ostream& log) {
  auto ks = spec.ks.empty() ? std::vector<long>{100} : spec.ks;
  int rollouts = spec.episodes > 0 ? spec.episodes : 2000;
  std::ostringstream body;
  body << "k,rollouts,stay,stay_se,exit,gap_in_se,phi,welfare_static,welfare_ssp,welfare_all_exit_static,"
          "all_exit_loss,price_mismatches,all_exit_ic_static,all_exit_ic_ssp\n";
  bool ok = true;
  for (long k : ks) {
    auto r = resolve_demo_experiment(k, rollouts, spec.seed, solve_opts(spec));
    double gap = r.stay.se > 0 ? (r.exit.mean - r.stay.mean) / r.stay.se : INFINITY;
    bool pass = r.stay.mean < r.exit.mean - 3 * r.stay.se && r.price_mismatches == 0;
    ok = ok && pass;
    body << k << ',' << rollouts << ',' << fmt(r.stay.mean) << ',' << fmt(r.stay.se) << ',' << fmt(r.exit.mean) << ','
         << fmt(gap) << ',' << fmt(r.phi) << ',' << fmt(r.welfare_static.mean) << ',' << fmt(r.welfare_ssp.mean) << ','
         << fmt(r.welfare_all_exit_static.mean) << ',' << fmt(r.all_exit_loss) << ',' << r.price_mismatches << ','
         << r.all_exit_ic_static << ',' << r.all_exit_ic_ssp << '\n';
    log << "k=" << k << ": static stay " << fmt(r.stay.mean) << " (se " << fmt(r.stay.se) << ") vs exit "
        << fmt(r.exit.mean) << ", gap " << fmt(gap) << " se; ssp price mismatches " << r.price_mismatches << "/"
        << r.price_checks << "; welfare static " << fmt(r.welfare_static.mean) << ", ssp " << fmt(r.welfare_ssp.mean)
        << ", all-exit " << fmt(r.welfare_all_exit_static.mean) << " (phi " << fmt(r.phi) << ")"
        << (pass ? "" : "  FAIL") << '\n';
  }
  write_report(spec, "resolve_demo.csv", body.str(), log);
  return ok ? 0 : 1;
}

int robustness(const ExperimentSpec& spec, std::ostream& log) {
  auto ks = spec.ks.empty() ? std::vector<long>{50, 200, 800} : spec.ks;
  int episodes = spec.episodes > 0 ? spec.episodes : 2000;
  auto inst = std::make_shared<const MarketInstance>(example_network_instance());
  auto rows = robustness_sweep(inst, ks, episodes, episodes, spec.seed, solve_opts(spec));
  std::ostringstream body;
  body << "k,episodes,phi,welfare,welfare_se,gap,eps_hat,eps_se,fraction_above\n";
  bool ok = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    bool bound = r.welfare.mean <= r.phi + 3 * r.welfare.se;
    bool trend = i == 0 || (r.gap <= rows[i - 1].gap + r.welfare.se &&
                            r.audit.eps_hat <= rows[i - 1].audit.eps_hat + r.audit.se);
    ok = ok && bound && trend;
    body << r.k << ',' << episodes << ',' << fmt(r.phi) << ',' << fmt(r.welfare.mean) << ',' << fmt(r.welfare.se)
         << ',' << fmt(r.gap) << ',' << fmt(r.audit.eps_hat) << ',' << fmt(r.audit.se) << ','
         << fmt(r.audit.fraction_above) << '\n';
    log << "k=" << r.k << ": welfare " << fmt(r.welfare.mean) << " +- " << fmt(r.welfare.se) << " (phi "
        << fmt(r.phi) << "), eps_hat " << fmt(r.audit.eps_hat) << " +- " << fmt(r.audit.se)
        << (bound ? "" : "  ABOVE-BOUND") << (trend ? "" : "  TREND") << '\n';
    std::ostringstream audit;
    write_audit_csv(audit, *inst, r.audit);
    write_report(spec, "audit_k" + std::to_string(r.k) + ".csv", audit.str(), log);
  }
  if (!rows.empty() && rows.back().audit.eps_hat > 0.05) {
    ok = false;
    log << "eps_hat at the largest k exceeds 0.05\n";
  }
  write_report(spec, "robustness.csv", body.str(), log);
  return ok ? 0 : 1;
}

int concentration(const ExperimentSpec& spec, std::ostream& log) {
  long trials = spec.episodes > 0 ? spec.episodes : 100000;
  auto s = concentration_suite(trials, spec.seed);
  bool ok = true;
  auto tails = [&](const char* file, const std::vector<TailCheckResult>& rows) {
    std::ostringstream body;
    write_tail_csv(body, rows);
    for (const auto& r : rows) ok = ok && r.pass;
    write_report(spec, file, body.str(), log);
  };
  tails("negbin.csv", s.negbin);
  tails("dkw.csv", s.dkw);
  tails("swr.csv", s.swr);
  std::ostringstream body;
  write_sweep_csv(body, s.matching);
  for (std::size_t i = 0; i < s.matching.size(); ++i) {
    const auto& r = s.matching[i];
    if (r.k < 100) continue;  // small k has no claim
    ok = ok && r.mean_deviation <= r.envelope;
    if (i > 0 && s.matching[i - 1].k >= 100) ok = ok && r.mean_deviation < s.matching[i - 1].mean_deviation;
  }
  write_report(spec, "matching.csv", body.str(), log);
  long n = 0, passed = 0, vac = 0;
  for (const auto* v : {&s.negbin, &s.dkw, &s.swr})
    for (const auto& r : *v) {
      ++n;
      passed += r.pass;
      vac += r.vacuous;
    }
  log << passed << "/" << n << " tail checks pass (" << vac << " with vacuous bounds); matching deviation";
  for (const auto& r : s.matching) log << " k=" << r.k << ":" << fmt(r.mean_deviation);
  log << '\n';
  return ok ? 0 : 1;
}

}  // namespace

const char* version_string() { return RIDEMARKET_VERSION; }

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"example-network", "resolve-demo", "robustness-sweep",
                                                 "concentration-suite"};
  return names;
}

std::string config_hash(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) h = (h ^ c) * 1099511628211ull;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string spec_hash(const ExperimentSpec& spec) {
  std::ostringstream os;
  os << spec.name << "|ks=";
  for (long k : spec.ks) os << k << ';';
  os << "|episodes=" << spec.episodes << "|seed=" << spec.seed << "|tol=" << fmt(spec.tol)
     << "|max_iters=" << spec.max_iters;
  return config_hash(os.str());
}

std::string report_header(std::uint64_t seed, const std::string& hash) {
  return "# seed=" + std::to_string(seed) + ",version=" + version_string() + ",config_hash=" + hash;
}

ExampleNetworkResult example_network_experiment(const SolveOptions& opt) {
  auto inst = std::make_shared<const MarketInstance>(example_network_instance());
  auto state = initial_state(*inst);
  ExampleNetworkResult r;
  r.solve = solve_fluid(*inst, state, opt);
  const auto A = inst->find_location("A"), B = inst->find_location("B");
  const auto root = inst->tree.root(), rain = inst->tree.find("rain"), shine = inst->tree.find("shine");
  r.f_star = r.solve.plan.F(root, inst->route_between(A, B));
  r.price_rain = prices_from_plan(*inst, rain, r.solve.plan)[inst->route_between(B, B)];
  r.price_shine = prices_from_plan(*inst, shine, r.solve.plan)[inst->route_between(B, B)];
  r.eta_root = extract_duals(*inst, state, r.solve.plan, std::max(opt.tol, 1e-6)).Eta(root, A);
  r.phi = r.solve.value;
  SspMechanism ssp(inst, opt);
  StaticMechanism stat(inst, state, opt);
  r.ic_sigma_star = check_incentive_conditions(*inst, ssp, StrategyProfile::sigma_star(), state, 1e-4);
  r.ic_all_exit_static = check_incentive_conditions(*inst, stat, StrategyProfile::all_exit(), state, 1e-4);
  return r;
}

ResolveDemoResult resolve_demo_experiment(long k, int rollouts, std::uint64_t seed, const SolveOptions& opt) {
  auto inst = std::make_shared<const MarketInstance>(resolve_demo_instance());
  auto state = initial_state(*inst);
  const auto A1 = inst->find_location("A1"), A2 = inst->find_location("A2"), X = inst->find_location("X");
  const auto& slots = inst->outgoing(A1);
  std::size_t stay_slot = 0, exit_slot = 0;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (inst->routes[slots[s]].destination == A2) stay_slot = s;
    if (inst->routes[slots[s]].destination == X) exit_slot = s;
  }
  ResolveDemoResult r;
  r.k = k;
  r.rollouts = rollouts;
  r.phi = solve_fluid(*inst, state, opt).value;

  SimConfig cfg;
  cfg.instance = inst;
  cfg.k = k;
  cfg.seed = seed;
  cfg.episodes = rollouts;
  cfg.solve = opt;
  cfg.mechanism = MechanismKind::Static;
  r.stay = estimate_utility_to_go(cfg, A1, {TaggedAction::Relocate, stay_slot}, rollouts);
  r.exit = estimate_utility_to_go(cfg, A1, {TaggedAction::Relocate, exit_slot}, rollouts);
  r.welfare_static = mean_normalized_welfare(cfg);
  cfg.profile = StrategyProfile::all_exit();
  r.welfare_all_exit_static = mean_normalized_welfare(cfg);
  r.all_exit_loss = r.phi > 0 ? 1 - r.welfare_all_exit_static.mean / r.phi : 0.0;
  r.all_exit_ic_static = check_incentive_conditions(*inst, StaticMechanism(inst, state, opt),
                                                    StrategyProfile::all_exit(), state, 1e-4)
                             .pass;
  r.all_exit_ic_ssp =
      check_incentive_conditions(*inst, SspMechanism(inst, opt), StrategyProfile::all_exit(), state, 1e-4).pass;

  cfg.profile = StrategyProfile::sigma_star();
  cfg.mechanism = MechanismKind::Ssp;
  Simulator sim(cfg);
  const auto ride = inst->route_between(A2, A2);
  double sum = 0, sq = 0;
  for (int ep = 0; ep < rollouts; ++ep) {
    auto tr = sim.run_episode(ep);
    double w = normalized_welfare(tr);
    sum += w;
    sq += w * w;
    for (const auto& p : tr.periods) {
      if (inst->demand[p.node][ride].mean <= 0) continue;
      double expect = std::max(0.0, 1.0 - 2.0 * p.state[A2]);
      double err = std::abs(p.prices[ride] - expect);
      ++r.price_checks;
      r.worst_price_error = std::max(r.worst_price_error, err);
      if (err > 1e-6) ++r.price_mismatches;
    }
  }
  double n = rollouts;
  r.welfare_ssp.n = rollouts;
  r.welfare_ssp.mean = sum / n;
  r.welfare_ssp.se = rollouts > 1 ? std::sqrt(std::max(0.0, (sq - n * r.welfare_ssp.mean * r.welfare_ssp.mean) / (n - 1)) / n) : 0;
  return r;
}

std::vector<RobustnessRow> robustness_sweep(std::shared_ptr<const MarketInstance> inst, const std::vector<long>& ks,
                                            int episodes, int audit_episodes, std::uint64_t seed,
                                            const SolveOptions& opt) {
  double phi = solve_fluid(*inst, initial_state(*inst), opt).value;
  std::vector<RobustnessRow> rows;
  for (long k : ks) {
    SimConfig cfg;
    cfg.instance = inst;
    cfg.k = k;
    cfg.seed = seed;
    cfg.episodes = episodes;
    cfg.solve = opt;
    RobustnessRow r;
    r.k = k;
    r.phi = phi;
    r.welfare = mean_normalized_welfare(cfg);
    r.gap = std::abs(r.welfare.mean - phi);
    AuditOptions ao;
    ao.episodes = audit_episodes;
    r.audit = audit_incentives(cfg, ao);
    rows.push_back(std::move(r));
  }
  return rows;
}

ConcentrationSuite concentration_suite(long trials, std::uint64_t seed, const std::vector<std::string>& suites) {
  auto want = [&](const char* s) {
    if (suites.empty()) return true;
    for (const auto& x : suites)
      if (x == s) return true;
    return false;
  };
  ConcentrationSuite out;
  if (want("negbin")) {
    for (long R : {5L, 50L})
      for (double p : {0.2, 0.8})
        for (long k : {25L, 400L}) out.negbin.push_back(negbin_universal_check(R, p, k, trials, seed));
    for (long R : {50L, 100L, 400L})
      for (double p : {0.5, 0.8})
        for (double eps : {0.1, 0.2}) out.negbin.push_back(negbin_relative_check(R, p, eps, trials, seed));
  }
  if (want("dkw"))
    for (long n : {50L, 200L, 800L})
      for (double eps : {0.05, 0.1}) out.dkw.push_back(dkw_check(n, eps, trials, seed));
  if (want("swr"))
    for (long k : {100L, 400L, 1600L}) out.swr.push_back(swr_check({k, k}, k, std::max(100L, trials / 10), seed));
  if (want("matching"))
    out.matching = matching_concentration_sweep(MatchFixture{}, {1, 100, 400, 1600}, std::max(100L, trials / 50), seed);
  return out;
}

int run_experiment(const ExperimentSpec& spec, std::ostream& log) {
  log << report_header(spec.seed, spec_hash(spec)) << '\n';
  if (spec.name == "example-network") return example_network(spec, log);
  if (spec.name == "resolve-demo") return resolve_demo(spec, log);
  if (spec.name == "robustness-sweep") return robustness(spec, log);
  if (spec.name == "concentration-suite") return concentration(spec, log);
  throw UnknownExperiment("unknown experiment '" + spec.name + "'");
}

}  // namespace ridemarket
