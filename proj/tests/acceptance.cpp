// One line per acceptance criterion; exit status is nonzero if any line fails.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "ridemarket/concentration_lab.hpp"
#include "ridemarket/experiments.hpp"
#include "ridemarket/fluid_solver.hpp"
#include "ridemarket/instance_io.hpp"
#include "ridemarket/two_level_sim.hpp"
#include "support/match_fixtures.hpp"
#include "support/random_instances.hpp"

using namespace ridemarket;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const SolveOptions kOpt{1e-8, 50000};
constexpr int kRandomInstances = 50;

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Outcome example_network() {
  auto r = example_network_experiment(kOpt);
  std::ostringstream os;
  os << "f*=" << r.f_star << " prices=(" << r.price_rain << "," << r.price_shine << ") eta=" << r.eta_root
     << " phi=" << r.phi;
  bool ok = near(r.f_star, 3, 1e-3) && near(r.price_rain, 2, 1e-3) && near(r.price_shine, 0, 1e-3) &&
            near(r.eta_root, 1, 1e-3) && near(r.phi, 13.5, 1e-3);
  return {ok, os.str()};
}

Outcome kkt_certification() {
  double worst_kkt = 0, worst_rel = 0;
  int checked = 0;
  const SolveOptions tight{1e-12, 50000};
  for (int i = 1; i <= kRandomInstances; ++i) {
    auto rc = testing::random_case(std::uint64_t(i));
    auto rep = solve_fluid(rc.inst, rc.state, tight);
    auto d = extract_duals(rc.inst, rc.state, rep.plan, 1e-3);
    worst_kkt = std::max(worst_kkt, kkt_residuals(rc.inst, rc.state, rep.plan, d).max_residual());
    for (LocationId l = 0; l < rc.inst.num_locations(); ++l) {
      if (rc.state.supply[l] <= 0.1) continue;
      const double h = 1e-4;
      MarketState up = rc.state, down = rc.state;
      up.supply[l] += h;
      down.supply[l] -= h;
      double fd = (solve_fluid(rc.inst, up, tight).value - solve_fluid(rc.inst, down, tight).value) / (2 * h);
      double eta = d.Eta(rc.state.node, l);
      worst_rel = std::max(worst_rel, std::abs(fd - eta) / std::max(1.0, std::abs(eta)));
      ++checked;
    }
  }
  std::ostringstream os;
  os << kRandomInstances << " instances, max kkt residual " << worst_kkt << ", max rel eta error " << worst_rel
     << " over " << checked << " locations";
  return {worst_kkt <= 1e-3 && worst_rel <= 1e-2, os.str()};
}

Outcome exact_equilibrium() {
  auto ex = std::make_shared<const MarketInstance>(example_network_instance());
  SspMechanism m(ex, kOpt);
  auto base = check_incentive_conditions(*ex, m, StrategyProfile::sigma_star(), initial_state(*ex), 1e-4);
  int passed = base.pass ? 1 : 0;
  double worst = base.worst;
  for (int i = 1; i <= kRandomInstances; ++i) {
    auto rc = testing::random_case(std::uint64_t(i));
    auto inst = std::make_shared<const MarketInstance>(rc.inst);
    SspMechanism mi(inst, {1e-10, 50000});
    auto rep = check_incentive_conditions(*inst, mi, StrategyProfile::sigma_star(), rc.state, 1e-4);
    passed += rep.pass ? 1 : 0;
    worst = std::max(worst, rep.worst);
  }
  std::ostringstream os;
  os << passed << "/" << kRandomInstances + 1 << " instances pass, worst gap " << worst;
  return {passed == kRandomInstances + 1, os.str()};
}

Outcome matching_oracle() {
  auto fx = testing::tiny_fixtures();
  const long n = 100000;
  int passed = 0;
  double min_p = 1;
  for (std::size_t i = 0; i < fx.size(); ++i) {
    auto x = testing::chi_square(enumerate_match_distribution(fx[i]), testing::sample_counts(fx[i], n, 100 + i), n);
    passed += x.p > 0.001 ? 1 : 0;
    min_p = std::min(min_p, x.p);
  }
  std::ostringstream os;
  os << passed << "/" << fx.size() << " fixtures, min p " << min_p;
  return {fx.size() >= 10 && passed == int(fx.size()), os.str()};
}

Outcome matching_concentration() {
  auto rows = matching_concentration_sweep(MatchFixture{}, {100, 400, 1600}, 400, 1);
  bool ok = true;
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ok = ok && rows[i].mean_deviation <= rows[i].envelope;
    if (i > 0) ok = ok && rows[i].mean_deviation < rows[i - 1].mean_deviation;
    os << (i ? ", " : "") << "k=" << rows[i].k << " dev " << rows[i].mean_deviation << " (env " << rows[i].envelope
       << ")";
  }
  return {ok, os.str()};
}

Outcome welfare_bound() {
  int cases = 0, passed = 0;
  double worst = -1e300;
  for (auto base : {example_network_instance(), resolve_demo_instance()}) {
    auto inst = std::make_shared<const MarketInstance>(base);
    double phi = solve_fluid(*inst, initial_state(*inst), kOpt).value;
    for (auto mech : {MechanismKind::Ssp, MechanismKind::Static})
      for (auto prof : {StrategyProfile::sigma_star(), StrategyProfile::all_exit()})
        for (long k : {50L, 200L}) {
          SimConfig cfg;
          cfg.instance = inst;
          cfg.k = k;
          cfg.mechanism = mech;
          cfg.profile = prof;
          cfg.episodes = 200;
          cfg.solve = kOpt;
          auto w = mean_normalized_welfare(cfg);
          double z = (w.mean - phi) / std::max(w.se, 1e-12);
          worst = std::max(worst, z);
          ++cases;
          passed += w.mean <= phi + 3 * w.se + 1e-9 ? 1 : 0;
        }
  }
  std::ostringstream os;
  os << passed << "/" << cases << " configurations below phi + 3 se, max (W - phi)/se " << worst;
  return {passed == cases, os.str()};
}

Outcome robustness_trend() {
  auto inst = std::make_shared<const MarketInstance>(example_network_instance());
  auto rows = robustness_sweep(inst, {50, 200, 800}, 2000, 2000, 1, kOpt);
  bool ok = !rows.empty();
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i > 0) {
      ok = ok && r.gap <= rows[i - 1].gap + r.welfare.se;
      ok = ok && r.audit.eps_hat <= rows[i - 1].audit.eps_hat + r.audit.se;
    }
    os << (i ? ", " : "") << "k=" << r.k << " gap " << r.gap << " eps " << r.audit.eps_hat;
  }
  ok = ok && rows.back().audit.eps_hat <= 0.05;
  return {ok, os.str()};
}

Outcome resolve_demo() {
  auto r = resolve_demo_experiment(100, 2000, 1, kOpt);
  bool exit_better = r.stay.mean < r.exit.mean - 3 * r.stay.se;
  bool prices = r.price_checks > 0 && r.price_mismatches == 0;
  bool loss = r.all_exit_loss >= 0.5;
  std::ostringstream os;
  os << "stay " << r.stay.mean << " (se " << r.stay.se << ") vs exit " << r.exit.mean << "; ssp price identity "
     << r.price_checks - r.price_mismatches << "/" << r.price_checks << "; all-exit IC under static "
     << (r.all_exit_ic_static ? "holds" : "fails") << "; all-exit welfare " << r.welfare_all_exit_static.mean
     << " vs phi " << r.phi << " (loss " << r.all_exit_loss * 100 << "%, need >= 50%)";
  return {exit_better && prices && r.all_exit_ic_static && loss, os.str()};
}

Outcome concentration() {
  auto s = concentration_suite(100000, 1, {"negbin", "dkw"});
  int total = 0, passed = 0;
  for (const auto* v : {&s.negbin, &s.dkw})
    for (const auto& r : *v) {
      ++total;
      passed += r.pass ? 1 : 0;
    }
  std::ostringstream os;
  os << passed << "/" << total << " grid points pass at 1e5 trials";
  return {total > 0 && passed == total, os.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "example-network reproduction", 1, example_network},
      {2, "KKT/dual certification", 120, kkt_certification},
      {3, "exact equilibrium", 120, exact_equilibrium},
      {4, "matching oracle equivalence", 60, matching_oracle},
      {5, "matching concentration", 120, matching_concentration},
      {6, "welfare upper bound", 180, welfare_bound},
      {7, "robustness trend", 300, robustness_trend},
      {8, "re-solving failure demo", 120, resolve_demo},
      {9, "concentration bounds", 180, concentration},
  };
  int failed = 0;
  for (const auto& c : all) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = secs < c.budget_s;
    bool ok = o.pass && in_time;
    failed += ok ? 0 : 1;
    std::cout << "criterion " << c.id << ": " << (ok ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << " ["
              << secs << " s" << (in_time ? "" : ", over budget") << "]" << std::endl;
  }
  std::cout << (all.size() - failed) << "/" << all.size() << " criteria pass" << std::endl;
  return failed ? 1 : 0;
}
