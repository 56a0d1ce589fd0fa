#pragma once
// Random small instances for property tests: |L| <= 4, T <= 3, <= 6 scenario nodes.

#include <memory>
#include <random>

#include "ridemarket/market_model.hpp"

namespace ridemarket::testing {

struct RandomCase {
  MarketInstance inst;
  MarketState state;
};

inline RandomCase random_case(std::uint64_t seed, std::size_t max_locations = 4, int max_T = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto unif = [&](double a, double b) { return a + (b - a) * U(rng); };
  const std::size_t L = 1 + rng() % max_locations;
  const int T = 1 + static_cast<int>(rng() % max_T);

  std::vector<ScenarioNode> nodes{{"n0", 1, kInvalid, 1.0, {}}};
  std::vector<NodeId> level{0};
  for (int t = 2; t <= T; ++t) {
    std::vector<NodeId> next;
    for (std::size_t i = 0; i < level.size(); ++i) {
      std::size_t left_after = level.size() - i - 1;  // each later parent needs one child
      std::size_t room = 6 - nodes.size() - left_after;
      std::size_t kids = std::min<std::size_t>(1 + rng() % 2, room);
      double rest = 1.0;
      for (std::size_t c = 0; c < kids; ++c) {
        double p = c + 1 == kids ? rest : unif(0.2, 0.8);
        rest -= p;
        nodes.push_back({"n" + std::to_string(nodes.size()), t, level[i], p, {}});
        next.push_back(nodes.size() - 1);
      }
    }
    level = next;
  }

  RandomCase rc;
  auto& inst = rc.inst;
  for (std::size_t l = 0; l < L; ++l) inst.locations.push_back({"L" + std::to_string(l), false});
  inst.tree = ScenarioTree(nodes);
  for (std::size_t o = 0; o < L; ++o)
    for (std::size_t d = 0; d < L; ++d) {
      if (o == d) inst.routes.push_back({o, d, unif(-0.5, 1.0)});
      else if (U(rng) < 0.5) inst.routes.push_back({o, d, unif(-0.5, 1.5)});
    }
  inst.finalize();
  for (NodeId n = 0; n < inst.num_nodes(); ++n) {
    for (RouteId r = 0; r < inst.num_routes(); ++r)
      if (U(rng) < 0.6) inst.demand[n][r] = DemandSpec{unif(0.1, 3.0), std::make_shared<UniformValue>(unif(0.5, 5.0))};
    if (n != 0)
      for (std::size_t l = 0; l < L; ++l)
        if (U(rng) < 0.4) inst.entries[n][l] = unif(0.0, 2.0);
  }
  inst.C = U(rng) < 0.3 ? 0.0 : unif(0.2, 3.0);
  rc.state.node = 0;
  for (std::size_t l = 0; l < L; ++l) rc.state.supply.push_back(U(rng) < 0.2 ? 0.0 : unif(0.0, 3.0));
  return rc;
}

}  // namespace ridemarket::testing
