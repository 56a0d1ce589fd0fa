#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "ridemarket/instance_io.hpp"
#include "ridemarket/market_model.hpp"

using namespace ridemarket;

namespace {

const char* kChain = R"({
  "locations": [{"name": "A", "sink": false}, {"name": "B", "sink": false}],
  "scenario_tree": {"nodes": [
    {"id": "r", "t": 1, "parent": null, "p": 1.0},
    {"id": "a", "t": 2, "parent": "r", "p": 0.5},
    {"id": "b", "t": 2, "parent": "r", "p": 0.5},
    {"id": "aa", "t": 3, "parent": "a", "p": 0.4},
    {"id": "ab", "t": 3, "parent": "a", "p": 0.6}]},
  "routes": [{"origin": "A", "destination": "B", "cost": 0.0}, {"origin": "B", "destination": "A", "cost": 0.0},
             {"origin": "A", "destination": "A", "cost": 0.0}, {"origin": "B", "destination": "B", "cost": 0.0}],
  "demand": [{"route": ["A", "B"], "node": "a", "D_bar": 1.0, "V_max": 2.0}],
  "entries": [{"location": "A", "node": "r", "M_bar": 1.0}, {"location": "B", "node": "a", "M_bar": 0.25}],
  "C": 1.0
})";

}  // namespace

TEST_CASE("uniform value distribution") {
  UniformValue u(4.0);
  CHECK(u.quantile(0.0) == 0.0);
  CHECK(u.quantile(1.0) == 4.0);
  CHECK(u.cdf(2.0) == doctest::Approx(0.5));
  CHECK(u.mean_above(2.0) == doctest::Approx(3.0));
  CHECK(u.cdf(-1.0) == 0.0);
  CHECK(u.cdf(5.0) == 1.0);
  CHECK_THROWS_AS(UniformValue(-1.0), DomainError);
}

TEST_CASE("validate the worked examples") {
  CHECK(validate_instance(example_network_instance()).ok());
  CHECK(validate_instance(resolve_demo_instance()).ok());
}

TEST_CASE("children probabilities summing to 0.9 give one violation naming the node") {
  auto inst = example_network_instance();
  std::vector<ScenarioNode> nodes = inst.tree.nodes();
  nodes[2].p = 0.4;
  inst.tree = ScenarioTree(nodes);
  auto rep = validate_instance(inst);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].find("root") != std::string::npos);
}

TEST_CASE("route referencing an unknown location is one violation") {
  auto inst = example_network_instance();
  inst.routes.push_back({0, 17, 0.0});
  inst.finalize();
  CHECK(validate_instance(inst).violations.size() == 1);
}

TEST_CASE("sink with outgoing demand is rejected") {
  auto inst = example_network_instance();
  auto X = inst.find_location("X");
  auto r = inst.route_between(X, X);
  inst.demand[inst.tree.root()][r] = {1.0, std::make_shared<UniformValue>(1.0)};
  CHECK_FALSE(validate_instance(inst).ok());
  CHECK_THROWS_AS(require_valid(inst), InvalidInstance);
}

TEST_CASE("node probability") {
  auto ex = example_network_instance();
  const auto& t = ex.tree;
  CHECK(node_probability(t, t.root(), t.root()) == 1.0);
  CHECK(node_probability(t, t.root(), t.find("rain")) == doctest::Approx(0.5));
  auto chain = parse_instance(kChain);
  CHECK(node_probability(chain.tree, chain.tree.root(), chain.tree.find("aa")) == doctest::Approx(0.2));
  CHECK_THROWS_AS(node_probability(chain.tree, chain.tree.find("b"), chain.tree.find("aa")), NotDescendant);
  CHECK_THROWS_AS(node_probability(chain.tree, chain.tree.find("a"), chain.tree.root()), NotDescendant);
}

TEST_CASE("children probabilities sum to one on every node of random trees") {
  auto chain = parse_instance(kChain);
  for (const auto& n : chain.tree.nodes()) {
    if (n.children.empty()) continue;
    double s = 0;
    for (auto c : n.children) s += chain.tree.node(c).p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("transition supply") {
  auto ex = example_network_instance();
  auto rain = ex.tree.find("rain");
  std::vector<double> zero(ex.num_routes(), 0.0);
  auto s0 = transition_supply(ex, rain, zero);
  for (double v : s0) CHECK(v == 0.0);

  std::vector<double> f(ex.num_routes(), 0.0);
  f[ex.route_between(ex.find_location("A"), ex.find_location("B"))] = 3.0;
  auto s = transition_supply(ex, rain, f);
  CHECK(s[ex.find_location("B")] == doctest::Approx(3.0));

  auto chain = parse_instance(kChain);
  std::vector<double> cross(chain.num_routes(), 0.0);
  cross[chain.route_between(0, 1)] = 0.5;
  cross[chain.route_between(1, 0)] = 0.5;
  auto sb = transition_supply(chain, chain.tree.find("b"), cross);
  CHECK(sb[0] == doctest::Approx(0.5));
  CHECK(sb[1] == doctest::Approx(0.5));
  auto sa = transition_supply(chain, chain.tree.find("a"), std::vector<double>(chain.num_routes(), 0.0));
  CHECK(sa[0] == 0.0);
  CHECK(sa[1] == doctest::Approx(0.25));
}

TEST_CASE("transition supply is affine in flows") {
  auto chain = parse_instance(kChain);
  auto a = chain.tree.find("a");
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0, 2);
  std::vector<double> Mbar = chain.entries[a];
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> f1(chain.num_routes()), f2(chain.num_routes()), mix(chain.num_routes());
    double x = U(rng), y = U(rng);
    for (std::size_t r = 0; r < f1.size(); ++r) {
      f1[r] = U(rng);
      f2[r] = U(rng);
      mix[r] = x * f1[r] + y * f2[r];
    }
    auto s1 = transition_supply(chain, a, f1), s2 = transition_supply(chain, a, f2), sm = transition_supply(chain, a, mix);
    for (std::size_t l = 0; l < sm.size(); ++l)
      CHECK(sm[l] == doctest::Approx(x * s1[l] + y * s2[l] - (x + y - 1) * Mbar[l]).epsilon(1e-12));
  }
}

TEST_CASE("expected requests") {
  auto ex = example_network_instance();
  auto B = ex.find_location("B");
  auto r = ex.route_between(B, B);
  auto rain = ex.tree.find("rain");
  CHECK(expected_requests(ex, r, rain, 2.0) == doctest::Approx(3.0));
  CHECK(expected_requests(ex, r, rain, 0.0) == doctest::Approx(6.0));
  CHECK(expected_requests(ex, r, rain, 4.0) == 0.0);
  CHECK(expected_requests(ex, r, rain, 9.0) == 0.0);
  double prev = 1e9;
  for (int i = 0; i <= 400; ++i) {
    double v = expected_requests(ex, r, rain, i * 0.01);
    CHECK(v <= prev + 1e-15);
    if (i > 0) CHECK(std::abs(v - prev) <= 6.0 * 0.01 / 4.0 + 1e-12);
    prev = v;
  }
}

TEST_CASE("instance round trip is byte stable") {
  for (const auto& inst : {example_network_instance(), resolve_demo_instance(), parse_instance(kChain)}) {
    auto a = write_instance(inst);
    auto b = write_instance(parse_instance(a));
    CHECK(a == b);
  }
}

TEST_CASE("bundled data files load and validate") {
  for (const char* f : {"example_network.json", "resolve_demo.json"}) {
    auto inst = parse_instance_file(std::string(RIDEMARKET_DATA_DIR) + "/" + f);
    CHECK(validate_instance(inst).ok());
  }
  auto file = parse_instance_file(std::string(RIDEMARKET_DATA_DIR) + "/example_network.json");
  CHECK(write_instance(file) == write_instance(example_network_instance()));
}

TEST_CASE("parse errors name the field") {
  std::string text = kChain;
  auto pos = text.find("\"C\": 1.0");
  std::string missing = text.substr(0, pos) + "\"sampling\": {\"demand\": \"poisson\", \"entries\": \"binomial\"}" +
                        text.substr(pos + 8);
  try {
    parse_instance(missing);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("'C'") != std::string::npos);
  }
  std::string unknown = text.substr(0, pos) + "\"colour\": 3, " + text.substr(pos);
  CHECK_THROWS_AS(parse_instance(unknown), ParseError);
  CHECK_THROWS_AS(parse_instance("{ not json"), ParseError);
  CHECK_THROWS_AS(parse_instance_file("/nonexistent/file.json"), ParseError);
}

TEST_CASE("sampling families parse") {
  CHECK(parse_family("binomial") == SamplingFamily::Binomial);
  CHECK(parse_family("poisson") == SamplingFamily::Poisson);
  CHECK(parse_family("deterministic") == SamplingFamily::Deterministic);
  CHECK_FALSE(parse_family("gamma").has_value());
  auto demo = resolve_demo_instance();
  CHECK(demo.entry_family == SamplingFamily::Deterministic);
}
