#pragma once

#include <stdexcept>
#include <string>

#include "ridemarket/market_model.hpp"

namespace ridemarket {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

MarketInstance parse_instance(const std::string& text);
MarketInstance parse_instance_file(const std::string& path);
// canonical field ordering; write(parse(write(x))) == write(x)
std::string write_instance(const MarketInstance& inst);

// Worked examples used by the experiments and tests.
MarketInstance example_network_instance();
MarketInstance resolve_demo_instance();

}  // namespace ridemarket
