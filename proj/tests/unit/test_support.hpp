// Shared fixture cases for the unit tests.
#pragma once

#include "mpopf/model.hpp"

#include <vector>

namespace mpopf::testing {

inline std::vector<double> rep(double v, int T) {
  return std::vector<double>(static_cast<size_t>(T), v);
}

// One generator feeding one static load over a single line (g=1, b=-2).
inline Case two_bus_case(int periods = 1) {
  Case c;
  c.name = "two_bus";
  c.periods = periods;
  c.buses = {{"b0", 0.9, 1.1}, {"b1", 0.9, 1.1}};
  c.branches = {{0, 1, 1.0, -2.0}};

  Device gen;
  gen.name = "g0";
  gen.kind = DeviceKind::Generator;
  gen.bus = 0;
  gen.pmin = rep(0.0, periods);
  gen.pmax = rep(2.0, periods);
  gen.qmin = rep(-1.0, periods);
  gen.qmax = rep(1.0, periods);
  gen.cost_a = rep(0.5, periods);
  gen.cost_b = rep(1.0, periods);
  gen.cost_c = rep(0.0, periods);

  Device load;
  load.name = "l0";
  load.kind = DeviceKind::StaticLoad;
  load.bus = 1;
  load.pmin = rep(0.05, periods);
  load.pmax = rep(0.07, periods);
  load.qmin = rep(0.01, periods);
  load.qmax = rep(0.03, periods);

  c.devices = {gen, load};
  return c;
}

// Triangle network with a generator, a flexible load and a static load.
inline Case three_bus_case(int periods = 2) {
  Case c;
  c.name = "three_bus";
  c.periods = periods;
  c.buses = {{"b0", 0.9, 1.1}, {"b1", 0.9, 1.1}, {"b2", 0.9, 1.1}};
  c.branches = {{0, 1, 1.5, -4.0}, {1, 2, 2.0, -5.0}, {0, 2, 1.0, -3.0}};

  Device gen;
  gen.name = "g0";
  gen.kind = DeviceKind::Generator;
  gen.bus = 0;
  gen.pmin = rep(0.0, periods);
  gen.pmax = rep(1.5, periods);
  gen.qmin = rep(-1.0, periods);
  gen.qmax = rep(1.0, periods);
  gen.cost_a = rep(0.2, periods);
  gen.cost_b = rep(0.8, periods);
  gen.cost_c = rep(0.1, periods);

  Device flex;
  flex.name = "d0";
  flex.kind = DeviceKind::Flexible;
  flex.bus = 1;
  flex.pmin = rep(0.02, periods);
  flex.pmax = rep(0.2, periods);
  flex.qmin = rep(-0.05, periods);
  flex.qmax = rep(0.05, periods);
  flex.baseline = rep(0.1, periods);
  flex.fee = 0.05;

  Device load;
  load.name = "l0";
  load.kind = DeviceKind::StaticLoad;
  load.bus = 2;
  load.pmin = rep(0.1, periods);
  load.pmax = rep(0.12, periods);
  load.qmin = rep(0.02, periods);
  load.qmax = rep(0.04, periods);

  c.devices = {gen, flex, load};
  return c;
}

}  // namespace mpopf::testing
