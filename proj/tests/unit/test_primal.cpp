#include "mpopf/primal.hpp"

#include "mpopf/lagrangian.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace mpopf {
namespace {

using testing::rep;
using testing::three_bus_case;
using testing::two_bus_case;

// Generator and fixed load on the same bus, second bus empty: the only
// feasible operation is zero flow with the generator matching the load,
// so the optimum is known in closed form.
Case colocated_case() {
  Case c;
  c.name = "colocated";
  c.periods = 2;
  c.buses = {{"b0", 0.9, 1.1}, {"b1", 0.9, 1.1}};
  c.branches = {{0, 1, 1.0, -2.0}};

  Device gen;
  gen.name = "g0";
  gen.kind = DeviceKind::Generator;
  gen.bus = 0;
  gen.pmin = rep(0.0, 2);
  gen.pmax = rep(1.0, 2);
  gen.qmin = rep(-0.5, 2);
  gen.qmax = rep(0.5, 2);
  gen.cost_a = rep(0.25, 2);
  gen.cost_b = rep(1.0, 2);
  gen.cost_c = rep(0.0, 2);

  Device load;
  load.name = "l0";
  load.kind = DeviceKind::StaticLoad;
  load.bus = 0;
  load.pmin = rep(0.2, 2);
  load.pmax = rep(0.2, 2);
  load.qmin = rep(0.05, 2);
  load.qmax = rep(0.05, 2);

  c.devices = {gen, load};
  return c;
}

TEST(Primal, RecoversTheClosedFormColocatedOptimum) {
  const Case c = colocated_case();
  PrimalOptions opts;
  opts.starts = 3;
  const PrimalResult res = primal_search(c, opts);
  ASSERT_TRUE(res.found);
  EXPECT_TRUE(res.report.ok(1e-6));
  // both periods pin the generator to the load
  const double expected = 2.0 * (0.25 * 0.04 + 1.0 * 0.2);
  EXPECT_NEAR(res.upper_bound, expected, 1e-6);
  EXPECT_NEAR(res.point.P(0, 0), 0.2, 1e-7);
  EXPECT_LE(std::abs(res.point.Q(0, 1) - 0.05), 1e-7);
}

TEST(Primal, MatchesAGridOracleOnTwoBuses) {
  const Case c = two_bus_case(1);
  PrimalOptions opts;
  const PrimalResult res = primal_search(c, opts);
  ASSERT_TRUE(res.found);
  EXPECT_TRUE(res.report.ok(1e-6));

  // Enumerate voltages in polar coordinates (gauge fixed at bus 0); every
  // grid point dictates the dispatch exactly, so feasibility is a window
  // check and the cost follows directly.
  double best = kInf;
  const Device& gen = c.devices[0];
  const Device& load = c.devices[1];
  for (double r0 = 0.9; r0 <= 1.1 + 1e-12; r0 += 0.005) {
    for (double r1 = 0.9; r1 <= 1.1 + 1e-12; r1 += 0.005) {
      for (double dth = -0.5; dth <= 0.5 + 1e-12; dth += 0.002) {
        Eigen::VectorXd z(4);
        z << r0, r1 * std::cos(dth), 0.0, r1 * std::sin(dth);
        const BranchPQ f = branch_flow(c.branches[0], z);
        const double pg = f.p_from, qg = f.q_from;
        const double pl = -f.p_to, ql = -f.q_to;
        if (pg < gen.pmin[0] || pg > gen.pmax[0] || qg < gen.qmin[0] || qg > gen.qmax[0])
          continue;
        if (pl < load.pmin[0] || pl > load.pmax[0] || ql < load.qmin[0] || ql > load.qmax[0])
          continue;
        best = std::min(best, gen.cost_a[0] * pg * pg + gen.cost_b[0] * pg + gen.cost_c[0]);
      }
    }
  }
  ASSERT_LT(best, kInf);
  EXPECT_NEAR(res.upper_bound, best, 2e-3);
}

TEST(Primal, SandwichesAboveBothRelaxations) {
  const Case c = three_bus_case(2);

  NfrOptions nopts;
  nopts.tighten.tol = 1e-6;
  nopts.tighten.sdp_rounds = 25;
  const NfrResult nfr = solve_nfr(c, nopts);
  ASSERT_EQ(nfr.status, QpStatus::Optimal);

  LagrangianOptions lopts;
  lopts.bundle.max_iterations = 60;
  const LagrangianResult lr = maximize_dual(c, lopts, &nfr.price_start);

  PrimalOptions popts;
  popts.hints = &nfr.commitments;
  popts.warm = &nfr.relaxed;
  const PrimalResult res = primal_search(c, popts);
  ASSERT_TRUE(res.found);
  EXPECT_TRUE(res.report.ok(1e-6));
  EXPECT_GE(res.upper_bound + 1e-6, nfr.dual_bound);
  EXPECT_GE(res.upper_bound + 1e-6, lr.dual_bound);
}

TEST(Primal, HintsDoNotChangeTheValue) {
  const Case c = three_bus_case(2);
  PrimalOptions plain;
  const PrimalResult bare = primal_search(c, plain);
  ASSERT_TRUE(bare.found);

  NfrOptions nopts;
  nopts.tighten.tol = 1e-6;
  nopts.tighten.sdp_rounds = 25;
  const NfrResult nfr = solve_nfr(c, nopts);
  PrimalOptions hinted;
  hinted.hints = &nfr.commitments;
  const PrimalResult guided = primal_search(c, hinted);
  ASSERT_TRUE(guided.found);
  EXPECT_NEAR(bare.upper_bound, guided.upper_bound, 1e-5);
  EXPECT_LE(guided.commitments_tried, bare.commitments_tried);
}

TEST(Primal, ReportsWhenNoStartReachesFeasibility) {
  Case c = two_bus_case(1);
  // a load far beyond what the line can carry
  c.devices[1].pmin = rep(5.0, 1);
  c.devices[1].pmax = rep(5.0, 1);
  PrimalOptions opts;
  opts.starts = 2;
  opts.max_outer = 15;
  const PrimalResult res = primal_search(c, opts);
  EXPECT_FALSE(res.found);
  EXPECT_EQ(res.upper_bound, kInf);
}

}  // namespace
}  // namespace mpopf
