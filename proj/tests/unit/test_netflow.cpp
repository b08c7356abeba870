#include "mpopf/netflow.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mpopf/model.hpp"
#include "test_support.hpp"

namespace mpopf {
namespace {

using testing::rep;
using testing::three_bus_case;
using testing::two_bus_case;

double row_slack(const EnvelopeRow& r, double xi, double xj, double w) {
  return r.rhs - (r.xi * xi + r.xj * xj + r.w * w);
}

// Hand-checkable hull of w = xi * xj over [0,2] x [1,3]:
//   w >= 3 xi + 2 xj - 6,  w >= xi,  w <= xi + 2 xj - 2,  w <= 3 xi
TEST(Envelope, McCormickMatchesTheHandRows) {
  const auto rows = mccormick(0.0, 2.0, 1.0, 3.0);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_DOUBLE_EQ(rows[0].xi, 3.0);
  EXPECT_DOUBLE_EQ(rows[0].xj, 2.0);
  EXPECT_DOUBLE_EQ(rows[0].w, -1.0);
  EXPECT_DOUBLE_EQ(rows[0].rhs, 6.0);
  EXPECT_DOUBLE_EQ(rows[1].xi, 1.0);
  EXPECT_DOUBLE_EQ(rows[1].xj, 0.0);
  EXPECT_DOUBLE_EQ(rows[1].w, -1.0);
  EXPECT_DOUBLE_EQ(rows[1].rhs, 0.0);
  EXPECT_DOUBLE_EQ(rows[2].xi, -1.0);
  EXPECT_DOUBLE_EQ(rows[2].xj, -2.0);
  EXPECT_DOUBLE_EQ(rows[2].w, 1.0);
  EXPECT_DOUBLE_EQ(rows[2].rhs, -2.0);
  EXPECT_DOUBLE_EQ(rows[3].xi, -3.0);
  EXPECT_DOUBLE_EQ(rows[3].xj, 0.0);
  EXPECT_DOUBLE_EQ(rows[3].w, 1.0);
  EXPECT_DOUBLE_EQ(rows[3].rhs, 0.0);

  EXPECT_THROW(mccormick(3.0, 1.0, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(mccormick(0.0, 1.0, 2.0, -2.0), std::invalid_argument);
  EXPECT_THROW(square_envelope(1.0, 0.0), std::invalid_argument);
}

TEST(Envelope, RowsHoldForExactProductsOnRandomBoxes) {
  std::mt19937_64 rng(314);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const double li = -3.0 + 6.0 * unit(rng);
    const double ui = li + 4.0 * unit(rng);
    const double lj = -3.0 + 6.0 * unit(rng);
    const double uj = lj + 4.0 * unit(rng);
    const auto cross = mccormick(li, ui, lj, uj);
    const auto square = square_envelope(li, ui);
    for (int s = 0; s < 5; ++s) {
      const double xi = li + (ui - li) * unit(rng);
      const double xj = lj + (uj - lj) * unit(rng);
      for (const EnvelopeRow& r : cross) {
        ASSERT_GE(row_slack(r, xi, xj, xi * xj), -1e-12);
      }
      for (const EnvelopeRow& r : square) {
        ASSERT_GE(row_slack(r, xi, 0.0, xi * xi), -1e-12);
      }
      const double x0 = -3.0 + 6.0 * unit(rng);
      ASSERT_GE(row_slack(square_tangent(x0), xi, 0.0, xi * xi), -1e-12);
    }
  }
}

TEST(Envelope, DegenerateIntervalPinsTheProduct) {
  const double a = 0.7;
  const auto rows = mccormick(a, a, -2.0, 3.0);
  for (double xj : {-2.0, -0.5, 1.0, 3.0}) {
    double lo = -1e300, hi = 1e300;
    for (const EnvelopeRow& r : rows) {
      // solve each row for w given xi = a
      const double c = r.rhs - r.xi * a - r.xj * xj;
      if (r.w > 0.0) hi = std::min(hi, c / r.w);
      if (r.w < 0.0) lo = std::max(lo, c / r.w);
    }
    EXPECT_NEAR(lo, a * xj, 1e-12);
    EXPECT_NEAR(hi, a * xj, 1e-12);
  }
  const auto sq = square_envelope(0.0, 0.0);
  double lo = -1e300, hi = 1e300;
  for (const EnvelopeRow& r : sq) {
    const double c = r.rhs;
    if (r.w > 0.0) hi = std::min(hi, c / r.w);
    if (r.w < 0.0) lo = std::max(lo, c / r.w);
  }
  EXPECT_NEAR(lo, 0.0, 1e-15);
  EXPECT_NEAR(hi, 0.0, 1e-15);
}

TEST(LinkForms, MatchTheFlowOracleAndConservation) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 0.6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    Branch br;
    br.from = static_cast<int>(rng() % n);
    do {
      br.to = static_cast<int>(rng() % n);
    } while (br.to == br.from);
    br.g = 0.5 + 4.5 * unit(rng);
    br.b = -0.5 - 4.5 * unit(rng);
    const LinkForms lf = link_forms(br, n);
    for (int s = 0; s < 20; ++s) {
      Eigen::VectorXd z(2 * n);
      for (int k = 0; k < 2 * n; ++k) z(k) = gauss(rng);
      const BranchPQ pq = branch_flow(br, z);
      const double loss = branch_loss(br, z);
      ASSERT_NEAR(eval_terms(lf.p_from, z), pq.p_from, 1e-12 * (1.0 + std::abs(pq.p_from)));
      ASSERT_NEAR(eval_terms(lf.q_from, z), pq.q_from, 1e-12 * (1.0 + std::abs(pq.q_from)));
      ASSERT_NEAR(eval_terms(lf.p_to, z), pq.p_to, 1e-12 * (1.0 + std::abs(pq.p_to)));
      ASSERT_NEAR(eval_terms(lf.q_to, z), pq.q_to, 1e-12 * (1.0 + std::abs(pq.q_to)));
      ASSERT_NEAR(eval_terms(lf.loss, z), loss, 1e-12 * (1.0 + loss));
      // conservation along the link
      ASSERT_NEAR(pq.p_from + pq.p_to, loss, 1e-10);
      ASSERT_NEAR(pq.q_from + pq.q_to, (-br.b / br.g) * loss, 1e-10);
    }
  }
}

// g=1, b=-2 line at V0 = 1.0, V1 = 0.98 - 0.02i: sending end pushes 0.06,
// receiving end gets 0.0592, the difference is the 0.0008 loss.
TEST(LinkForms, TwoBusHandValues) {
  Branch br;
  br.from = 0;
  br.to = 1;
  br.g = 1.0;
  br.b = -2.0;
  Eigen::VectorXd z(4);
  z << 1.0, 0.98, 0.0, -0.02;
  const LinkForms lf = link_forms(br, 2);
  EXPECT_NEAR(eval_terms(lf.p_from, z), 0.06, 1e-15);
  EXPECT_NEAR(eval_terms(lf.p_to, z), -0.0592, 1e-15);
  EXPECT_NEAR(eval_terms(lf.loss, z), 0.0008, 1e-15);
  const BranchPQ pq = branch_flow(br, z);
  EXPECT_NEAR(pq.p_from, 0.06, 1e-15);
  EXPECT_NEAR(pq.p_to, -0.0592, 1e-15);
}

// Feasible operating point of the two-bus fixture, used by several tests:
// the load draws exactly what the line delivers at the hand voltages.
OperatingPoint two_bus_point(const Case& c) {
  OperatingPoint pt = OperatingPoint::zeros(c);
  Eigen::VectorXd z(4);
  z << 1.0, 0.98, 0.0, -0.02;
  for (int t = 0; t < c.periods; ++t) {
    pt.z[static_cast<size_t>(t)] = z;
    pt.P(0, t) = 0.06;
    pt.Q(0, t) = 0.02;
    pt.P(1, t) = 0.0592;
    pt.Q(1, t) = 0.0184;
  }
  return pt;
}

TEST(Tighten, BoxesNeverExcludeFeasibleSamples) {
  const Case c = two_bus_case(1);
  const BoxBounds boxes = tighten_boxes(c);
  ASSERT_EQ(boxes.voltage.size(), 1u);
  const VoltageBoxes& vb = boxes.voltage[0];
  const LinkBox& lk = boxes.links[0][0];
  EXPECT_EQ(vb.sdp_failures + lk.sdp_failures, 0);

  const Eigen::MatrixXd mp0 = active_injection_form(c, 0);
  const Eigen::MatrixXd mp1 = active_injection_form(c, 1);
  const Eigen::MatrixXd mq0 = reactive_injection_form(c, 0);
  const Eigen::MatrixXd mq1 = reactive_injection_form(c, 1);
  auto feasible = [&](const Eigen::VectorXd& z) {
    for (int i = 0; i < 2; ++i) {
      const double m2 = z(i) * z(i) + z(2 + i) * z(2 + i);
      if (m2 < 0.9 * 0.9 - 1e-12 || m2 > 1.1 * 1.1 + 1e-12) return false;
    }
    const double p0 = z.dot(mp0 * z), p1 = z.dot(mp1 * z);
    const double q0 = z.dot(mq0 * z), q1 = z.dot(mq1 * z);
    return p0 >= 0.0 && p0 <= 2.0 && p1 >= -0.07 && p1 <= -0.05 && q0 >= -1.0 && q0 <= 1.0 &&
           q1 >= -0.03 && q1 <= -0.01;
  };
  auto project = [](Eigen::VectorXd z) {
    for (int i = 0; i < 2; ++i) {
      const double m = std::hypot(z(i), z(2 + i));
      const double target = std::clamp(m, 0.9, 1.1);
      if (m > 1e-12 && m != target) {
        z(i) *= target / m;
        z(2 + i) *= target / m;
      }
    }
    return z;
  };
  auto contained = [&](const Eigen::VectorXd& z) {
    for (int k = 0; k < 4; ++k) {
      ASSERT_LE(std::abs(z(k)), vb.hi(k) + 1e-9);
    }
    const BranchPQ pq = branch_flow(c.branches[0], z);
    const double loss = branch_loss(c.branches[0], z);
    ASSERT_GE(pq.p_from, lk.p_from_lo - 1e-9);
    ASSERT_LE(pq.p_from, lk.p_from_hi + 1e-9);
    ASSERT_GE(pq.p_to, lk.p_to_lo - 1e-9);
    ASSERT_LE(pq.p_to, lk.p_to_hi + 1e-9);
    ASSERT_GE(pq.q_from, lk.q_from_lo - 1e-9);
    ASSERT_LE(pq.q_from, lk.q_from_hi + 1e-9);
    ASSERT_GE(pq.q_to, lk.q_to_lo - 1e-9);
    ASSERT_LE(pq.q_to, lk.q_to_hi + 1e-9);
    ASSERT_GE(loss, -1e-12);
    ASSERT_LE(loss, lk.loss_hi + 1e-9);
  };

  Eigen::VectorXd seed(4);
  seed << 1.0, 0.98, 0.0, -0.02;
  ASSERT_TRUE(feasible(seed));
  contained(seed);

  std::mt19937_64 rng(2718);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  const double sigmas[3] = {0.001, 0.004, 0.01};
  int accepted = 0;
  for (int trial = 0; trial < 4000; ++trial) {
    Eigen::VectorXd z = seed;
    const double sigma = sigmas[trial % 3];
    for (int k = 0; k < 4; ++k) z(k) += sigma * gauss(rng);
    z = project(z);
    if (!feasible(z)) continue;
    ++accepted;
    contained(z);
    // a global phase rotation keeps every constraint, so the rotated
    // samples are feasible too and must stay inside the boxes
    for (int r = 0; r < 8; ++r) {
      const double th = r < 4 ? r * M_PI / 2.0 : angle(rng);
      Eigen::VectorXd zr(4);
      for (int i = 0; i < 2; ++i) {
        zr(i) = z(i) * std::cos(th) - z(2 + i) * std::sin(th);
        zr(2 + i) = z(i) * std::sin(th) + z(2 + i) * std::cos(th);
      }
      ASSERT_TRUE(feasible(zr));
      contained(zr);
    }
  }
  ASSERT_GE(accepted, 100);
}

TEST(Tighten, FlowBoxesBeatIntervalArithmetic) {
  const Case c = two_bus_case(1);
  const BoxBounds tight = tighten_boxes(c);
  const BoxBounds init = initial_boxes(c);
  const LinkBox& a = tight.links[0][0];
  const LinkBox& b = init.links[0][0];
  // the load window caps receiving-end flow, which the intervals cannot see
  EXPECT_LT(a.p_from_hi, b.p_from_hi - 1e-3);
  EXPECT_LT(a.loss_hi, b.loss_hi - 1e-3);
  EXPECT_GT(a.p_from_lo, b.p_from_lo + 1e-3);
  // voltage boxes stay inside the magnitude caps
  for (int k = 0; k < 4; ++k) {
    EXPECT_LE(tight.voltage[0].hi(k), init.voltage[0].hi(k) + 1e-12);
  }
}

TEST(Tighten, UnionHullCoversEachPeriod) {
  Case c = three_bus_case(2);
  // make the load profile time-varying so the per-period hulls differ
  c.devices[2].pmin = {0.1, 0.16};
  c.devices[2].pmax = {0.12, 0.2};
  c.devices[1].baseline = {0.1, 0.15};
  validate_or_throw(c);

  // Bounds from capped cut rounds carry a little solver slack on top of
  // the exact inclusion, so the comparisons leave room for it.
  const double slack = 2e-3;
  CutPool pool;
  TightenOptions opts;
  opts.sdp_rounds = 25;
  opts.tol = 1e-6;
  const VoltageBoxes u = tighten_voltage_bounds(c, -1, opts, &pool);
  for (int t = 0; t < 2; ++t) {
    const VoltageBoxes vt = tighten_voltage_bounds(c, t, opts, &pool);
    for (int k = 0; k < 6; ++k) ASSERT_GE(u.hi(k), vt.hi(k) - slack);
    const auto lu = tighten_flow_bounds(c, -1, u, opts, &pool);
    const auto lt = tighten_flow_bounds(c, t, vt, opts, &pool);
    for (size_t l = 0; l < lu.size(); ++l) {
      ASSERT_GE(lu[l].p_from_hi, lt[l].p_from_hi - slack);
      ASSERT_LE(lu[l].p_from_lo, lt[l].p_from_lo + slack);
      ASSERT_GE(lu[l].q_from_hi, lt[l].q_from_hi - slack);
      ASSERT_LE(lu[l].q_from_lo, lt[l].q_from_lo + slack);
      ASSERT_GE(lu[l].loss_hi, lt[l].loss_hi - slack);
    }
  }
}

TEST(Tighten, RejectsBadArguments) {
  const Case c = two_bus_case(1);
  EXPECT_THROW(tighten_voltage_bounds(c, 5), std::invalid_argument);
  EXPECT_THROW(tighten_voltage_bounds(c, -2), std::invalid_argument);
  VoltageBoxes vb;
  vb.hi = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(tighten_flow_bounds(c, 0, vb), std::invalid_argument);

  Case big;
  big.name = "big";
  big.periods = 1;
  for (int i = 0; i < 33; ++i) big.buses.push_back({"b" + std::to_string(i), 0.9, 1.1});
  EXPECT_THROW(tighten_voltage_bounds(big, 0), std::invalid_argument);
}

TEST(Reformulation, LayoutAndRowBookkeeping) {
  const Case c = three_bus_case(2);
  const NfrMaster m = build_reformulation(c, initial_boxes(c));
  const int n = 3, L = 3, T = 2;
  EXPECT_EQ(m.cols.network_offset, 2 * 3 * T + 1);
  EXPECT_EQ(m.cols.block, 4 * n + 9 * L);
  EXPECT_EQ(m.mip.base.num_vars(), m.cols.network_offset + T * m.cols.block);
  ASSERT_EQ(m.mip.binary_cols.size(), 1u);
  EXPECT_EQ(m.mip.binary_cols[0], m.cols.dev.binary_col(0));

  // per period: 5 couplings + 2 conservation rows per link and 2 balances
  // per bus, plus one energy row for the flexible device
  EXPECT_EQ(m.mip.base.E.rows(), T * (7 * L + 2 * n) + 1);
  // per period: 3 square rows per coordinate, 4 rows per product, 2 window
  // rows per bus, plus 2 gating rows per flexible and period
  EXPECT_EQ(m.mip.base.C.rows(), T * (3 * 2 * n + 4 * 4 * L + 2 * n) + 2 * T);

  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      ASSERT_GE(m.balance_p(i, t), 0);
      ASSERT_LT(m.balance_p(i, t), m.mip.base.E.rows());
      ASSERT_GE(m.window_hi(i, t), 0);
      ASSERT_LT(m.window_hi(i, t), m.mip.base.C.rows());
    }
  }
  // generator sits at bus 0: its P column enters that balance with -1
  EXPECT_DOUBLE_EQ(m.mip.base.E(m.balance_p(0, 1), m.cols.dev.p_col(0, 1)), -1.0);
  // the flexible load draws at bus 1: +1 after the sign flip
  EXPECT_DOUBLE_EQ(m.mip.base.E(m.balance_p(1, 0), m.cols.dev.p_col(1, 0)), 1.0);
  // branch 0 leaves bus 0, so its sending-end flow enters with +1
  EXPECT_DOUBLE_EQ(m.mip.base.E(m.balance_p(0, 0), m.cols.flow_col(0, 0, NfrLayout::PFrom)),
                   1.0);
  // window rows act on the squared-coordinate columns
  EXPECT_DOUBLE_EQ(m.mip.base.C(m.window_hi(2, 1), m.cols.square_col(1, 2)), 1.0);
  EXPECT_DOUBLE_EQ(m.mip.base.C(m.window_hi(2, 1), m.cols.square_col(1, n + 2)), 1.0);
  EXPECT_DOUBLE_EQ(m.mip.base.cb(m.window_hi(2, 1)), 1.1 * 1.1);
  EXPECT_DOUBLE_EQ(m.mip.base.C(m.window_lo(2, 1), m.cols.square_col(1, 2)), -1.0);
  EXPECT_DOUBLE_EQ(m.mip.base.cb(m.window_lo(2, 1)), -0.9 * 0.9);

  BoxBounds bad = initial_boxes(c);
  bad.voltage.pop_back();
  EXPECT_THROW(build_reformulation(c, bad), std::invalid_argument);
}

TEST(Reformulation, ValueLowerBoundsAFeasiblePoint) {
  const Case c = two_bus_case(2);
  const OperatingPoint pt = two_bus_point(c);
  ASSERT_LE(check_point(c, pt).worst(), 1e-9);
  ASSERT_LE(infeasibility(c, pt), 1e-12);

  const NfrResult r = solve_nfr(c);
  ASSERT_EQ(r.status, QpStatus::Optimal);
  EXPECT_EQ(r.sdp_failures, 0);
  const double upper = objective_value(c, pt);
  EXPECT_LE(r.dual_bound, upper + 1e-7);
  EXPECT_GT(r.dual_bound, 0.0);
  ASSERT_EQ(r.commitments.size(), 1u);
  EXPECT_NEAR(r.commitments[0].value, r.dual_bound, 1e-12);

  // the relaxed point carries voltages, injections and prices of its period
  ASSERT_EQ(r.relaxed.z.size(), 2u);
  EXPECT_EQ(r.price_start.lambda.rows(), 2);
  EXPECT_EQ(r.price_start.lambda.cols(), 2);
  EXPECT_TRUE(r.price_start.alpha.minCoeff() >= 0.0);
  EXPECT_TRUE(r.price_start.beta.minCoeff() >= 0.0);
}

TEST(Reformulation, EnumeratesCommitmentsAndPicksTheCheapest) {
  const Case c = three_bus_case(2);
  const NfrResult r = solve_nfr(c);
  ASSERT_EQ(r.status, QpStatus::Optimal);
  ASSERT_EQ(r.commitments.size(), 2u);
  double best = kInf;
  int arg = -1;
  for (size_t m = 0; m < r.commitments.size(); ++m) {
    ASSERT_EQ(r.commitments[m].on.size(), 1u);
    if (r.commitments[m].value < best) {
      best = r.commitments[m].value;
      arg = static_cast<int>(m);
    }
  }
  EXPECT_NEAR(r.dual_bound, best, 1e-12);
  EXPECT_EQ(r.relaxed.on[1], r.commitments[static_cast<size_t>(arg)].on[0]);
  EXPECT_EQ(r.relaxed.on[0], 1);  // generator commitment is not a variable
}

TEST(Reformulation, TangentRoundsOnlyRaiseTheBound) {
  const Case c = three_bus_case(2);
  NfrOptions off;
  off.square_tangents = false;
  const NfrResult base = solve_nfr(c, off);
  const NfrResult strengthened = solve_nfr(c);
  ASSERT_EQ(base.status, QpStatus::Optimal);
  ASSERT_EQ(strengthened.status, QpStatus::Optimal);
  EXPECT_EQ(base.tangent_rounds_used, 0);
  EXPECT_LE(strengthened.tangent_rounds_used, 3);
  EXPECT_GE(strengthened.dual_bound, base.dual_bound - 1e-8);
}

TEST(Reformulation, ShrunkenBoxesRaiseTheBound) {
  const Case c = two_bus_case(1);
  const BoxBounds wide = tighten_boxes(c);
  const NfrMaster m1 = build_reformulation(c, wide);
  const QpSolution s1 = solve_qp(m1.mip.base);
  ASSERT_EQ(s1.status, QpStatus::Optimal);

  const OperatingPoint pt = two_bus_point(c);
  const Eigen::VectorXd& z = pt.z[0];
  const BranchPQ pq = branch_flow(c.branches[0], z);
  const double loss = branch_loss(c.branches[0], z);
  BoxBounds shrunk = wide;
  for (int k = 0; k < 4; ++k) {
    shrunk.voltage[0].hi(k) = std::min(wide.voltage[0].hi(k), std::abs(z(k)) + 0.05);
  }
  LinkBox& lk = shrunk.links[0][0];
  lk.p_from_lo = std::max(lk.p_from_lo, pq.p_from - 0.05);
  lk.p_from_hi = std::min(lk.p_from_hi, pq.p_from + 0.05);
  lk.p_to_lo = std::max(lk.p_to_lo, pq.p_to - 0.05);
  lk.p_to_hi = std::min(lk.p_to_hi, pq.p_to + 0.05);
  lk.q_from_lo = std::max(lk.q_from_lo, pq.q_from - 0.05);
  lk.q_from_hi = std::min(lk.q_from_hi, pq.q_from + 0.05);
  lk.q_to_lo = std::max(lk.q_to_lo, pq.q_to - 0.05);
  lk.q_to_hi = std::min(lk.q_to_hi, pq.q_to + 0.05);
  lk.loss_hi = std::min(lk.loss_hi, loss + 0.05);

  const NfrMaster m2 = build_reformulation(c, shrunk);
  const QpSolution s2 = solve_qp(m2.mip.base);
  ASSERT_EQ(s2.status, QpStatus::Optimal);
  EXPECT_GE(s2.objective + m2.constant, s1.objective + m1.constant - 1e-8);
  // the shrunken master still admits the feasible point, so its value
  // cannot pass the true cost either
  EXPECT_LE(s2.objective + m2.constant, objective_value(c, pt) + 1e-7);
}

TEST(Reformulation, CertifiesInfeasibleInstances) {
  Case c = two_bus_case(1);
  c.devices[1].pmin = rep(3.0, 1);  // the line cannot carry this draw
  c.devices[1].pmax = rep(3.0, 1);
  validate_or_throw(c);
  const NfrResult r = solve_nfr(c);
  EXPECT_EQ(r.status, QpStatus::Infeasible);
  EXPECT_EQ(r.dual_bound, kInf);
  EXPECT_FALSE(r.message.empty());
}

TEST(BoxDump, OneRowPerBoundWithinInitialRanges) {
  const Case c = three_bus_case(2);
  const BoxBounds boxes = tighten_boxes(c);
  std::ostringstream os;
  write_box_csv(os, c, boxes);
  std::istringstream is(os.str());
  std::string line;
  ASSERT_TRUE(std::getline(is, line));
  EXPECT_EQ(line, "period,variable,initial_lo,initial_hi,lo,hi");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    double il, ih, lo, hi;
    char var[64];
    int t;
    ASSERT_EQ(std::sscanf(line.c_str(), "%d,%63[^,],%lf,%lf,%lf,%lf", &t, var, &il, &ih, &lo,
                          &hi),
              6);
    EXPECT_GE(lo, il - 1e-9);
    EXPECT_LE(hi, ih + 1e-9);
    EXPECT_LE(lo, hi + 1e-12);
  }
  EXPECT_EQ(rows, 2 * (2 * 3 + 5 * 3));
}

}  // namespace
}  // namespace mpopf
