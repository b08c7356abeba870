#include "mpopf/sdp.hpp"

#include "mpopf/eig.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace mpopf {
namespace {

Eigen::MatrixXd moment_matrix(const SdpSolution& s) {
  const int d = static_cast<int>(s.x.size());
  Eigen::MatrixXd m(d + 1, d + 1);
  m(0, 0) = 1.0;
  m.block(0, 1, 1, d) = s.x.transpose();
  m.block(1, 0, d, 1) = s.x;
  m.block(1, 1, d, d) = s.X;
  return m;
}

TEST(Sdp, UnitDiagonalCapsOffDiagonal) {
  // max x with X(0,0) pinned to 1: the cone forces |x| <= 1.
  SmallSDP p;
  p.dim = 1;
  p.maximize = true;
  p.x_cost = {{0, 1.0}};
  p.add_row(1.0, 1.0).xx = {{0, 0, 1.0}};

  const auto s = solve_sdp(p, 1e-8);
  ASSERT_EQ(s.status, SdpStatus::Optimal);
  EXPECT_NEAR(s.value, 1.0, 1e-6);
  EXPECT_NEAR(s.x(0), 1.0, 1e-6);
  EXPECT_NEAR(s.X(0, 0), 1.0, 1e-8);
  EXPECT_GE(min_eigenpair(moment_matrix(s)).value, -1e-7);
}

TEST(Sdp, MinimizationSideOfTheSameProblem) {
  SmallSDP p;
  p.dim = 1;
  p.maximize = false;
  p.x_cost = {{0, 1.0}};
  p.add_row(1.0, 1.0).xx = {{0, 0, 1.0}};

  const auto s = solve_sdp(p, 1e-8);
  ASSERT_EQ(s.status, SdpStatus::Optimal);
  EXPECT_NEAR(s.value, -1.0, 1e-6);
}

// Relaxation of max c'z over the unit disk plus a coordinate cap. The
// grid enumeration of the underlying feasible set gives a lower
// reference; the exact optimum is known in closed form for the bare
// disk, which the relaxation attains because the constraint is already
// convex in the moment entries.
TEST(Sdp, ShorValueDominatesGridOracle) {
  SmallSDP p;
  p.dim = 2;
  p.maximize = true;
  p.x_cost = {{0, 1.0}, {1, 2.0}};
  {
    auto& disk = p.add_row(-kInf, 1.0);
    disk.xx = {{0, 0, 1.0}, {1, 1, 1.0}};
  }
  {
    auto& cap = p.add_row(-kInf, 0.8);
    cap.x = {{1, 1.0}};
  }

  const auto s = solve_sdp(p, 1e-8);
  ASSERT_EQ(s.status, SdpStatus::Optimal);

  double grid_best = -kInf;
  for (double z0 = -1.0; z0 <= 1.0; z0 += 0.005) {
    for (double z1 = -1.0; z1 <= 1.0; z1 += 0.005) {
      if (z0 * z0 + z1 * z1 > 1.0 || z1 > 0.8) continue;
      grid_best = std::max(grid_best, z0 + 2.0 * z1);
    }
  }
  EXPECT_GE(s.value, grid_best - 1e-9);
  // optimum of the true problem: z = (0.6, 0.8) once the cap binds
  EXPECT_NEAR(s.value, 0.6 + 1.6, 2e-4);
  EXPECT_GE(min_eigenpair(moment_matrix(s)).value, -1e-7);
}

TEST(Sdp, InfeasibleSliceIsDetected) {
  // X(0,0) <= -1 contradicts the nonnegative diagonal.
  SmallSDP p;
  p.dim = 2;
  p.add_row(-kInf, -1.0).xx = {{0, 0, 1.0}};
  EXPECT_EQ(solve_sdp(p).status, SdpStatus::Infeasible);

  // x0 >= 2 with X(0,0) = 1 contradicts the cone, caught by its 2x2 minor.
  SmallSDP q;
  q.dim = 1;
  q.add_row(2.0, kInf).x = {{0, 1.0}};
  q.add_row(1.0, 1.0).xx = {{0, 0, 1.0}};
  EXPECT_EQ(solve_sdp(q).status, SdpStatus::Infeasible);
}

TEST(Sdp, UnboundedRelaxationIsANumericalFailure) {
  SmallSDP p;
  p.dim = 1;
  p.maximize = true;
  p.x_cost = {{0, 1.0}};  // nothing bounds X(0,0), so x can run away
  EXPECT_EQ(solve_sdp(p).status, SdpStatus::NumericalFailure);
}

TEST(Sdp, RejectsOversizedAndMalformedProblems) {
  SmallSDP p;
  p.dim = 65;
  EXPECT_THROW(solve_sdp(p), std::invalid_argument);

  SmallSDP q;
  q.dim = 2;
  q.x_cost = {{5, 1.0}};
  EXPECT_THROW(solve_sdp(q), std::invalid_argument);

  SmallSDP r;
  r.dim = 2;
  r.add_row(3.0, 1.0);  // crossed interval
  EXPECT_THROW(solve_sdp(r), std::invalid_argument);
}

// Random feasibility-guaranteed instances: rows are interval hulls of
// moments of sampled points, so each instance is feasible by
// construction. At the optimum the full moment matrix must be in the
// cone and every row satisfied.
TEST(Sdp, OptimumIsConeAndRowFeasible) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 4);
    std::vector<Eigen::VectorXd> pts;
    for (int s = 0; s < 6; ++s) {
      Eigen::VectorXd z(d);
      for (int k = 0; k < d; ++k) z(k) = unif(rng);
      pts.push_back(z);
    }

    SmallSDP p;
    p.dim = d;
    p.maximize = trial % 2 == 0;
    for (int k = 0; k < d; ++k) p.x_cost.emplace_back(k, unif(rng));
    for (int r = 0; r < d; ++r) {
      const int i = static_cast<int>(rng() % d);
      const int j = static_cast<int>(rng() % d);
      double lo = kInf, hi = -kInf;
      for (const auto& z : pts) {
        const double m = z(i) * z(j);
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
      auto& row = p.add_row(lo - 0.05, hi + 0.05);
      row.xx = {{i, j, 1.0}};
    }
    for (int k = 0; k < d; ++k) {
      auto& cap = p.add_row(-kInf, 1.0);
      cap.xx = {{k, k, 1.0}};
    }

    const auto s = solve_sdp(p, 1e-8);
    ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
    EXPECT_GE(min_eigenpair(moment_matrix(s)).value, -1e-7);
    for (const auto& row : p.rows) {
      double v = 0.0;
      for (const auto& [k, c] : row.x) v += c * s.x(k);
      for (const auto& t : row.xx) v += t.coeff * s.X(t.i, t.j);
      EXPECT_GE(v, row.lo - 1e-7);
      EXPECT_LE(v, row.hi + 1e-7);
    }
  }
}

TEST(Sdp, BlockRestrictionNeverTightensAMaximization) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    SmallSDP p;
    p.dim = 4;
    p.maximize = true;
    for (int k = 0; k < 4; ++k) {
      auto& cap = p.add_row(0.1, 1.0);
      cap.xx = {{k, k, 1.0}};
    }
    p.xx_cost = {{0, 1, unif(rng)}, {2, 3, unif(rng)}, {0, 3, unif(rng)}};

    const auto full = solve_sdp(p, 1e-8);
    ASSERT_EQ(full.status, SdpStatus::Optimal);

    p.blocks = {{1, 2, 4}, {3, 4}, {1, 3}};  // covers the objective entries
    const auto blocked = solve_sdp(p, 1e-8);
    ASSERT_EQ(blocked.status, SdpStatus::Optimal);

    // inexact inner solves leave each value ~1e-6 of slop, so compare at
    // solver accuracy rather than at the cone tolerance
    EXPECT_GE(blocked.value, full.value - 1e-5);
    // enforced blocks are certified even though the full matrix is not
    for (const auto& blk : p.blocks) {
      const int m = static_cast<int>(blk.size());
      Eigen::MatrixXd M(m, m);
      const Eigen::MatrixXd big = moment_matrix(blocked);
      for (int a = 0; a < m; ++a)
        for (int c = 0; c < m; ++c) M(a, c) = big(blk[a], blk[c]);
      EXPECT_GE(min_eigenpair(M).value, -1e-7);
    }
  }
}

TEST(Sdp, CutPoolShortensLaterSolves) {
  SmallSDP p;
  p.dim = 3;
  p.maximize = true;
  for (int k = 0; k < 3; ++k) {
    auto& cap = p.add_row(0.5, 1.0);
    cap.xx = {{k, k, 1.0}};
  }
  p.xx_cost = {{0, 1, 1.0}, {1, 2, -0.5}};

  const auto cold = solve_sdp(p, 1e-8);
  ASSERT_EQ(cold.status, SdpStatus::Optimal);

  CutPool pool;
  const auto first = solve_sdp(p, 1e-8, &pool);
  ASSERT_EQ(first.status, SdpStatus::Optimal);
  EXPECT_NEAR(first.value, cold.value, 1e-6);
  ASSERT_GT(pool.size(), 0u);

  const auto second = solve_sdp(p, 1e-8, &pool);
  ASSERT_EQ(second.status, SdpStatus::Optimal);
  EXPECT_NEAR(second.value, cold.value, 1e-6);
  EXPECT_LE(second.rounds, first.rounds);
  EXPECT_LE(second.cuts_added, first.cuts_added);

  // same rows, different objective: pooled cuts stay valid
  SmallSDP q = p;
  q.xx_cost = {{0, 2, 1.0}};
  const auto warm = solve_sdp(q, 1e-8, &pool);
  const auto fresh = solve_sdp(q, 1e-8);
  ASSERT_EQ(warm.status, SdpStatus::Optimal);
  ASSERT_EQ(fresh.status, SdpStatus::Optimal);
  EXPECT_NEAR(warm.value, fresh.value, 1e-6);

  CutPool wrong;
  wrong.dim = 5;
  EXPECT_THROW(solve_sdp(p, 1e-8, &wrong), std::invalid_argument);
}

}  // namespace
}  // namespace mpopf
