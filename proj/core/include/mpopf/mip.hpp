// Convex QPs with a handful of binary columns. Small binary sets are
// enumerated exhaustively; larger ones go through best-first branch and
// bound on the continuous relaxation.
#pragma once

#include "mpopf/qp.hpp"

#include <vector>

namespace mpopf {

struct MixedBinaryProblem {
  ConvexQP base;                 // binaries appear as columns with bounds [0, 1]
  std::vector<int> binary_cols;
};

struct MipOptions {
  QpOptions qp;
  int enumeration_limit = 12;  // exhaustive up to this many binaries
  int max_binaries = 30;
  int max_nodes = 200000;
  double integrality_tol = 1e-6;
};

struct MipSolution {
  QpStatus status = QpStatus::IterationLimit;
  Eigen::VectorXd x;
  double objective = 0.0;
  std::vector<int> binaries;  // values of the binary columns at the optimum
  int nodes = 0;              // subproblems solved
  bool node_limit_hit = false;
};

MipSolution solve_mixed_binary(const MixedBinaryProblem& p, const MipOptions& opts = {});

}  // namespace mpopf
