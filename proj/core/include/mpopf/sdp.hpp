// Small dense semidefinite programs over the moment matrix
//   M(x, X) = [[1, x'], [x, X]],  M PSD,
// with objective and constraint rows linear in (x, X). Solved by outer
// approximation: linear programs plus eigenvalue cuts v'Mv >= 0, so a
// returned maximization value never undershoots the true SDP optimum
// (and a minimization value never overshoots). That one-sided error is
// exactly what the bound-tightening callers need.
#pragma once

#include "mpopf/qp.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mpopf {

// coeff * X(i, j); X is symmetric, so (i, j) and (j, i) name the same
// entry and a quadratic form z'Qz is entered as sum_{i<=j} of
// (i == j ? Q_ii : 2 Q_ij) on (i, j).
struct XTerm {
  int i = 0;
  int j = 0;
  double coeff = 0.0;
};

struct SmallSDP {
  int dim = 0;         // number of first-order variables x, at most 64
  bool maximize = false;

  // objective: constant + x_cost'x + sum of xx_cost over X
  double constant = 0.0;
  std::vector<std::pair<int, double>> x_cost;
  std::vector<XTerm> xx_cost;

  // lo <= x part + X part <= hi; either side may be infinite
  struct Row {
    std::vector<std::pair<int, double>> x;
    std::vector<XTerm> xx;
    double lo = -kInf;
    double hi = kInf;
  };
  std::vector<Row> rows;

  // Principal submatrices of the (dim+1)-dimensional moment matrix on
  // which the cone is enforced (index 0 is the unit row, 1 + k is
  // variable k). Empty means the full matrix. Restricting to blocks
  // loosens the relaxation, which keeps the bound direction valid, and
  // lets large instances skip moment entries no constraint references.
  std::vector<std::vector<int>> blocks;

  Row& add_row(double lo, double hi);
};

enum class SdpStatus { Optimal, Infeasible, NumericalFailure };

struct SdpSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  double value = 0.0;
  // True whenever value is a usable one-sided bound. Always set on
  // Optimal. Also set when the round cap or an inner solve stops the
  // loop after at least one clean round: the last relaxation value is
  // then looser than the SDP optimum but still on the safe side.
  bool value_valid = false;
  Eigen::VectorXd x;
  Eigen::MatrixXd X;  // unreferenced entries reported as zero
  int rounds = 0;
  int cuts_added = 0;
  std::string message;
};

// Cone cuts v'Mv >= 0 hold for every PSD moment matrix, independent of
// objective and rows, so a pool warm-starts later solves that share the
// same variable layout (further objectives, other periods).
struct CutPool {
  int dim = -1;  // set on first use; later solves must match
  struct Cut {
    std::vector<int> idx;  // indices into the moment matrix, ascending
    std::vector<double> v;
  };
  std::vector<Cut> cuts;

  std::size_t size() const { return cuts.size(); }
  void clear() { cuts.clear(); dim = -1; }
};

// Outer approximation loop, at most max_rounds rounds. Statuses:
//   Optimal           all enforced blocks have min eigenvalue >= -tol
//   Infeasible        the linear relaxation is already infeasible, so the
//                     SDP is too
//   NumericalFailure  round cap hit, inner solve failed, or the
//                     relaxation is unbounded; value_valid tells whether
//                     the reported value still bounds the optimum
// Tightening the cone past the point where the value has settled is the
// expensive part, so callers that only consume the value can cap rounds
// low and accept a slightly looser bound.
SdpSolution solve_sdp(const SmallSDP& p, double tol = 1e-7, CutPool* pool = nullptr,
                      int max_rounds = 200);

}  // namespace mpopf
