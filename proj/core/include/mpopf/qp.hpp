// Convex quadratic programming over dense problem statements:
//   min 0.5 x'Hx + c'x   s.t.  E x = eb,  C x <= cb,  lo <= x <= hi
// solved with a Mehrotra predictor-corrector interior point method.
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

namespace mpopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConvexQP {
  // Objective 0.5 x'Hx + c'x; H must be symmetric positive semidefinite.
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  // Equalities E x = eb and inequalities C x <= cb; either may be empty.
  Eigen::MatrixXd E;
  Eigen::VectorXd eb;
  Eigen::MatrixXd C;
  Eigen::VectorXd cb;
  // Variable bounds; +-inf entries are allowed.
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int num_vars() const { return static_cast<int>(c.size()); }
  // Sizes H/E/C/bounds consistently for n variables, everything empty/free.
  static ConvexQP sized(int n);
};

enum class QpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct QpSolution {
  QpStatus status = QpStatus::IterationLimit;
  Eigen::VectorXd x;
  double objective = 0.0;
  // Multipliers: y for equality rows, z >= 0 for inequality rows (C x <= cb),
  // zl/zu >= 0 for the lower/upper variable bounds.
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  Eigen::VectorXd zl;
  Eigen::VectorXd zu;
  int iterations = 0;
  std::string message;
};

struct QpOptions {
  int max_iterations = 200;
  double tolerance = 1e-9;
  // Switch the reduced KKT factorization to a sparse LDLT once the
  // system dimension crosses this threshold.
  int sparse_threshold = 400;
};

QpSolution solve_qp(const ConvexQP& qp, const QpOptions& opts = {});

// Incremental construction helper. Columns are appended with bounds,
// rows with coefficient maps; quadratic terms accumulate symmetrically.
class QpBuilder {
 public:
  int add_var(double lo, double hi, double linear_cost = 0.0);
  int num_vars() const { return static_cast<int>(lo_.size()); }

  void add_quad(int i, int j, double coeff);  // adds coeff * x_i * x_j
  void add_linear(int i, double coeff);
  void add_constant(double value) { constant_ += value; }

  void add_eq(const std::vector<std::pair<int, double>>& terms, double rhs);
  // sum(terms) <= rhs
  void add_le(const std::vector<std::pair<int, double>>& terms, double rhs);
  // lhs <= sum(terms)
  void add_ge(const std::vector<std::pair<int, double>>& terms, double lhs);

  void set_bounds(int i, double lo, double hi);

  // row counts so far, usable as indices for rows about to be added
  int num_eq_rows() const { return static_cast<int>(eqs_.size()); }
  int num_le_rows() const { return static_cast<int>(les_.size()); }

  double constant() const { return constant_; }
  ConvexQP build() const;

 private:
  std::vector<double> lo_, hi_, c_;
  std::vector<std::tuple<int, int, double>> quad_;
  std::vector<std::pair<std::vector<std::pair<int, double>>, double>> eqs_;
  std::vector<std::pair<std::vector<std::pair<int, double>>, double>> les_;
  double constant_ = 0.0;
};

}  // namespace mpopf
