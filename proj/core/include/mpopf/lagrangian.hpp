// Dual bound via constraint relaxation: the flow-balance equations and
// voltage windows are priced into the objective, splitting the problem
// into a device-side mixed-binary QP and per-period voltage minimizations
// over an annulus with a closed-form answer. The resulting concave dual
// is maximized with a proximal bundle method.
#pragma once

#include "mpopf/mip.hpp"
#include "mpopf/model.hpp"

#include <functional>
#include <iosfwd>

namespace mpopf {

// Column layout of the device block: all P columns, then all Q columns,
// then one binary per flexible device.
struct DeviceColumns {
  int devices = 0, periods = 0;
  std::vector<int> flex;   // device index per binary column, in column order

  int p_col(int device, int t) const { return device * periods + t; }
  int q_col(int device, int t) const { return devices * periods + device * periods + t; }
  int binary_col(int flex_ordinal) const {
    return 2 * devices * periods + flex_ordinal;
  }
};

// Appends the device columns with their costs, fees, windows, capability
// rows, gating and energy coupling to a fresh builder. Shared between the
// dual subproblem and the network-flow master, which both lay devices out
// first. Returns the layout; the objective constant (baseline cost terms)
// is added to the builder's constant.
DeviceColumns device_block(QpBuilder& b, const Case& c);

// Device-side subproblem: the device block priced by the flow multipliers.
// With zero multipliers this is the plain device-cost problem.
struct DeviceProblem : DeviceColumns {
  MixedBinaryProblem mip;
  double constant = 0.0;  // objective constant carried outside the QP
};

// lambda/gamma are num_buses x periods multipliers on the P/Q balances.
DeviceProblem power_subproblem(const Case& c, const Eigen::MatrixXd& lambda,
                               const Eigen::MatrixXd& gamma);

// min z'Bz subject to r_lo <= ||z||^2 <= r_hi, answered by the smallest
// eigenpair: the optimum sits at the inner or outer radius depending on
// the sign of the smallest eigenvalue.
struct AnnulusMin {
  double value = 0.0;
  Eigen::VectorXd z;
};
AnnulusMin annulus_min(const Eigen::MatrixXd& B, double r_lo, double r_hi);

// Multipliers of the relaxation, each num_buses x periods. alpha/beta
// price the lower/upper voltage windows and stay nonnegative.
struct DualPoint {
  Eigen::MatrixXd lambda, gamma, alpha, beta;

  static DualPoint zeros(const Case& c);
  Eigen::VectorXd pack() const;
  static DualPoint unpack(const Eigen::VectorXd& v, int buses, int periods);
};

// Aggregated quadratic form priced by one period's multipliers.
Eigen::MatrixXd voltage_form_matrix(const Case& c, const DualPoint& mu, int t);

struct DualEval {
  double value = 0.0;
  DualPoint supergradient;
  MipSolution devices;             // device-side minimizer
  std::vector<Eigen::VectorXd> z;  // voltage minimizer per period
};

DualEval eval_dual(const Case& c, const DualPoint& mu, const MipOptions& mip = {});

// Proximal bundle ascent for a concave function given by value/supergradient
// evaluations, over box-bounded variables.
struct ConcaveOracle {
  double value = 0.0;
  Eigen::VectorXd supergradient;
};

struct BundleOptions {
  int max_iterations = 300;
  double tolerance = 1e-6;     // stop when predicted ascent <= tol * (1 + |best|)
  double descent_ratio = 0.1;  // fraction of predicted ascent that must realize
  double prox_weight = 1.0;    // halved on ascent steps, doubled on null steps
  double prox_min = 1e-4;
  double prox_max = 1e6;
  int max_bundle = 100;        // oldest cuts merge beyond this
  std::ostream* log = nullptr;
};

struct BundleResult {
  Eigen::VectorXd point;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

BundleResult maximize_concave(const std::function<ConcaveOracle(const Eigen::VectorXd&)>& eval,
                              const Eigen::VectorXd& start, const Eigen::VectorXd& lo,
                              const BundleOptions& opts = {});

struct LagrangianOptions {
  BundleOptions bundle;
  MipOptions mip;
};

struct LagrangianResult {
  double dual_bound = 0.0;
  DualPoint multipliers;
  int iterations = 0;
  bool converged = false;
  DualEval last;  // subproblem minimizers at the returned multipliers
};

LagrangianResult maximize_dual(const Case& c, const LagrangianOptions& opts = {},
                               const DualPoint* start = nullptr);

}  // namespace mpopf
