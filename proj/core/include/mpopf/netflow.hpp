// Network-flow relaxation: every product of voltage coordinates is replaced
// by an envelope variable bounded by its convex hull over a box, so the flow
// equations become linear and the whole problem a mixed-binary convex QP
// whose value lower-bounds the original. The boxes come from small
// semidefinite bound-tightening problems; tighter boxes mean tighter
// envelopes.
#pragma once

#include "mpopf/lagrangian.hpp"
#include "mpopf/mip.hpp"
#include "mpopf/model.hpp"
#include "mpopf/sdp.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mpopf {

// One inequality of a product envelope: xi*a + xj*b + w*cw <= rhs.
struct EnvelopeRow {
  double xi = 0.0, xj = 0.0, w = 0.0, rhs = 0.0;
};

// Four-row hull of w = xi*xj over [li,ui] x [lj,uj]. Throws on inverted
// intervals; degenerate (zero-width) ones are fine and pin w exactly.
std::vector<EnvelopeRow> mccormick(double li, double ui, double lj, double uj);

// Three-row hull of w = xi^2 over [l,u]: tangents at both ends below, the
// secant above. xj stays unused.
std::vector<EnvelopeRow> square_envelope(double l, double u);

// Extra lower tangent of w = x^2 at x0, valid everywhere.
EnvelopeRow square_tangent(double x0);

// Product-coefficient lists for one branch's flow expressions over the
// stacked voltage vector (e; f): each entry contributes coeff * z_i * z_j
// with i <= j, squares appearing once and cross products with their full
// bilinear coefficient.
struct LinkForms {
  std::vector<XTerm> p_from, q_from, p_to, q_to, loss;
};
LinkForms link_forms(const Branch& br, int num_buses);

double eval_terms(const std::vector<XTerm>& terms, const Eigen::VectorXd& z);

// Per-coordinate bounds on (e; f) for one period, symmetric around zero
// because the feasible set is invariant under flipping the sign of all
// voltages at once.
struct VoltageBoxes {
  Eigen::VectorXd hi;    // lower bounds are the negatives
  int sdp_failures = 0;  // coordinates that kept the magnitude cap
};

struct LinkBox {
  double p_from_lo = 0.0, p_from_hi = 0.0;
  double p_to_lo = 0.0, p_to_hi = 0.0;
  double q_from_lo = 0.0, q_from_hi = 0.0;
  double q_to_lo = 0.0, q_to_hi = 0.0;
  double loss_hi = 0.0;  // losses are nonnegative, so the box is [0, loss_hi]
  int sdp_failures = 0;  // objectives that fell back to interval arithmetic
};

struct TightenOptions {
  double tol = 1e-7;          // cone tolerance; derived bounds keep a 100*tol margin
  int full_matrix_buses = 4;  // up to this many buses the cone covers the full matrix,
                              // beyond it only per-branch principal blocks
  int sdp_rounds = 60;        // cut rounds per objective; a capped solve still yields a
                              // valid bound, just a looser one
  std::ostream* log = nullptr;  // fallback notices land here
};

// Valid coordinate boxes for period t; t = -1 asks for boxes valid in every
// period (the injection hulls become unions over time). A shared cut pool
// makes consecutive calls on the same case much cheaper.
VoltageBoxes tighten_voltage_bounds(const Case& c, int t, const TightenOptions& opts = {},
                                    CutPool* pool = nullptr);

// Flow boxes per branch given coordinate boxes; same period convention.
std::vector<LinkBox> tighten_flow_bounds(const Case& c, int t, const VoltageBoxes& vb,
                                         const TightenOptions& opts = {},
                                         CutPool* pool = nullptr);

struct BoxBounds {
  std::vector<VoltageBoxes> voltage;        // per period
  std::vector<std::vector<LinkBox>> links;  // per period, per branch
};

// Untightened reference boxes: magnitude caps on coordinates and interval
// arithmetic on the flow expressions.
BoxBounds initial_boxes(const Case& c);

// Tightened boxes for every period off one shared cut pool. With
// union_periods the tightening runs once with all-period hulls and the
// result is replicated, trading a little tightness for one pass.
BoxBounds tighten_boxes(const Case& c, const TightenOptions& opts = {},
                        bool union_periods = true);

// Column layout of the relaxed master: the device block first (same layout
// as the dual subproblem), then per period the voltage coordinates, their
// square envelopes, the four per-branch cross-product envelopes and the
// five link flows.
struct NfrLayout {
  DeviceColumns dev;
  int num_buses = 0, num_links = 0, periods = 0;
  int network_offset = 0;  // first column of the period-0 block
  int block = 0;           // columns per period block

  enum Cross { EE = 0, FF = 1, FE = 2, EF = 3 };
  enum Flow { PFrom = 0, PTo = 1, QFrom = 2, QTo = 3, Loss = 4 };

  int z_col(int t, int k) const { return network_offset + t * block + k; }
  int square_col(int t, int k) const {
    return network_offset + t * block + 2 * num_buses + k;
  }
  int cross_col(int t, int link, int which) const {
    return network_offset + t * block + 4 * num_buses + 4 * link + which;
  }
  int flow_col(int t, int link, int which) const {
    return network_offset + t * block + 4 * num_buses + 4 * num_links + 5 * link + which;
  }
};

// The master with bookkeeping for extracting balance and window duals.
// Redundant flow-conservation rows are kept on purpose.
struct NfrMaster {
  MixedBinaryProblem mip;
  double constant = 0.0;
  NfrLayout cols;
  Eigen::MatrixXi balance_p, balance_q;  // bus x period -> equality row
  Eigen::MatrixXi window_lo, window_hi;  // bus x period -> inequality row
};

NfrMaster build_reformulation(const Case& c, const BoxBounds& boxes);

struct NfrOptions {
  MipOptions mip;
  TightenOptions tighten;
  bool union_periods = true;
  bool square_tangents = true;  // adaptive lower tangents on the square envelopes
  int tangent_rounds = 3;
  std::ostream* log = nullptr;
};

// Relaxation value with one commitment vector fixed; infeasible commitments
// carry value = +inf and certify that no feasible point uses them.
struct CommitmentValue {
  std::vector<int> on;
  double value = 0.0;
};

struct NfrResult {
  QpStatus status = QpStatus::Optimal;  // Infeasible certifies the instance infeasible
  std::string message;
  double dual_bound = 0.0;
  OperatingPoint relaxed;  // envelope minimizer; not claimed feasible
  DualPoint price_start;   // balance/window duals, a warm start for the dual ascent
  std::vector<CommitmentValue> commitments;  // filled when binaries are enumerable
  BoxBounds boxes;
  int sdp_failures = 0;
  int tangent_rounds_used = 0;
  double tighten_seconds = 0.0, solve_seconds = 0.0;
};

NfrResult solve_nfr(const Case& c, const NfrOptions& opts = {});

// Per-variable box report, initial vs tightened, one row per bound.
void write_box_csv(std::ostream& os, const Case& c, const BoxBounds& tightened);

}  // namespace mpopf
