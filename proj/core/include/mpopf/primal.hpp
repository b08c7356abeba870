// Feasible-point search. Commitments are enumerated (worst ones pruned by
// relaxation values when available) and for each one the continuous
// multi-period problem is attacked by an augmented-Lagrangian alternation
// between a convex device dispatch and per-period voltage solves. A
// candidate counts only after an exact constraint check.
#pragma once

#include "mpopf/model.hpp"
#include "mpopf/netflow.hpp"

#include <cstdint>
#include <iosfwd>

namespace mpopf {

struct PrimalOptions {
  int starts = 5;          // voltage starts per commitment: flat plus perturbations
  std::uint64_t seed = 0;  // drives the perturbed starts
  double feas_tol = 1e-6;  // acceptance threshold on the constraint check
  int max_outer = 40;      // multiplier updates per start
  QpOptions qp;
  // Relaxation values per commitment. Commitments are visited best value
  // first and skipped once their relaxed value cannot beat the incumbent.
  const std::vector<CommitmentValue>* hints = nullptr;
  // Extra voltage start, typically a relaxed solution.
  const OperatingPoint* warm = nullptr;
  std::ostream* log = nullptr;
};

struct PrimalResult {
  bool found = false;
  double upper_bound = kInf;
  OperatingPoint point;  // meaningful only when found
  CheckReport report;    // constraint check at the returned point
  int commitments_tried = 0;
  int starts_run = 0;
};

PrimalResult primal_search(const Case& c, const PrimalOptions& opts = {});

}  // namespace mpopf
