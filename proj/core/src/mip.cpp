#include "mpopf/mip.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace mpopf {

namespace {

void apply_fixings(ConvexQP& qp, const std::vector<int>& cols, const Eigen::VectorXd& lo,
                   const Eigen::VectorXd& hi) {
  for (size_t k = 0; k < cols.size(); ++k) {
    qp.lo(cols[k]) = lo(static_cast<Eigen::Index>(k));
    qp.hi(cols[k]) = hi(static_cast<Eigen::Index>(k));
  }
}

MipSolution enumerate_all(const MixedBinaryProblem& p, const MipOptions& opts) {
  const int k = static_cast<int>(p.binary_cols.size());
  MipSolution best;
  best.status = QpStatus::Infeasible;
  ConvexQP qp = p.base;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
    Eigen::VectorXd v(k);
    for (int j = 0; j < k; ++j) v(j) = (mask >> j) & 1 ? 1.0 : 0.0;
    apply_fixings(qp, p.binary_cols, v, v);
    const QpSolution sol = solve_qp(qp, opts.qp);
    ++best.nodes;
    if (sol.status == QpStatus::Unbounded) {
      best.status = QpStatus::Unbounded;
      return best;
    }
    if (sol.status != QpStatus::Optimal) continue;
    if (best.status != QpStatus::Optimal || sol.objective < best.objective) {
      best.status = QpStatus::Optimal;
      best.objective = sol.objective;
      best.x = sol.x;
      best.binaries.assign(static_cast<size_t>(k), 0);
      for (int j = 0; j < k; ++j) best.binaries[static_cast<size_t>(j)] = (mask >> j) & 1;
    }
  }
  return best;
}

struct Node {
  double bound = 0.0;
  std::uint64_t order = 0;   // insertion index, makes expansion deterministic
  Eigen::VectorXd lo, hi;    // per binary column
};

struct NodeWorse {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.order > b.order;
  }
};

MipSolution branch_and_bound(const MixedBinaryProblem& p, const MipOptions& opts) {
  const int k = static_cast<int>(p.binary_cols.size());
  MipSolution best;
  best.status = QpStatus::Infeasible;

  std::priority_queue<Node, std::vector<Node>, NodeWorse> open;
  std::uint64_t counter = 0;
  Node root;
  root.lo = Eigen::VectorXd::Zero(k);
  root.hi = Eigen::VectorXd::Ones(k);
  ConvexQP qp = p.base;

  auto evaluate = [&](Node& node) -> QpSolution {
    apply_fixings(qp, p.binary_cols, node.lo, node.hi);
    QpSolution sol = solve_qp(qp, opts.qp);
    ++best.nodes;
    node.bound = sol.objective;
    return sol;
  };

  // most fractional binary, ties broken to the lowest index
  auto pick_branch = [&](const Eigen::VectorXd& x, const Node& node) {
    int arg = -1;
    double most = opts.integrality_tol;
    for (int j = 0; j < k; ++j) {
      if (node.lo(j) == node.hi(j)) continue;
      const double v = x(p.binary_cols[static_cast<size_t>(j)]);
      const double frac = std::abs(v - std::round(v));
      if (frac > most) {
        most = frac;
        arg = j;
      }
    }
    return arg;
  };

  auto accept = [&](const QpSolution& sol, const Node& node) {
    if (best.status == QpStatus::Optimal && sol.objective >= best.objective - 1e-12) return;
    best.status = QpStatus::Optimal;
    best.objective = sol.objective;
    best.x = sol.x;
    best.binaries.assign(static_cast<size_t>(k), 0);
    for (int j = 0; j < k; ++j) {
      const double v = node.lo(j) == node.hi(j)
                           ? node.lo(j)
                           : sol.x(p.binary_cols[static_cast<size_t>(j)]);
      best.binaries[static_cast<size_t>(j)] = v > 0.5 ? 1 : 0;
    }
  };

  {
    const QpSolution sol = evaluate(root);
    if (sol.status == QpStatus::Unbounded) {
      best.status = QpStatus::Unbounded;
      return best;
    }
    if (sol.status == QpStatus::Optimal) {
      if (pick_branch(sol.x, root) < 0) {
        accept(sol, root);
        return best;
      }
      root.order = counter++;
      open.push(root);
    }
  }

  while (!open.empty()) {
    if (best.nodes >= opts.max_nodes) {
      best.node_limit_hit = true;
      break;
    }
    Node node = open.top();
    open.pop();
    if (best.status == QpStatus::Optimal && node.bound >= best.objective - 1e-12) continue;

    // re-solve to recover the relaxation point at this node
    const QpSolution sol = evaluate(node);
    if (sol.status == QpStatus::Unbounded) {
      best.status = QpStatus::Unbounded;
      return best;
    }
    if (sol.status != QpStatus::Optimal) continue;
    if (best.status == QpStatus::Optimal && sol.objective >= best.objective - 1e-12) continue;
    const int j = pick_branch(sol.x, node);
    if (j < 0) {
      accept(sol, node);
      continue;
    }
    for (double v : {0.0, 1.0}) {
      Node child = node;
      child.lo(j) = v;
      child.hi(j) = v;
      child.bound = sol.objective;
      child.order = counter++;
      open.push(child);
    }
  }
  return best;
}

}  // namespace

MipSolution solve_mixed_binary(const MixedBinaryProblem& p, const MipOptions& opts) {
  const int k = static_cast<int>(p.binary_cols.size());
  if (k > opts.max_binaries) {
    throw std::invalid_argument("solve_mixed_binary: too many binary columns (" +
                                std::to_string(k) + ")");
  }
  for (int col : p.binary_cols) {
    if (col < 0 || col >= p.base.num_vars()) {
      throw std::invalid_argument("solve_mixed_binary: binary column out of range");
    }
  }
  if (k == 0) {
    const QpSolution sol = solve_qp(p.base, opts.qp);
    MipSolution out;
    out.status = sol.status;
    out.x = sol.x;
    out.objective = sol.objective;
    out.nodes = 1;
    return out;
  }
  if (k <= opts.enumeration_limit) return enumerate_all(p, opts);
  return branch_and_bound(p, opts);
}

}  // namespace mpopf
