#include "mpopf/sdp.hpp"

#include "mpopf/eig.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <utility>

namespace mpopf {

namespace {

constexpr int kDimCap = 64;

std::pair<int, int> canon(int i, int j) { return i <= j ? std::make_pair(i, j) : std::make_pair(j, i); }

void validate(const SmallSDP& p) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("solve_sdp: " + what); };
  if (p.dim < 1 || p.dim > kDimCap) fail("dimension outside [1, 64]");
  auto check_x = [&](const std::vector<std::pair<int, double>>& terms) {
    for (const auto& [k, c] : terms) {
      if (k < 0 || k >= p.dim) fail("x index out of range");
      if (!std::isfinite(c)) fail("nonfinite coefficient");
    }
  };
  auto check_xx = [&](const std::vector<XTerm>& terms) {
    for (const auto& t : terms) {
      if (t.i < 0 || t.i >= p.dim || t.j < 0 || t.j >= p.dim) fail("X index out of range");
      if (!std::isfinite(t.coeff)) fail("nonfinite coefficient");
    }
  };
  check_x(p.x_cost);
  check_xx(p.xx_cost);
  for (const auto& r : p.rows) {
    check_x(r.x);
    check_xx(r.xx);
    if (std::isnan(r.lo) || std::isnan(r.hi) || r.lo > r.hi) fail("bad row interval");
    if (r.lo == -kInf && r.hi == kInf) fail("vacuous row");
    if (r.lo == r.hi && !std::isfinite(r.lo)) fail("bad row interval");
  }
  for (const auto& b : p.blocks) {
    if (b.empty()) fail("empty cone block");
    for (int k : b) {
      if (k < 0 || k > p.dim) fail("cone block index out of range");
    }
  }
}

// Sparse linear row over the LP variables, expr >= rhs.
struct GeRow {
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;
};

}  // namespace

SmallSDP::Row& SmallSDP::add_row(double lo, double hi) {
  rows.push_back(Row{});
  rows.back().lo = lo;
  rows.back().hi = hi;
  return rows.back();
}

SdpSolution solve_sdp(const SmallSDP& p, double tol, CutPool* pool, int max_rounds) {
  validate(p);
  if (!(tol > 0.0)) throw std::invalid_argument("solve_sdp: tol must be positive");
  if (max_rounds < 1) throw std::invalid_argument("solve_sdp: max_rounds must be positive");
  if (pool) {
    if (pool->dim == -1) pool->dim = p.dim;
    if (pool->dim != p.dim) throw std::invalid_argument("solve_sdp: cut pool dimension mismatch");
  }

  // Cone blocks as sorted unique index sets; default is the full matrix.
  std::vector<std::vector<int>> blocks = p.blocks;
  if (blocks.empty()) {
    blocks.emplace_back(p.dim + 1);
    for (int k = 0; k <= p.dim; ++k) blocks.back()[k] = k;
  } else {
    for (auto& b : blocks) {
      std::sort(b.begin(), b.end());
      b.erase(std::unique(b.begin(), b.end()), b.end());
    }
  }

  // Materialize only what something references: x variables named by the
  // objective, a row, or a cone block containing the unit row; X entries
  // named by the objective, a row, or lying inside a block.
  std::vector<char> x_used(p.dim, 0);
  std::map<std::pair<int, int>, int> x_entry;  // canonical (i, j) -> LP var
  auto touch_entry = [&](int i, int j) { x_entry.emplace(canon(i, j), -1); };
  for (const auto& [k, c] : p.x_cost) x_used[k] = 1;
  for (const auto& t : p.xx_cost) touch_entry(t.i, t.j);
  for (const auto& r : p.rows) {
    for (const auto& [k, c] : r.x) x_used[k] = 1;
    for (const auto& t : r.xx) touch_entry(t.i, t.j);
  }
  for (const auto& b : blocks) {
    const bool has_unit = b.front() == 0;
    for (std::size_t a = 0; a < b.size(); ++a) {
      if (b[a] == 0) continue;
      if (has_unit) x_used[b[a] - 1] = 1;
      for (std::size_t c = a; c < b.size(); ++c) {
        if (b[c] == 0) continue;
        touch_entry(b[a] - 1, b[c] - 1);
      }
    }
  }

  // Small objective supports get every pairwise entry materialized so the
  // curvature seed rows below can reference them.
  std::vector<int> obj_sup;
  {
    std::set<int> s;
    for (const auto& t : p.xx_cost) {
      s.insert(t.i);
      s.insert(t.j);
    }
    if (s.size() >= 2 && s.size() <= 8) obj_sup.assign(s.begin(), s.end());
  }
  for (std::size_t a = 0; a < obj_sup.size(); ++a) {
    for (std::size_t c = a; c < obj_sup.size(); ++c) touch_entry(obj_sup[a], obj_sup[c]);
  }

  std::vector<int> x_var(p.dim, -1);
  int nv = 0;
  for (int k = 0; k < p.dim; ++k) {
    if (x_used[k]) x_var[k] = nv++;
  }
  for (auto& [key, var] : x_entry) var = nv++;

  auto entry_var = [&](int i, int j) {
    auto it = x_entry.find(canon(i, j));
    return it == x_entry.end() ? -1 : it->second;
  };

  // Objective on the LP variables, flipped to minimization.
  const double sign = p.maximize ? -1.0 : 1.0;
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(nv);
  for (const auto& [k, c] : p.x_cost) cost(x_var[k]) += sign * c;
  for (const auto& t : p.xx_cost) cost(entry_var(t.i, t.j)) += sign * t.coeff;

  // Base inequality rows: the problem rows plus cheap always-valid cone
  // consequences (nonnegative diagonal, 2x2 minors as sum rows) that keep
  // the first relaxations bounded.
  std::vector<GeRow> ge_rows;
  std::vector<std::pair<std::vector<std::pair<int, double>>, double>> eq_rows;
  auto lp_terms = [&](const SmallSDP::Row& r) {
    std::vector<std::pair<int, double>> terms;
    for (const auto& [k, c] : r.x) terms.emplace_back(x_var[k], c);
    for (const auto& t : r.xx) terms.emplace_back(entry_var(t.i, t.j), t.coeff);
    return terms;
  };
  for (const auto& r : p.rows) {
    auto terms = lp_terms(r);
    if (r.lo == r.hi) {
      eq_rows.emplace_back(std::move(terms), r.lo);
      continue;
    }
    if (r.lo > -kInf) ge_rows.push_back({terms, r.lo});
    if (r.hi < kInf) {
      for (auto& [v, c] : terms) c = -c;
      ge_rows.push_back({std::move(terms), -r.hi});
    }
  }

  std::set<std::array<int, 3>> seeded;
  auto seed = [&](std::array<int, 3> key, GeRow row) {
    if (seeded.insert(key).second) ge_rows.push_back(std::move(row));
  };
  for (const auto& b : blocks) {
    for (std::size_t a = 0; a < b.size(); ++a) {
      if (b[a] == 0) continue;
      const int va = entry_var(b[a] - 1, b[a] - 1);
      seed({b[a], b[a], 0}, {{{va, 1.0}}, 0.0});
      for (std::size_t c = a + 1; c < b.size(); ++c) {
        const int ia = b[a], ic = b[c];
        for (int s : {1, -1}) {
          if (ia == 0) {
            // v = (1, s) on indices {0, ic}: 1 + 2 s x + X >= 0
            seed({ia, ic, s},
                 {{{x_var[ic - 1], 2.0 * s}, {entry_var(ic - 1, ic - 1), 1.0}}, -1.0});
          } else {
            seed({ia, ic, s},
                 {{{entry_var(ia - 1, ia - 1), 1.0},
                   {entry_var(ic - 1, ic - 1), 1.0},
                   {entry_var(ia - 1, ic - 1), 2.0 * s}},
                  0.0});
          }
        }
      }
    }
  }
  // Cone rows along the objective's own curvature. Plain eigenvalue
  // cutting crawls when the relaxation keeps escaping in exactly the
  // directions the objective rewards, so hand those over before round one:
  // for each eigenvector u of the objective form on its support,
  // u'X_sup u >= 0 holds for every PSD X.
  if (!obj_sup.empty()) {
    const int m = static_cast<int>(obj_sup.size());
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(m, m);
    std::map<int, int> pos;
    for (int a = 0; a < m; ++a) pos[obj_sup[a]] = a;
    for (const auto& t : p.xx_cost) {
      const int a = pos[t.i], c = pos[t.j];
      if (a == c) {
        F(a, a) += t.coeff;
      } else {
        F(a, c) += 0.5 * t.coeff;
        F(c, a) += 0.5 * t.coeff;
      }
    }
    const SymmetricEigen ed = eigh(F);
    for (int k = 0; k < m; ++k) {
      GeRow row;
      for (int a = 0; a < m; ++a) {
        for (int c = a; c < m; ++c) {
          const double w = a == c ? ed.vectors(a, k) * ed.vectors(a, k)
                                  : 2.0 * ed.vectors(a, k) * ed.vectors(c, k);
          row.terms.emplace_back(entry_var(obj_sup[a], obj_sup[c]), w);
        }
      }
      ge_rows.push_back(std::move(row));
    }
  }

  // Turn a pooled eigenvector cut into an LP row. Cuts that name moment
  // entries this problem never materialized are skipped; dropping a valid
  // inequality only loosens the relaxation.
  auto expand_cut = [&](const CutPool::Cut& cut, GeRow& out) {
    out.terms.clear();
    out.rhs = 0.0;
    const int m = static_cast<int>(cut.idx.size());
    for (int a = 0; a < m; ++a) {
      for (int c = a; c < m; ++c) {
        const double w = (a == c ? cut.v[a] * cut.v[a] : 2.0 * cut.v[a] * cut.v[c]);
        const int ia = cut.idx[a], ic = cut.idx[c];
        if (ia == 0 && ic == 0) {
          out.rhs -= w;
        } else if (ia == 0) {
          if (x_var[ic - 1] < 0) return false;
          out.terms.emplace_back(x_var[ic - 1], w);
        } else {
          const int v = entry_var(ia - 1, ic - 1);
          if (v < 0) return false;
          out.terms.emplace_back(v, w);
        }
      }
    }
    return true;
  };

  std::vector<CutPool::Cut> local;
  std::vector<CutPool::Cut>& cuts = pool ? pool->cuts : local;

  // Strictly feasible cone point (x = 0, X = I); every enforced block of
  // its moment matrix is the identity.
  Eigen::VectorXd anchor = Eigen::VectorXd::Zero(nv);
  for (const auto& [key, var] : x_entry) {
    if (key.first == key.second) anchor(var) = 1.0;
  }

  SdpSolution out;
  QpOptions lp_opts;
  // Late rounds stack many almost-parallel rows and the interior-point
  // iteration count climbs with that degeneracy; give it headroom.
  lp_opts.max_iterations = 400;
  Eigen::VectorXd sol_v;
  double last_val = std::numeric_limits<double>::quiet_NaN();
  // A direction separated twice is one the optimum keeps running back to;
  // pruning it again would only set up another return trip, so it stays in
  // every later inner solve.
  std::vector<char> sticky(cuts.size(), 0);
  for (int round = 1; round <= max_rounds; ++round) {
    out.rounds = round;

    QpBuilder b;
    for (int v = 0; v < nv; ++v) b.add_var(-kInf, kInf, cost(v));
    for (const auto& [terms, rhs] : eq_rows) b.add_eq(terms, rhs);
    for (const auto& r : ge_rows) b.add_ge(r.terms, r.rhs);
    GeRow row;
    for (std::size_t ci = 0; ci < cuts.size(); ++ci) {
      if (!expand_cut(cuts[ci], row)) continue;
      // From the second round on, feed the solver only cuts near binding at
      // the last point. A large shared pool otherwise swamps every inner
      // solve with rows that do not matter here; a pruned cut that becomes
      // relevant again re-enters as soon as an iterate approaches it, and
      // dropping rows never breaks the outer-approximation direction.
      if (sol_v.size() > 0 && !sticky[ci]) {
        double lhs = 0.0;
        for (const auto& [var, cw] : row.terms) lhs += cw * sol_v(var);
        if (lhs - row.rhs > 0.01 * (1.0 + std::abs(lhs) + std::abs(row.rhs))) continue;
      }
      b.add_ge(row.terms, row.rhs);
    }

    const QpSolution sol = solve_qp(b.build(), lp_opts);
    if (sol.status == QpStatus::Infeasible) {
      out.status = SdpStatus::Infeasible;
      out.message = "linear relaxation infeasible";
      return out;
    }
    if (sol.status == QpStatus::Unbounded) {
      out.status = SdpStatus::NumericalFailure;
      out.message = "relaxation unbounded";
      return out;
    }
    if (sol.status != QpStatus::Optimal) {
      out.status = SdpStatus::NumericalFailure;
      out.message = "inner solve: " + (sol.message.empty() ? "iteration limit" : sol.message);
      if (!std::isnan(last_val)) {
        out.value = last_val;
        out.value_valid = true;
      }
      return out;
    }
    sol_v = sol.x;
    last_val = p.constant + sign * sol.objective;

    auto block_matrix = [&](const std::vector<int>& blk, const Eigen::VectorXd& pt) {
      const int m = static_cast<int>(blk.size());
      Eigen::MatrixXd M(m, m);
      for (int a = 0; a < m; ++a) {
        for (int c = a; c < m; ++c) {
          double val;
          const int ia = blk[a], ic = blk[c];
          if (ia == 0 && ic == 0) {
            val = 1.0;
          } else if (ia == 0) {
            val = pt(x_var[ic - 1]);
          } else {
            val = pt(entry_var(ia - 1, ic - 1));
          }
          M(a, c) = M(c, a) = val;
        }
      }
      return M;
    };
    // A direction nearly parallel to a stored cut refreshes that cut in
    // place. Stacking both would feed the inner solver rows it cannot
    // tell apart, and every eigenvector cut is valid on its own, so
    // swapping directions keeps the relaxation an outer approximation.
    auto push_cut = [&](const std::vector<int>& blk, const Eigen::VectorXd& v) {
      CutPool::Cut cut;
      cut.idx = blk;
      cut.v.assign(v.data(), v.data() + v.size());
      std::size_t twin = cuts.size();
      for (std::size_t ci = 0; ci < cuts.size(); ++ci) {
        const auto& old = cuts[ci];
        if (old.idx != cut.idx) continue;
        double dot = 0.0;
        for (int a = 0; a < v.size(); ++a) dot += old.v[a] * cut.v[a];
        if (std::abs(dot) > 1.0 - 1e-9) {
          twin = ci;
          break;
        }
      }
      if (twin < cuts.size()) {
        cuts[twin] = std::move(cut);
        sticky[twin] = 1;
      } else {
        cuts.push_back(std::move(cut));
        sticky.push_back(0);
      }
      ++out.cuts_added;
    };
    auto separate_at = [&](const Eigen::VectorXd& pt, double thresh) {
      int found = 0;
      for (const auto& blk : blocks) {
        const SymmetricEigen ed = eigh(block_matrix(blk, pt));
        for (int k = 0; k < ed.values.size() && ed.values(k) < thresh; ++k) {
          push_cut(blk, ed.vectors.col(k));
          ++found;
        }
      }
      return found;
    };

    // Eigenvalue cuts for every enforced block that dips below -tol at the
    // current point decide termination.
    const int added = separate_at(sol_v, -tol);
    if (added == 0) {
      out.status = SdpStatus::Optimal;
      out.value = p.constant + sign * sol.objective;
      out.value_valid = true;
      break;
    }

    // The cuts above support the cone far from it and barely trim the
    // relaxation, which is how plain cutting loops end up taking hundreds
    // of rounds. Walk from a strictly feasible moment matrix (x = 0,
    // X = I) toward the solution until the cone boundary and cut there
    // too; those rows pass through the boundary point and still cut off
    // the solution.
    double lo_a = 0.0, hi_a = 1.0;
    auto psd_at = [&](double alpha) {
      const Eigen::VectorXd pt = anchor + alpha * (sol_v - anchor);
      for (const auto& blk : blocks) {
        if (eigh(block_matrix(blk, pt)).values(0) < -1e-12) return false;
      }
      return true;
    };
    for (int step = 0; step < 20 && hi_a - lo_a > 1e-3; ++step) {
      const double mid = 0.5 * (lo_a + hi_a);
      (psd_at(mid) ? lo_a : hi_a) = mid;
    }
    const Eigen::VectorXd edge = anchor + hi_a * (sol_v - anchor);
    for (const auto& blk : blocks) {
      const SymmetricEigen ed = eigh(block_matrix(blk, edge));
      for (int k = 0; k < ed.values.size() && ed.values(k) < 1e-9; ++k) {
        push_cut(blk, ed.vectors.col(k));
      }
    }
  }

  if (out.status != SdpStatus::Optimal) {
    out.message = "cut rounds exhausted";
    if (!std::isnan(last_val)) {
      out.value = last_val;
      out.value_valid = true;
    }
    return out;
  }

  out.x = Eigen::VectorXd::Zero(p.dim);
  for (int k = 0; k < p.dim; ++k) {
    if (x_var[k] >= 0) out.x(k) = sol_v(x_var[k]);
  }
  out.X = Eigen::MatrixXd::Zero(p.dim, p.dim);
  for (const auto& [key, var] : x_entry) {
    out.X(key.first, key.second) = out.X(key.second, key.first) = sol_v(var);
  }
  return out;
}

}  // namespace mpopf
