#include "mpopf/primal.hpp"

#include "mpopf/lagrangian.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace mpopf {

namespace {

struct InjectionForms {
  std::vector<Eigen::MatrixXd> p, q;  // per bus, quadratic forms in z
};

InjectionForms make_forms(const Case& c) {
  InjectionForms f;
  for (int i = 0; i < c.num_buses(); ++i) {
    f.p.push_back(active_injection_form(c, i));
    f.q.push_back(reactive_injection_form(c, i));
  }
  return f;
}

// Net bus powers implied by one period's voltages.
void implied_flows(const InjectionForms& forms, const Eigen::VectorXd& z, Eigen::VectorXd& yp,
                   Eigen::VectorXd& yq) {
  const int n = static_cast<int>(forms.p.size());
  yp.resize(n);
  yq.resize(n);
  for (int i = 0; i < n; ++i) {
    yp(i) = z.dot(forms.p[static_cast<size_t>(i)] * z);
    yq(i) = z.dot(forms.q[static_cast<size_t>(i)] * z);
  }
}

// One period's voltage solve: drive the implied bus powers toward the
// targets while keeping every magnitude inside its window. Runs in polar
// coordinates per bus (magnitude boxed, angle free, first angle pinned to
// kill the rotation null direction) with Levenberg-damped Gauss-Newton.
class VoltageSolver {
 public:
  VoltageSolver(const Case& c, const InjectionForms& forms) : c_(c), forms_(forms) {}

  void solve(const Eigen::VectorXd& tp, const Eigen::VectorXd& tq, Eigen::VectorXd& z) const {
    const int n = c_.num_buses();
    Eigen::VectorXd r(n), th(n);
    for (int i = 0; i < n; ++i) {
      const double e = z(i), f = z(n + i);
      r(i) = clip_mag(std::hypot(e, f), i);
      th(i) = (e == 0.0 && f == 0.0) ? 0.0 : std::atan2(f, e);
    }
    th = (th.array() - th(0)).matrix();  // gauge: first bus angle zero
    assemble(r, th, z);

    Eigen::VectorXd s(2 * n), yp, yq;
    auto residual = [&](const Eigen::VectorXd& pt) {
      implied_flows(forms_, pt, yp, yq);
      s.head(n) = tp - yp;
      s.tail(n) = tq - yq;
      return s.squaredNorm();
    };

    const int m = 2 * n - 1;  // unknowns: all magnitudes, angles past the first
    Eigen::MatrixXd J(2 * n, m);
    Eigen::VectorXd cand(2 * n), rc(n), thc(n);
    double f2 = residual(z);
    double lambda = 1e-3;
    for (int iter = 0; iter < 120; ++iter) {
      if (s.cwiseAbs().maxCoeff() < 1e-13) break;

      for (int i = 0; i < 2 * n; ++i) {
        const Eigen::MatrixXd& A = i < n ? forms_.p[static_cast<size_t>(i)]
                                         : forms_.q[static_cast<size_t>(i - n)];
        const Eigen::VectorXd g = 2.0 * (A * z);  // gradient of the implied flow
        for (int k = 0; k < n; ++k) {
          J(i, k) = -(g(k) * std::cos(th(k)) + g(n + k) * std::sin(th(k)));
        }
        for (int k = 1; k < n; ++k) {
          J(i, n + k - 1) = -(-g(k) * z(n + k) + g(n + k) * z(k));
        }
      }
      const Eigen::MatrixXd M = J.transpose() * J;
      const Eigen::VectorXd grad = J.transpose() * s;

      bool accepted = false;
      for (int tries = 0; tries < 10 && !accepted; ++tries) {
        Eigen::MatrixXd Md = M;
        Md.diagonal().array() += lambda * (M.diagonal().array() + 1e-12);
        const Eigen::VectorXd d = Md.ldlt().solve(-grad);
        for (int k = 0; k < n; ++k) rc(k) = clip_mag(r(k) + d(k), k);
        thc(0) = 0.0;
        for (int k = 1; k < n; ++k) thc(k) = th(k) + d(n + k - 1);
        assemble(rc, thc, cand);
        const double f2c = residual(cand);
        if (f2c < f2) {
          r = rc;
          th = thc;
          z = cand;
          f2 = f2c;
          lambda = std::max(lambda / 3.0, 1e-12);
          accepted = true;
        } else {
          lambda *= 8.0;
        }
      }
      if (!accepted) break;  // local stall; the caller's multipliers move next
    }
    residual(z);  // leaves s at the final point for callers that care
  }

 private:
  double clip_mag(double v, int bus) const {
    const Bus& b = c_.buses[static_cast<size_t>(bus)];
    return std::clamp(v, b.vmin, b.vmax);
  }

  static void assemble(const Eigen::VectorXd& r, const Eigen::VectorXd& th, Eigen::VectorXd& z) {
    const int n = static_cast<int>(r.size());
    z.resize(2 * n);
    for (int i = 0; i < n; ++i) {
      z(i) = r(i) * std::cos(th(i));
      z(n + i) = r(i) * std::sin(th(i));
    }
  }

  const Case& c_;
  const InjectionForms& forms_;
};

// Device dispatch under the current balance prices: the shared device block
// with binaries pinned to the commitment, plus the linear and quadratic
// terms the augmented objective contributes through each bus balance.
QpSolution dispatch(const Case& c, const std::vector<int>& on, const Eigen::MatrixXd& yp,
                    const Eigen::MatrixXd& yq, const Eigen::MatrixXd& mup,
                    const Eigen::MatrixXd& muq, double rho, const QpOptions& qopts,
                    DeviceColumns& cols) {
  QpBuilder b;
  cols = device_block(b, c);
  for (size_t f = 0; f < cols.flex.size(); ++f) {
    const double v = on[static_cast<size_t>(cols.flex[f])] ? 1.0 : 0.0;
    b.set_bounds(cols.binary_col(static_cast<int>(f)), v, v);
  }
  for (int i = 0; i < c.num_buses(); ++i) {
    const std::vector<int> devs = c.devices_at(i);
    for (int t = 0; t < c.periods; ++t) {
      for (size_t a = 0; a < devs.size(); ++a) {
        const double sa = injection_sign(c.devices[static_cast<size_t>(devs[a])].kind);
        const int pa = cols.p_col(devs[a], t);
        const int qa = cols.q_col(devs[a], t);
        b.add_linear(pa, sa * (mup(i, t) - rho * yp(i, t)));
        b.add_linear(qa, sa * (muq(i, t) - rho * yq(i, t)));
        b.add_quad(pa, pa, 0.5 * rho);
        b.add_quad(qa, qa, 0.5 * rho);
        for (size_t bd = a + 1; bd < devs.size(); ++bd) {
          const double sb = injection_sign(c.devices[static_cast<size_t>(devs[bd])].kind);
          b.add_quad(pa, cols.p_col(devs[bd], t), rho * sa * sb);
          b.add_quad(qa, cols.q_col(devs[bd], t), rho * sa * sb);
        }
      }
    }
  }
  return solve_qp(b.build(), qopts);
}

enum class StartOutcome { Feasible, Failed, CommitmentInfeasible };

StartOutcome run_start(const Case& c, const InjectionForms& forms, const VoltageSolver& vs,
                       const std::vector<int>& on, const std::vector<Eigen::VectorXd>& z0,
                       const PrimalOptions& opts, OperatingPoint& pt) {
  const int n = c.num_buses();
  const int T = c.periods;
  pt.on = on;
  pt.z = z0;
  pt.P.setZero(c.num_devices(), T);
  pt.Q.setZero(c.num_devices(), T);

  Eigen::MatrixXd yp(n, T), yq(n, T), mup = Eigen::MatrixXd::Zero(n, T), muq = mup;
  Eigen::VectorXd ypt, yqt, pinj, qinj, tp, tq;
  double rho = 50.0;
  double prev = kInf;
  DeviceColumns cols;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    for (int t = 0; t < T; ++t) {
      implied_flows(forms, pt.z[static_cast<size_t>(t)], ypt, yqt);
      yp.col(t) = ypt;
      yq.col(t) = yqt;
    }
    const QpSolution sol = dispatch(c, on, yp, yq, mup, muq, rho, opts.qp, cols);
    if (sol.status == QpStatus::Infeasible) return StartOutcome::CommitmentInfeasible;
    if (sol.status != QpStatus::Optimal) return StartOutcome::Failed;
    for (int d = 0; d < c.num_devices(); ++d) {
      for (int t = 0; t < T; ++t) {
        pt.P(d, t) = sol.x(cols.p_col(d, t));
        pt.Q(d, t) = sol.x(cols.q_col(d, t));
      }
    }

    double hmax = 0.0;
    for (int t = 0; t < T; ++t) {
      bus_injections(c, pt, t, pinj, qinj);
      tp = pinj + mup.col(t) / rho;
      tq = qinj + muq.col(t) / rho;
      vs.solve(tp, tq, pt.z[static_cast<size_t>(t)]);
      implied_flows(forms, pt.z[static_cast<size_t>(t)], ypt, yqt);
      mup.col(t) += rho * (pinj - ypt);
      muq.col(t) += rho * (qinj - yqt);
      hmax = std::max({hmax, (pinj - ypt).cwiseAbs().maxCoeff(),
                       (qinj - yqt).cwiseAbs().maxCoeff()});
    }
    if (opts.log) {
      *opts.log << "primal outer " << outer << " balance " << hmax << " rho " << rho << '\n';
    }
    if (hmax <= 1e-9) return StartOutcome::Feasible;
    if (hmax > 0.3 * prev) rho = std::min(rho * 5.0, 1e10);
    prev = hmax;
  }
  return StartOutcome::Failed;
}

std::vector<Eigen::VectorXd> flat_start(const Case& c) {
  const int n = c.num_buses();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * n);
  for (int i = 0; i < n; ++i) {
    const Bus& b = c.buses[static_cast<size_t>(i)];
    z(i) = 0.5 * (b.vmin + b.vmax);
  }
  return std::vector<Eigen::VectorXd>(static_cast<size_t>(c.periods), z);
}

}  // namespace

PrimalResult primal_search(const Case& c, const PrimalOptions& opts) {
  validate_or_throw(c);
  if (opts.starts < 1) throw std::invalid_argument("primal_search: starts must be positive");
  const InjectionForms forms = make_forms(c);
  const VoltageSolver vs(c, forms);
  const std::vector<int> flex = c.flexible_devices();
  const int F = static_cast<int>(flex.size());

  // Commitment patterns over the flexible ordinals, cheapest relaxation
  // value first when hints are present. A hint at +inf certifies the
  // commitment infeasible and drops it outright.
  std::vector<std::pair<std::vector<int>, double>> patterns;
  if (F <= 12) {
    for (int mask = 0; mask < (1 << F); ++mask) {
      std::vector<int> bits(static_cast<size_t>(F));
      for (int f = 0; f < F; ++f) bits[static_cast<size_t>(f)] = (mask >> f) & 1;
      patterns.emplace_back(std::move(bits), -kInf);
    }
  } else {
    patterns.emplace_back(std::vector<int>(static_cast<size_t>(F), 0), -kInf);
    patterns.emplace_back(std::vector<int>(static_cast<size_t>(F), 1), -kInf);
  }
  if (opts.hints) {
    for (auto& [bits, value] : patterns) {
      for (const CommitmentValue& h : *opts.hints) {
        if (h.on == bits) {
          value = h.value;
          break;
        }
      }
    }
    std::erase_if(patterns, [](const auto& p) { return p.second == kInf; });
    std::stable_sort(patterns.begin(), patterns.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
  }

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> angle(-0.25, 0.25);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  PrimalResult out;
  OperatingPoint pt;
  for (const auto& [bits, hint] : patterns) {
    if (out.found && opts.hints && hint >= out.upper_bound - 1e-9) continue;
    ++out.commitments_tried;
    std::vector<int> on(static_cast<size_t>(c.num_devices()), 1);
    for (int f = 0; f < F; ++f) on[static_cast<size_t>(flex[f])] = bits[static_cast<size_t>(f)];

    for (int attempt = 0; attempt < opts.starts; ++attempt) {
      std::vector<Eigen::VectorXd> z0;
      if (attempt == 0) {
        z0 = flat_start(c);
      } else if (attempt == 1 && opts.warm &&
                 static_cast<int>(opts.warm->z.size()) == c.periods &&
                 opts.warm->z[0].size() == 2 * c.num_buses()) {
        z0 = opts.warm->z;  // magnitudes are clipped into the windows inside
      } else {
        z0.resize(static_cast<size_t>(c.periods));
        for (auto& z : z0) {
          z.resize(2 * c.num_buses());
          for (int i = 0; i < c.num_buses(); ++i) {
            const Bus& b = c.buses[static_cast<size_t>(i)];
            const double r = b.vmin + unif(rng) * (b.vmax - b.vmin);
            const double th = i == 0 ? 0.0 : angle(rng);
            z(i) = r * std::cos(th);
            z(c.num_buses() + i) = r * std::sin(th);
          }
        }
      }

      ++out.starts_run;
      const StartOutcome res = run_start(c, forms, vs, on, z0, opts, pt);
      if (res == StartOutcome::CommitmentInfeasible) break;  // independent of the start
      if (res != StartOutcome::Feasible) continue;
      const CheckReport rep = check_point(c, pt);
      if (!rep.ok(opts.feas_tol)) continue;
      const double value = objective_value(c, pt);
      if (value < out.upper_bound) {
        out.found = true;
        out.upper_bound = value;
        out.point = pt;
        out.report = rep;
      }
      break;  // this commitment converged; move on
    }
  }
  return out;
}

}  // namespace mpopf
