#include "mpopf/lagrangian.hpp"

#include "mpopf/eig.hpp"

#include <cmath>
#include <deque>
#include <ostream>
#include <stdexcept>

namespace mpopf {

DeviceColumns device_block(QpBuilder& b, const Case& c) {
  if (b.num_vars() != 0) {
    throw std::invalid_argument("device_block: builder must be fresh");
  }
  const int T = c.periods;
  const int D = c.num_devices();

  DeviceColumns cols;
  cols.devices = D;
  cols.periods = T;
  for (int d = 0; d < D; ++d) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    for (int t = 0; t < T; ++t) {
      const size_t ts = static_cast<size_t>(t);
      b.add_var(dev.pmin[ts], dev.pmax[ts]);
    }
  }
  for (int d = 0; d < D; ++d) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    for (int t = 0; t < T; ++t) {
      const size_t ts = static_cast<size_t>(t);
      b.add_var(dev.qmin[ts], dev.qmax[ts]);
    }
  }
  for (int d = 0; d < D; ++d) {
    if (c.devices[static_cast<size_t>(d)].kind == DeviceKind::Flexible) {
      cols.flex.push_back(d);
      b.add_var(0.0, 1.0, c.devices[static_cast<size_t>(d)].fee);
    }
  }

  for (int d = 0; d < D; ++d) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    for (int t = 0; t < T; ++t) {
      const size_t ts = static_cast<size_t>(t);
      const int pc = cols.p_col(d, t);
      const int qc = cols.q_col(d, t);
      if (dev.kind == DeviceKind::Generator) {
        if (c.objective == ObjectiveKind::GenerationCost) {
          b.add_quad(pc, pc, dev.cost_a[ts]);
          b.add_linear(pc, dev.cost_b[ts]);
          b.add_constant(dev.cost_c[ts]);
        } else {
          b.add_linear(pc, -c.curtail_price);
          b.add_constant(c.curtail_price * dev.pmax[ts]);
        }
      }
      if (dev.kind == DeviceKind::Flexible && c.objective == ObjectiveKind::Curtailment) {
        b.add_linear(pc, c.loss_price);
      }
      for (Eigen::Index r = 0; r < dev.cap_A.rows(); ++r) {
        b.add_le({{pc, dev.cap_A(r, 0)}, {qc, dev.cap_A(r, 1)}}, dev.cap_a(r));
      }
    }
  }

  for (size_t f = 0; f < cols.flex.size(); ++f) {
    const int d = cols.flex[f];
    const Device& dev = c.devices[static_cast<size_t>(d)];
    const int dc = cols.binary_col(static_cast<int>(f));
    std::vector<std::pair<int, double>> energy_row;
    for (int t = 0; t < T; ++t) {
      const size_t ts = static_cast<size_t>(t);
      const int pc = cols.p_col(d, t);
      // idle keeps the baseline; paying the fee opens the window:
      // (1-d) bl + d pmin <= P <= (1-d) bl + d pmax
      b.add_le({{pc, 1.0}, {dc, dev.baseline[ts] - dev.pmax[ts]}}, dev.baseline[ts]);
      b.add_le({{pc, -1.0}, {dc, dev.pmin[ts] - dev.baseline[ts]}}, -dev.baseline[ts]);
      energy_row.emplace_back(pc, 1.0);
    }
    b.add_eq(energy_row, dev.baseline_energy());
  }
  return cols;
}

DeviceProblem power_subproblem(const Case& c, const Eigen::MatrixXd& lambda,
                               const Eigen::MatrixXd& gamma) {
  const int T = c.periods;
  if (lambda.rows() != c.num_buses() || lambda.cols() != T || gamma.rows() != c.num_buses() ||
      gamma.cols() != T) {
    throw std::invalid_argument("power_subproblem: multiplier shape mismatch");
  }

  DeviceProblem out;
  QpBuilder b;
  static_cast<DeviceColumns&>(out) = device_block(b, c);
  for (int d = 0; d < out.devices; ++d) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    const double sgn = injection_sign(dev.kind);
    for (int t = 0; t < T; ++t) {
      // flow multipliers price the injections
      b.add_linear(out.p_col(d, t), -sgn * lambda(dev.bus, t));
      b.add_linear(out.q_col(d, t), -sgn * gamma(dev.bus, t));
    }
  }

  out.mip.base = b.build();
  out.constant = b.constant();
  for (size_t f = 0; f < out.flex.size(); ++f) {
    out.mip.binary_cols.push_back(out.binary_col(static_cast<int>(f)));
  }
  return out;
}

AnnulusMin annulus_min(const Eigen::MatrixXd& B, double r_lo, double r_hi) {
  if (!(r_lo >= 0.0) || !(r_hi >= r_lo)) {
    throw std::invalid_argument("annulus_min: need 0 <= r_lo <= r_hi");
  }
  const EigenPair p = min_eigenpair(B);
  AnnulusMin out;
  const double radius2 = p.value < 0.0 ? r_hi : r_lo;
  out.value = p.value * radius2;
  out.z = p.vector * std::sqrt(radius2);
  return out;
}

DualPoint DualPoint::zeros(const Case& c) {
  DualPoint mu;
  mu.lambda.setZero(c.num_buses(), c.periods);
  mu.gamma.setZero(c.num_buses(), c.periods);
  mu.alpha.setZero(c.num_buses(), c.periods);
  mu.beta.setZero(c.num_buses(), c.periods);
  return mu;
}

Eigen::VectorXd DualPoint::pack() const {
  const Eigen::Index block = lambda.size();
  Eigen::VectorXd v(4 * block);
  v.segment(0, block) = lambda.reshaped();
  v.segment(block, block) = gamma.reshaped();
  v.segment(2 * block, block) = alpha.reshaped();
  v.segment(3 * block, block) = beta.reshaped();
  return v;
}

DualPoint DualPoint::unpack(const Eigen::VectorXd& v, int buses, int periods) {
  const Eigen::Index block = static_cast<Eigen::Index>(buses) * periods;
  if (v.size() != 4 * block) throw std::invalid_argument("DualPoint::unpack: size mismatch");
  DualPoint mu;
  mu.lambda = v.segment(0, block).reshaped(buses, periods);
  mu.gamma = v.segment(block, block).reshaped(buses, periods);
  mu.alpha = v.segment(2 * block, block).reshaped(buses, periods);
  mu.beta = v.segment(3 * block, block).reshaped(buses, periods);
  return mu;
}

Eigen::MatrixXd voltage_form_matrix(const Case& c, const DualPoint& mu, int t) {
  const int n = c.num_buses();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    B += mu.lambda(i, t) * active_injection_form(c, i);
    B += mu.gamma(i, t) * reactive_injection_form(c, i);
    const double ring = mu.beta(i, t) - mu.alpha(i, t);
    B(i, i) += ring;
    B(n + i, n + i) += ring;
  }
  return B;
}

namespace {

// case-level quantities reused across every dual evaluation
struct DualContext {
  const Case& c;
  std::vector<Eigen::MatrixXd> mp, mq;
  DeviceProblem base;          // zero-multiplier device problem
  Eigen::VectorXd base_cost;   // its untouched linear objective
  double r_lo = 0.0, r_hi = 0.0;

  explicit DualContext(const Case& cc)
      : c(cc),
        base(power_subproblem(cc, Eigen::MatrixXd::Zero(cc.num_buses(), cc.periods),
                              Eigen::MatrixXd::Zero(cc.num_buses(), cc.periods))) {
    for (int i = 0; i < c.num_buses(); ++i) {
      mp.push_back(active_injection_form(c, i));
      mq.push_back(reactive_injection_form(c, i));
      r_lo += c.buses[static_cast<size_t>(i)].vmin * c.buses[static_cast<size_t>(i)].vmin;
      r_hi += c.buses[static_cast<size_t>(i)].vmax * c.buses[static_cast<size_t>(i)].vmax;
    }
    base_cost = base.mip.base.c;
  }

  DualEval eval(const DualPoint& mu, const MipOptions& mip_opts) {
    const int n = c.num_buses();
    const int T = c.periods;
    DualEval out;

    // device side: refresh the multiplier pricing in the linear term
    base.mip.base.c = base_cost;
    for (int d = 0; d < c.num_devices(); ++d) {
      const Device& dev = c.devices[static_cast<size_t>(d)];
      const double sgn = injection_sign(dev.kind);
      for (int t = 0; t < T; ++t) {
        base.mip.base.c(base.p_col(d, t)) -= sgn * mu.lambda(dev.bus, t);
        base.mip.base.c(base.q_col(d, t)) -= sgn * mu.gamma(dev.bus, t);
      }
    }
    out.devices = solve_mixed_binary(base.mip, mip_opts);
    if (out.devices.status != QpStatus::Optimal) {
      throw std::runtime_error("dual evaluation: device subproblem not solvable");
    }
    double value = out.devices.objective + base.constant;

    // voltage side, one annulus problem per period
    out.z.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2 * n, 2 * n);
      for (int i = 0; i < n; ++i) {
        if (mu.lambda(i, t) != 0.0) B += mu.lambda(i, t) * mp[static_cast<size_t>(i)];
        if (mu.gamma(i, t) != 0.0) B += mu.gamma(i, t) * mq[static_cast<size_t>(i)];
        const double ring = mu.beta(i, t) - mu.alpha(i, t);
        B(i, i) += ring;
        B(n + i, n + i) += ring;
      }
      const AnnulusMin vm = annulus_min(B, r_lo, r_hi);
      value += vm.value;
      out.z.push_back(vm.z);
    }

    // window constants priced by the ring multipliers
    for (int i = 0; i < n; ++i) {
      const Bus& bus = c.buses[static_cast<size_t>(i)];
      for (int t = 0; t < T; ++t) {
        value += mu.alpha(i, t) * bus.vmin * bus.vmin - mu.beta(i, t) * bus.vmax * bus.vmax;
      }
    }
    out.value = value;

    // supergradient = constraint residuals at the subproblem minimizers
    out.supergradient = DualPoint::zeros(c);
    Eigen::MatrixXd pinj = Eigen::MatrixXd::Zero(n, T);
    Eigen::MatrixXd qinj = Eigen::MatrixXd::Zero(n, T);
    for (int d = 0; d < c.num_devices(); ++d) {
      const Device& dev = c.devices[static_cast<size_t>(d)];
      const double sgn = injection_sign(dev.kind);
      for (int t = 0; t < T; ++t) {
        pinj(dev.bus, t) += sgn * out.devices.x(base.p_col(d, t));
        qinj(dev.bus, t) += sgn * out.devices.x(base.q_col(d, t));
      }
    }
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd& z = out.z[static_cast<size_t>(t)];
      for (int i = 0; i < n; ++i) {
        const Bus& bus = c.buses[static_cast<size_t>(i)];
        out.supergradient.lambda(i, t) = z.dot(mp[static_cast<size_t>(i)] * z) - pinj(i, t);
        out.supergradient.gamma(i, t) = z.dot(mq[static_cast<size_t>(i)] * z) - qinj(i, t);
        const double v2 = z(i) * z(i) + z(n + i) * z(n + i);
        out.supergradient.alpha(i, t) = bus.vmin * bus.vmin - v2;
        out.supergradient.beta(i, t) = v2 - bus.vmax * bus.vmax;
      }
    }
    return out;
  }
};

}  // namespace

DualEval eval_dual(const Case& c, const DualPoint& mu, const MipOptions& mip) {
  DualContext ctx(c);
  return ctx.eval(mu, mip);
}

BundleResult maximize_concave(const std::function<ConcaveOracle(const Eigen::VectorXd&)>& eval,
                              const Eigen::VectorXd& start, const Eigen::VectorXd& lo,
                              const BundleOptions& opts) {
  const Eigen::Index N = start.size();
  if (lo.size() != N) throw std::invalid_argument("maximize_concave: bound size mismatch");

  struct Cut {
    Eigen::VectorXd slope;
    double intercept = 0.0;  // cut(x) = intercept + slope' x
  };
  std::deque<Cut> cuts;
  auto add_cut = [&](const Eigen::VectorXd& x, const ConcaveOracle& o) {
    cuts.push_back({o.supergradient, o.value - o.supergradient.dot(x)});
    if (static_cast<int>(cuts.size()) > opts.max_bundle) {
      // merge the two oldest linearizations; their mean still majorizes
      Cut merged;
      merged.slope = 0.5 * (cuts[0].slope + cuts[1].slope);
      merged.intercept = 0.5 * (cuts[0].intercept + cuts[1].intercept);
      cuts.pop_front();
      cuts.front() = merged;
    }
  };

  Eigen::VectorXd center = start.cwiseMax(lo);
  ConcaveOracle best = eval(center);
  BundleResult result;
  result.point = center;
  result.value = best.value;
  add_cut(center, best);

  double u = opts.prox_weight;
  QpOptions master_opts;
  master_opts.sparse_threshold = 1 << 28;  // master rows are dense

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    result.iterations = iter + 1;

    // proximal master over (x, r): max r - (u/2)||x - center||^2
    const int k = static_cast<int>(cuts.size());
    ConvexQP master = ConvexQP::sized(static_cast<int>(N) + 1);
    for (Eigen::Index j = 0; j < N; ++j) {
      master.H(j, j) = u;
      master.c(j) = -u * center(j);
      master.lo(j) = lo(j);
    }
    master.c(N) = -1.0;
    master.C.resize(k, N + 1);
    master.cb.resize(k);
    for (int i = 0; i < k; ++i) {
      master.C.row(i).head(N) = -cuts[static_cast<size_t>(i)].slope;
      master.C(i, N) = 1.0;
      master.cb(i) = cuts[static_cast<size_t>(i)].intercept;
    }
    const QpSolution ms = solve_qp(master, master_opts);
    if (ms.status != QpStatus::Optimal) break;

    const Eigen::VectorXd candidate = ms.x.head(N).cwiseMax(lo);
    const double model_value = ms.x(N);
    const double predicted = std::max(0.0, model_value - result.value);
    if (predicted <= opts.tolerance * (1.0 + std::abs(result.value))) {
      result.converged = true;
      break;
    }

    const ConcaveOracle o = eval(candidate);
    add_cut(candidate, o);
    const bool ascent = o.value >= result.value + opts.descent_ratio * predicted;
    if (ascent) {
      center = candidate;
      result.point = candidate;
      result.value = o.value;
      u = std::max(opts.prox_min, 0.5 * u);
    } else {
      u = std::min(opts.prox_max, 2.0 * u);
    }
    if (opts.log) {
      (*opts.log) << "bundle iter " << iter + 1 << ": value " << o.value << ", best "
                  << result.value << ", " << (ascent ? "ascent" : "null") << ", prox " << u
                  << ", predicted " << predicted << "\n";
    }
  }
  return result;
}

LagrangianResult maximize_dual(const Case& c, const LagrangianOptions& opts,
                               const DualPoint* start) {
  validate_or_throw(c);
  DualContext ctx(c);
  const DualPoint mu0 = start ? *start : DualPoint::zeros(c);

  const Eigen::Index block = static_cast<Eigen::Index>(c.num_buses()) * c.periods;
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(4 * block, -kInf);
  lo.tail(2 * block).setZero();  // window multipliers stay nonnegative

  const auto oracle = [&](const Eigen::VectorXd& v) {
    const DualEval e = ctx.eval(DualPoint::unpack(v, c.num_buses(), c.periods), opts.mip);
    return ConcaveOracle{e.value, e.supergradient.pack()};
  };
  const BundleResult br = maximize_concave(oracle, mu0.pack(), lo, opts.bundle);

  LagrangianResult out;
  out.multipliers = DualPoint::unpack(br.point, c.num_buses(), c.periods);
  out.iterations = br.iterations;
  out.converged = br.converged;
  out.last = ctx.eval(out.multipliers, opts.mip);
  out.dual_bound = out.last.value;
  return out;
}

}  // namespace mpopf
