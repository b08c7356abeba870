#include "mpopf/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mpopf {

std::vector<int> Case::devices_at(int bus) const {
  std::vector<int> out;
  for (int d = 0; d < num_devices(); ++d) {
    if (devices[static_cast<size_t>(d)].bus == bus) out.push_back(d);
  }
  return out;
}

std::vector<int> Case::flexible_devices() const {
  std::vector<int> out;
  for (int d = 0; d < num_devices(); ++d) {
    if (devices[static_cast<size_t>(d)].kind == DeviceKind::Flexible) out.push_back(d);
  }
  return out;
}

double injection_sign(DeviceKind kind) {
  return kind == DeviceKind::Generator ? 1.0 : -1.0;
}

double Device::baseline_energy() const {
  double total = 0.0;
  for (double b : baseline) total += b;
  return total;
}

namespace {

bool connected(const Case& c) {
  const int n = c.num_buses();
  if (n == 0) return false;
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const auto& br : c.branches) {
      const int v = br.from == u ? br.to : (br.to == u ? br.from : -1);
      if (v >= 0 && !seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        stack.push_back(v);
      }
    }
  }
  for (char s : seen) {
    if (!s) return false;
  }
  return true;
}

bool finite_window(const std::vector<double>& lo, const std::vector<double>& hi, size_t T) {
  if (lo.size() != T || hi.size() != T) return false;
  for (size_t t = 0; t < T; ++t) {
    if (!std::isfinite(lo[t]) || !std::isfinite(hi[t]) || lo[t] > hi[t]) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> validate(const Case& c) {
  std::vector<std::string> problems;
  auto bad = [&](const std::string& msg) { problems.push_back(msg); };

  if (c.periods < 1) bad("horizon must cover at least one period");
  if (c.num_buses() == 0) bad("case has no buses");
  const size_t T = static_cast<size_t>(std::max(c.periods, 1));

  for (size_t i = 0; i < c.buses.size(); ++i) {
    const Bus& b = c.buses[i];
    if (!(b.vmin > 0.0) || !std::isfinite(b.vmax) || b.vmax < b.vmin) {
      bad("bus '" + b.name + "': voltage window must satisfy 0 < vmin <= vmax");
    }
  }
  for (size_t l = 0; l < c.branches.size(); ++l) {
    const Branch& br = c.branches[l];
    std::ostringstream tag;
    tag << "branch " << l << " (" << br.from << "-" << br.to << ")";
    if (br.from < 0 || br.from >= c.num_buses() || br.to < 0 || br.to >= c.num_buses()) {
      bad(tag.str() + ": endpoint out of range");
      continue;
    }
    if (br.from == br.to) bad(tag.str() + ": self loop");
    if (!(br.g > 0.0)) bad(tag.str() + ": conductance must be positive");
    if (!(br.b <= 0.0) || !std::isfinite(br.b)) bad(tag.str() + ": susceptance must be <= 0");
  }
  if (!c.branches.empty() && c.num_buses() > 0 && !connected(c)) {
    bad("network graph is not connected");
  }

  for (const Device& d : c.devices) {
    const std::string tag = "device '" + d.name + "'";
    if (d.bus < 0 || d.bus >= c.num_buses()) bad(tag + ": bus out of range");
    if (!finite_window(d.pmin, d.pmax, T)) bad(tag + ": bad real-power window");
    if (!finite_window(d.qmin, d.qmax, T)) bad(tag + ": bad reactive-power window");
    if (d.cap_A.size() > 0 || d.cap_a.size() > 0) {
      if (d.cap_A.cols() != 2 || d.cap_A.rows() != d.cap_a.size()) {
        bad(tag + ": capability rows must be k x 2 with matching right-hand side");
      } else if (!d.cap_A.allFinite() || !d.cap_a.allFinite()) {
        bad(tag + ": capability rows must be finite");
      }
    }
    if (d.kind == DeviceKind::Generator) {
      if (d.cost_a.size() != T || d.cost_b.size() != T || d.cost_c.size() != T) {
        bad(tag + ": cost coefficients must cover the horizon");
      } else {
        for (size_t t = 0; t < T; ++t) {
          if (d.cost_a[t] < 0.0) bad(tag + ": quadratic cost must be convex (a >= 0)");
        }
      }
    }
    if (d.kind == DeviceKind::Flexible) {
      if (d.fee < 0.0) bad(tag + ": availability fee must be nonnegative");
      if (d.baseline.size() != T) {
        bad(tag + ": baseline profile must cover the horizon");
      } else if (finite_window(d.pmin, d.pmax, T)) {
        for (size_t t = 0; t < T; ++t) {
          if (!std::isfinite(d.baseline[t]) || d.baseline[t] < d.pmin[t] ||
              d.baseline[t] > d.pmax[t]) {
            bad(tag + ": baseline must lie inside the modulation window");
            break;
          }
        }
      }
    }
  }
  return problems;
}

void validate_or_throw(const Case& c) {
  const auto problems = validate(c);
  if (problems.empty()) return;
  std::ostringstream msg;
  msg << "invalid case '" << c.name << "':";
  for (const auto& p : problems) msg << "\n  - " << p;
  throw std::invalid_argument(msg.str());
}

OperatingPoint OperatingPoint::zeros(const Case& c) {
  OperatingPoint pt;
  pt.z.assign(static_cast<size_t>(c.periods), Eigen::VectorXd::Zero(2 * c.num_buses()));
  pt.P.setZero(c.num_devices(), c.periods);
  pt.Q.setZero(c.num_devices(), c.periods);
  pt.on.assign(static_cast<size_t>(c.num_devices()), 1);
  return pt;
}

BranchPQ branch_flow(const Branch& br, const Eigen::VectorXd& z) {
  const int n = static_cast<int>(z.size()) / 2;
  const double ei = z(br.from), fi = z(n + br.from);
  const double ej = z(br.to), fj = z(n + br.to);
  const double vi2 = ei * ei + fi * fi;
  const double vj2 = ej * ej + fj * fj;
  const double dot = ei * ej + fi * fj;   // Re(Vi conj(Vj))
  const double cross = fi * ej - ei * fj;  // Im(Vi conj(Vj))
  BranchPQ out;
  out.p_from = br.g * (vi2 - dot) - br.b * cross;
  out.q_from = -br.b * (vi2 - dot) - br.g * cross;
  out.p_to = br.g * (vj2 - dot) + br.b * cross;  // Im(Vj conj(Vi)) = -cross
  out.q_to = -br.b * (vj2 - dot) + br.g * cross;
  return out;
}

double branch_loss(const Branch& br, const Eigen::VectorXd& z) {
  const int n = static_cast<int>(z.size()) / 2;
  const double de = z(br.from) - z(br.to);
  const double df = z(n + br.from) - z(n + br.to);
  return br.g * (de * de + df * df);
}

namespace {

// accumulate c * x_a * x_b into a symmetric form
void add_term(Eigen::MatrixXd& m, int a, int b, double coeff) {
  if (a == b) {
    m(a, a) += coeff;
  } else {
    m(a, b) += 0.5 * coeff;
    m(b, a) += 0.5 * coeff;
  }
}

}  // namespace

Eigen::MatrixXd active_injection_form(const Case& c, int bus) {
  const int n = c.num_buses();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (const Branch& br : c.branches) {
    if (br.from != bus && br.to != bus) continue;
    const int i = bus;
    const int j = br.from == bus ? br.to : br.from;
    add_term(m, i, i, br.g);
    add_term(m, n + i, n + i, br.g);
    add_term(m, i, j, -br.g);
    add_term(m, n + i, n + j, -br.g);
    add_term(m, n + i, j, -br.b);
    add_term(m, i, n + j, br.b);
  }
  return m;
}

Eigen::MatrixXd reactive_injection_form(const Case& c, int bus) {
  const int n = c.num_buses();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (const Branch& br : c.branches) {
    if (br.from != bus && br.to != bus) continue;
    const int i = bus;
    const int j = br.from == bus ? br.to : br.from;
    add_term(m, i, i, -br.b);
    add_term(m, n + i, n + i, -br.b);
    add_term(m, i, j, br.b);
    add_term(m, n + i, n + j, br.b);
    add_term(m, n + i, j, -br.g);
    add_term(m, i, n + j, br.g);
  }
  return m;
}

void bus_injections(const Case& c, const OperatingPoint& pt, int t, Eigen::VectorXd& pinj,
                    Eigen::VectorXd& qinj) {
  pinj.setZero(c.num_buses());
  qinj.setZero(c.num_buses());
  for (int d = 0; d < c.num_devices(); ++d) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    const double s = injection_sign(dev.kind);
    pinj(dev.bus) += s * pt.P(d, t);
    qinj(dev.bus) += s * pt.Q(d, t);
  }
}

PfResidual pf_residuals(const Case& c, const Eigen::VectorXd& z, const Eigen::VectorXd& pinj,
                        const Eigen::VectorXd& qinj) {
  const int n = c.num_buses();
  if (z.size() != 2 * n) throw std::invalid_argument("pf_residuals: z size mismatch");
  PfResidual r;
  r.rp.setZero(n);
  r.rq.setZero(n);
  for (const Branch& br : c.branches) {
    const BranchPQ f = branch_flow(br, z);
    r.rp(br.from) += f.p_from;
    r.rq(br.from) += f.q_from;
    r.rp(br.to) += f.p_to;
    r.rq(br.to) += f.q_to;
  }
  r.rp -= pinj;
  r.rq -= qinj;
  r.vlo.setZero(n);
  r.vhi.setZero(n);
  for (int i = 0; i < n; ++i) {
    const double v2 = z(i) * z(i) + z(n + i) * z(n + i);
    r.vlo(i) = std::max(0.0, c.buses[static_cast<size_t>(i)].vmin *
                                     c.buses[static_cast<size_t>(i)].vmin -
                                 v2);
    r.vhi(i) = std::max(0.0, v2 - c.buses[static_cast<size_t>(i)].vmax *
                                      c.buses[static_cast<size_t>(i)].vmax);
  }
  return r;
}

double infeasibility(const Case& c, const OperatingPoint& pt) {
  double total = 0.0;
  Eigen::VectorXd pinj, qinj;
  for (int t = 0; t < c.periods; ++t) {
    bus_injections(c, pt, t, pinj, qinj);
    const PfResidual r = pf_residuals(c, pt.z[static_cast<size_t>(t)], pinj, qinj);
    total += r.rp.squaredNorm() + r.rq.squaredNorm() + r.vlo.squaredNorm() + r.vhi.squaredNorm();
  }
  return total;
}

double objective_value(const Case& c, const OperatingPoint& pt) {
  double total = 0.0;
  for (int d = 0; d < c.num_devices(); ++d) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    if (dev.kind == DeviceKind::Flexible && pt.on[static_cast<size_t>(d)]) total += dev.fee;
    for (int t = 0; t < c.periods; ++t) {
      const double p = pt.P(d, t);
      const size_t ts = static_cast<size_t>(t);
      if (c.objective == ObjectiveKind::GenerationCost) {
        if (dev.kind == DeviceKind::Generator) {
          total += dev.cost_a[ts] * p * p + dev.cost_b[ts] * p + dev.cost_c[ts];
        }
      } else {
        if (dev.kind == DeviceKind::Generator) total += c.curtail_price * (dev.pmax[ts] - p);
        if (dev.kind == DeviceKind::Flexible) total += c.loss_price * p;
      }
    }
  }
  return total;
}

double CheckReport::worst() const {
  return std::max({flow, voltage, device_box, capability, flex_energy});
}

CheckReport check_point(const Case& c, const OperatingPoint& pt) {
  const int T = c.periods;
  if (static_cast<int>(pt.z.size()) != T || pt.P.rows() != c.num_devices() || pt.P.cols() != T ||
      pt.Q.rows() != c.num_devices() || pt.Q.cols() != T ||
      static_cast<int>(pt.on.size()) != c.num_devices()) {
    throw std::invalid_argument("check_point: operating point shape mismatch");
  }
  CheckReport rep;
  Eigen::VectorXd pinj, qinj;
  for (int t = 0; t < T; ++t) {
    bus_injections(c, pt, t, pinj, qinj);
    const PfResidual r = pf_residuals(c, pt.z[static_cast<size_t>(t)], pinj, qinj);
    rep.flow = std::max({rep.flow, r.rp.cwiseAbs().maxCoeff(), r.rq.cwiseAbs().maxCoeff()});
    rep.voltage = std::max({rep.voltage, r.vlo.maxCoeff(), r.vhi.maxCoeff()});
  }
  for (int d = 0; d < c.num_devices(); ++d) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    // an idle flexible load is pinned to its baseline profile
    const bool modulating = dev.kind == DeviceKind::Flexible && pt.on[static_cast<size_t>(d)] != 0;
    double drift = 0.0;
    for (int t = 0; t < T; ++t) {
      const size_t ts = static_cast<size_t>(t);
      const double p = pt.P(d, t);
      const double q = pt.Q(d, t);
      double plo = dev.pmin[ts], phi = dev.pmax[ts];
      if (dev.kind == DeviceKind::Flexible && !modulating) plo = phi = dev.baseline[ts];
      rep.device_box =
          std::max({rep.device_box, plo - p, p - phi, dev.qmin[ts] - q, q - dev.qmax[ts]});
      if (dev.cap_a.size() > 0) {
        const Eigen::Vector2d pq(p, q);
        rep.capability = std::max(rep.capability, (dev.cap_A * pq - dev.cap_a).maxCoeff());
      }
      if (dev.kind == DeviceKind::Flexible) drift += p - dev.baseline[ts];
    }
    if (dev.kind == DeviceKind::Flexible) {
      rep.flex_energy = std::max(rep.flex_energy, std::abs(drift));
    }
  }
  return rep;
}

}  // namespace mpopf
