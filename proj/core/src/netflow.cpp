#include "mpopf/netflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace mpopf {

namespace {

constexpr double kBoundMargin = 100.0;  // safety factor on the cone tolerance, sized to
                                        // dominate inner solver slack as well

struct Iv {
  double lo = 0.0, hi = 0.0;
};

Iv operator+(Iv a, Iv b) { return {a.lo + b.lo, a.hi + b.hi}; }

Iv scale(Iv a, double s) { return s >= 0.0 ? Iv{s * a.lo, s * a.hi} : Iv{s * a.hi, s * a.lo}; }

// Range of the net device P (or Q) injection at a bus with commitments
// relaxed. An idle flexible load sits at its baseline, which lies inside
// the window, so the window itself is the hull either way. Capability
// rows are ignored here; dropping constraints only widens the hull.
Iv injection_hull(const Case& c, int bus, int t, bool reactive) {
  Iv h{0.0, 0.0};
  for (int d : c.devices_at(bus)) {
    const Device& dev = c.devices[static_cast<size_t>(d)];
    const size_t ts = static_cast<size_t>(t);
    const double lo = reactive ? dev.qmin[ts] : dev.pmin[ts];
    const double hi = reactive ? dev.qmax[ts] : dev.pmax[ts];
    if (injection_sign(dev.kind) > 0.0) {
      h.lo += lo;
      h.hi += hi;
    } else {
      h.lo -= hi;
      h.hi -= lo;
    }
  }
  return h;
}

// t = -1 takes the union over periods, giving one hull valid everywhere.
Iv injection_hull_union(const Case& c, int bus, int t, bool reactive) {
  if (t >= 0) return injection_hull(c, bus, t, reactive);
  Iv h = injection_hull(c, bus, 0, reactive);
  for (int u = 1; u < c.periods; ++u) {
    const Iv g = injection_hull(c, bus, u, reactive);
    h.lo = std::min(h.lo, g.lo);
    h.hi = std::max(h.hi, g.hi);
  }
  return h;
}

std::vector<XTerm> form_terms(const Eigen::MatrixXd& M) {
  std::vector<XTerm> out;
  const int m = static_cast<int>(M.rows());
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      const double cij = i == j ? M(i, i) : M(i, j) + M(j, i);
      if (cij != 0.0) out.push_back({i, j, cij});
    }
  }
  return out;
}

XTerm term(int a, int b, double v) { return {std::min(a, b), std::max(a, b), v}; }

void check_period(const Case& c, int t, const char* who) {
  if (t < -1 || t >= c.periods) {
    throw std::invalid_argument(std::string(who) + ": period out of range");
  }
  if (2 * c.num_buses() > 64) {
    throw std::invalid_argument(std::string(who) + ": too many buses for the cone solver");
  }
}

// Rows shared by every tightening objective: voltage windows on each bus
// and the commitment-relaxed injection hulls.
SmallSDP tighten_base(const Case& c, int t) {
  const int n = c.num_buses();
  SmallSDP p;
  p.dim = 2 * n;
  for (int i = 0; i < n; ++i) {
    const Bus& bus = c.buses[static_cast<size_t>(i)];
    SmallSDP::Row& wr = p.add_row(bus.vmin * bus.vmin, bus.vmax * bus.vmax);
    wr.xx = {{i, i, 1.0}, {n + i, n + i, 1.0}};
    const Iv ph = injection_hull_union(c, i, t, false);
    p.add_row(ph.lo, ph.hi).xx = form_terms(active_injection_form(c, i));
    const Iv qh = injection_hull_union(c, i, t, true);
    p.add_row(qh.lo, qh.hi).xx = form_terms(reactive_injection_form(c, i));
  }
  return p;
}

// Coordinate caps and cross-product caps over the current boxes. Redundant
// for the exact cone but they spare the outer approximation many cuts.
void add_box_rows(SmallSDP& p, const Case& c, const Eigen::VectorXd& cap) {
  const int n = c.num_buses();
  for (int k = 0; k < 2 * n; ++k) {
    p.add_row(0.0, cap(k) * cap(k)).xx = {{k, k, 1.0}};
  }
  for (const Branch& br : c.branches) {
    const int pairs[4][2] = {{br.from, br.to},
                             {n + br.from, n + br.to},
                             {n + br.from, br.to},
                             {br.from, n + br.to}};
    for (const auto& pr : pairs) {
      const double m = cap(pr[0]) * cap(pr[1]);
      p.add_row(-m, m).xx = {term(pr[0], pr[1], 1.0)};
    }
  }
}

// Small networks afford the cone on the full moment matrix; beyond that
// only the principal blocks touching each branch (and each bus) are
// enforced, which loosens but never invalidates the bounds.
std::vector<std::vector<int>> tighten_blocks(const Case& c, const TightenOptions& opts) {
  const int n = c.num_buses();
  if (n <= opts.full_matrix_buses) return {};
  std::vector<std::vector<int>> blocks;
  for (const Branch& br : c.branches) {
    blocks.push_back({1 + br.from, 1 + n + br.from, 1 + br.to, 1 + n + br.to});
  }
  for (int i = 0; i < n; ++i) blocks.push_back({1 + i, 1 + n + i});
  return blocks;
}

LinkBox interval_link_box(const Case& c, const Branch& br, const Eigen::VectorXd& cap) {
  const int n = c.num_buses();
  const double bei = cap(br.from), bfi = cap(n + br.from);
  const double bej = cap(br.to), bfj = cap(n + br.to);
  const Bus& bi = c.buses[static_cast<size_t>(br.from)];
  const Bus& bj = c.buses[static_cast<size_t>(br.to)];
  const Iv vi2{bi.vmin * bi.vmin, std::min(bi.vmax * bi.vmax, bei * bei + bfi * bfi)};
  const Iv vj2{bj.vmin * bj.vmin, std::min(bj.vmax * bj.vmax, bej * bej + bfj * bfj)};
  const double dot_cap = bei * bej + bfi * bfj;
  const double cross_cap = bfi * bej + bei * bfj;
  const Iv dot{-dot_cap, dot_cap}, cross{-cross_cap, cross_cap};
  const double g = br.g, b = br.b;

  LinkBox out;
  const Iv pf = scale(vi2 + scale(dot, -1.0), g) + scale(cross, -b);
  const Iv qf = scale(vi2 + scale(dot, -1.0), -b) + scale(cross, -g);
  const Iv pt = scale(vj2 + scale(dot, -1.0), g) + scale(cross, b);
  const Iv qt = scale(vj2 + scale(dot, -1.0), -b) + scale(cross, g);
  out.p_from_lo = pf.lo;
  out.p_from_hi = pf.hi;
  out.q_from_lo = qf.lo;
  out.q_from_hi = qf.hi;
  out.p_to_lo = pt.lo;
  out.p_to_hi = pt.hi;
  out.q_to_lo = qt.lo;
  out.q_to_hi = qt.hi;
  const double diff2 = (bei + bej) * (bei + bej) + (bfi + bfj) * (bfi + bfj);
  const double mag2 = (bi.vmax + bj.vmax) * (bi.vmax + bj.vmax);
  out.loss_hi = g * std::min(diff2, mag2);
  return out;
}

Eigen::VectorXd magnitude_caps(const Case& c) {
  const int n = c.num_buses();
  Eigen::VectorXd cap(2 * n);
  for (int i = 0; i < n; ++i) {
    cap(i) = c.buses[static_cast<size_t>(i)].vmax;
    cap(n + i) = cap(i);
  }
  return cap;
}

}  // namespace

std::vector<EnvelopeRow> mccormick(double li, double ui, double lj, double uj) {
  if (!(li <= ui) || !(lj <= uj)) {
    throw std::invalid_argument("mccormick: inverted interval");
  }
  return {
      {uj, ui, -1.0, ui * uj},    // w >= ui xj + uj xi - ui uj
      {lj, li, -1.0, li * lj},    // w >= li xj + lj xi - li lj
      {-lj, -ui, 1.0, -ui * lj},  // w <= ui xj + lj xi - ui lj
      {-uj, -li, 1.0, -li * uj},  // w <= li xj + uj xi - li uj
  };
}

std::vector<EnvelopeRow> square_envelope(double l, double u) {
  if (!(l <= u)) throw std::invalid_argument("square_envelope: inverted interval");
  return {
      square_tangent(l),
      square_tangent(u),
      {-(l + u), 0.0, 1.0, -l * u},  // secant w <= (l + u) x - l u
  };
}

EnvelopeRow square_tangent(double x0) {
  return {2.0 * x0, 0.0, -1.0, x0 * x0};  // w >= 2 x0 x - x0^2
}

LinkForms link_forms(const Branch& br, int num_buses) {
  const int n = num_buses;
  const int ei = br.from, fi = n + br.from, ej = br.to, fj = n + br.to;
  const double g = br.g, b = br.b;
  LinkForms lf;
  // dot = ei ej + fi fj, cross = fi ej - ei fj
  lf.p_from = {term(ei, ei, g),   term(fi, fi, g),   term(ei, ej, -g),
               term(fi, fj, -g),  term(fi, ej, -b),  term(ei, fj, b)};
  lf.q_from = {term(ei, ei, -b),  term(fi, fi, -b),  term(ei, ej, b),
               term(fi, fj, b),   term(fi, ej, -g),  term(ei, fj, g)};
  lf.p_to = {term(ej, ej, g),   term(fj, fj, g),   term(ei, ej, -g),
             term(fi, fj, -g),  term(fi, ej, b),   term(ei, fj, -b)};
  lf.q_to = {term(ej, ej, -b),  term(fj, fj, -b),  term(ei, ej, b),
             term(fi, fj, b),   term(fi, ej, g),   term(ei, fj, -g)};
  lf.loss = {term(ei, ei, g),  term(ej, ej, g),  term(ei, ej, -2.0 * g),
             term(fi, fi, g),  term(fj, fj, g),  term(fi, fj, -2.0 * g)};
  return lf;
}

double eval_terms(const std::vector<XTerm>& terms, const Eigen::VectorXd& z) {
  double v = 0.0;
  for (const XTerm& t : terms) v += t.coeff * z(t.i) * z(t.j);
  return v;
}

VoltageBoxes tighten_voltage_bounds(const Case& c, int t, const TightenOptions& opts,
                                    CutPool* pool) {
  check_period(c, t, "tighten_voltage_bounds");
  const int n = c.num_buses();
  SmallSDP p = tighten_base(c, t);
  add_box_rows(p, c, magnitude_caps(c));
  p.blocks = tighten_blocks(c, opts);
  p.maximize = true;

  VoltageBoxes vb;
  vb.hi.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    p.xx_cost = {{i, i, 1.0}};
    const SdpSolution s = solve_sdp(p, opts.tol, pool, opts.sdp_rounds);
    double cap = c.buses[static_cast<size_t>(i)].vmax;
    if (s.value_valid) {
      cap = std::min(cap, std::sqrt(std::max(0.0, s.value)) + kBoundMargin * opts.tol);
    } else {
      ++vb.sdp_failures;
      if (opts.log) {
        *opts.log << "voltage tightening kept the magnitude cap at bus "
                  << c.buses[static_cast<size_t>(i)].name << ": " << s.message << "\n";
      }
    }
    // rotating every voltage by 90 degrees swaps e and f while fixing all
    // flow expressions, so one bound serves both coordinates
    vb.hi(i) = cap;
    vb.hi(n + i) = cap;
  }
  return vb;
}

std::vector<LinkBox> tighten_flow_bounds(const Case& c, int t, const VoltageBoxes& vb,
                                         const TightenOptions& opts, CutPool* pool) {
  check_period(c, t, "tighten_flow_bounds");
  const int n = c.num_buses();
  if (vb.hi.size() != 2 * n) {
    throw std::invalid_argument("tighten_flow_bounds: box size mismatch");
  }
  SmallSDP p = tighten_base(c, t);
  add_box_rows(p, c, vb.hi);
  p.blocks = tighten_blocks(c, opts);

  std::vector<LinkBox> out;
  out.reserve(c.branches.size());
  for (size_t l = 0; l < c.branches.size(); ++l) {
    const Branch& br = c.branches[l];
    const LinkForms lf = link_forms(br, n);
    const LinkBox fallback = interval_link_box(c, br, vb.hi);
    LinkBox box;

    auto bound = [&](const std::vector<XTerm>& obj, bool maximize, double otherwise) {
      p.xx_cost = obj;
      p.maximize = maximize;
      const SdpSolution s = solve_sdp(p, opts.tol, pool, opts.sdp_rounds);
      if (!s.value_valid) {
        ++box.sdp_failures;
        if (opts.log) {
          *opts.log << "flow tightening fell back to interval arithmetic on link "
                    << br.from << "-" << br.to << ": " << s.message << "\n";
        }
        return otherwise;
      }
      // interval arithmetic stays in play; a stalled cut loop can quit wider
      return maximize ? std::min(s.value + kBoundMargin * opts.tol, otherwise)
                      : std::max(s.value - kBoundMargin * opts.tol, otherwise);
    };

    box.p_from_hi = bound(lf.p_from, true, fallback.p_from_hi);
    box.p_from_lo = bound(lf.p_from, false, fallback.p_from_lo);
    box.q_from_hi = bound(lf.q_from, true, fallback.q_from_hi);
    box.q_from_lo = bound(lf.q_from, false, fallback.q_from_lo);
    box.loss_hi = std::max(0.0, bound(lf.loss, true, fallback.loss_hi));
    // reverse direction through flow conservation: p_to = loss - p_from
    // and q_to = (-b/g) loss - q_from, with loss in [0, loss_hi]
    const double k = -br.b / br.g;
    box.p_to_lo = -box.p_from_hi;
    box.p_to_hi = box.loss_hi - box.p_from_lo;
    box.q_to_lo = -box.q_from_hi;
    box.q_to_hi = k * box.loss_hi - box.q_from_lo;
    out.push_back(box);
  }
  return out;
}

BoxBounds initial_boxes(const Case& c) {
  BoxBounds out;
  VoltageBoxes vb;
  vb.hi = magnitude_caps(c);
  std::vector<LinkBox> links;
  links.reserve(c.branches.size());
  for (const Branch& br : c.branches) links.push_back(interval_link_box(c, br, vb.hi));
  out.voltage.assign(static_cast<size_t>(c.periods), vb);
  out.links.assign(static_cast<size_t>(c.periods), links);
  return out;
}

BoxBounds tighten_boxes(const Case& c, const TightenOptions& opts, bool union_periods) {
  BoxBounds out;
  CutPool pool;
  if (union_periods) {
    const VoltageBoxes vb = tighten_voltage_bounds(c, -1, opts, &pool);
    const std::vector<LinkBox> links = tighten_flow_bounds(c, -1, vb, opts, &pool);
    out.voltage.assign(static_cast<size_t>(c.periods), vb);
    out.links.assign(static_cast<size_t>(c.periods), links);
  } else {
    for (int t = 0; t < c.periods; ++t) {
      const VoltageBoxes vb = tighten_voltage_bounds(c, t, opts, &pool);
      out.links.push_back(tighten_flow_bounds(c, t, vb, opts, &pool));
      out.voltage.push_back(vb);
    }
  }
  return out;
}

NfrMaster build_reformulation(const Case& c, const BoxBounds& boxes) {
  validate_or_throw(c);
  const int n = c.num_buses();
  const int L = static_cast<int>(c.branches.size());
  const int T = c.periods;
  if (static_cast<int>(boxes.voltage.size()) != T || static_cast<int>(boxes.links.size()) != T) {
    throw std::invalid_argument("build_reformulation: box horizon mismatch");
  }
  for (int t = 0; t < T; ++t) {
    if (boxes.voltage[static_cast<size_t>(t)].hi.size() != 2 * n ||
        static_cast<int>(boxes.links[static_cast<size_t>(t)].size()) != L) {
      throw std::invalid_argument("build_reformulation: box shape mismatch");
    }
  }

  NfrMaster m;
  QpBuilder b;
  m.cols.dev = device_block(b, c);
  m.cols.num_buses = n;
  m.cols.num_links = L;
  m.cols.periods = T;
  m.cols.network_offset = b.num_vars();
  m.cols.block = 4 * n + 9 * L;
  m.balance_p.setConstant(n, T, -1);
  m.balance_q.setConstant(n, T, -1);
  m.window_lo.setConstant(n, T, -1);
  m.window_hi.setConstant(n, T, -1);

  for (int t = 0; t < T; ++t) {
    const VoltageBoxes& vb = boxes.voltage[static_cast<size_t>(t)];
    const std::vector<LinkBox>& lb = boxes.links[static_cast<size_t>(t)];

    for (int k = 0; k < 2 * n; ++k) b.add_var(-vb.hi(k), vb.hi(k));
    for (int k = 0; k < 2 * n; ++k) b.add_var(0.0, vb.hi(k) * vb.hi(k));
    for (int l = 0; l < L; ++l) {
      const Branch& br = c.branches[static_cast<size_t>(l)];
      const double bei = vb.hi(br.from), bfi = vb.hi(n + br.from);
      const double bej = vb.hi(br.to), bfj = vb.hi(n + br.to);
      b.add_var(-bei * bej, bei * bej);  // e_i e_j
      b.add_var(-bfi * bfj, bfi * bfj);  // f_i f_j
      b.add_var(-bfi * bej, bfi * bej);  // f_i e_j
      b.add_var(-bei * bfj, bei * bfj);  // e_i f_j
    }
    for (int l = 0; l < L; ++l) {
      const LinkBox& lk = lb[static_cast<size_t>(l)];
      b.add_var(lk.p_from_lo, lk.p_from_hi);
      b.add_var(lk.p_to_lo, lk.p_to_hi);
      b.add_var(lk.q_from_lo, lk.q_from_hi);
      b.add_var(lk.q_to_lo, lk.q_to_hi);
      b.add_var(0.0, lk.loss_hi);
    }

    for (int k = 0; k < 2 * n; ++k) {
      const int zc = m.cols.z_col(t, k), wc = m.cols.square_col(t, k);
      for (const EnvelopeRow& r : square_envelope(-vb.hi(k), vb.hi(k))) {
        b.add_le({{zc, r.xi}, {wc, r.w}}, r.rhs);
      }
    }
    for (int l = 0; l < L; ++l) {
      const Branch& br = c.branches[static_cast<size_t>(l)];
      const int pairs[4][2] = {{br.from, br.to},
                               {n + br.from, n + br.to},
                               {n + br.from, br.to},
                               {br.from, n + br.to}};
      for (int which = 0; which < 4; ++which) {
        const int a = pairs[which][0], a2 = pairs[which][1];
        const int wc = m.cols.cross_col(t, l, which);
        for (const EnvelopeRow& r : mccormick(-vb.hi(a), vb.hi(a), -vb.hi(a2), vb.hi(a2))) {
          b.add_le({{m.cols.z_col(t, a), r.xi}, {m.cols.z_col(t, a2), r.xj}, {wc, r.w}}, r.rhs);
        }
      }
    }

    for (int l = 0; l < L; ++l) {
      const Branch& br = c.branches[static_cast<size_t>(l)];
      const double g = br.g, bb = br.b;
      const int sei = m.cols.square_col(t, br.from), sfi = m.cols.square_col(t, n + br.from);
      const int sej = m.cols.square_col(t, br.to), sfj = m.cols.square_col(t, n + br.to);
      const int wee = m.cols.cross_col(t, l, NfrLayout::EE);
      const int wff = m.cols.cross_col(t, l, NfrLayout::FF);
      const int wfe = m.cols.cross_col(t, l, NfrLayout::FE);
      const int wef = m.cols.cross_col(t, l, NfrLayout::EF);
      const int pf = m.cols.flow_col(t, l, NfrLayout::PFrom);
      const int pt = m.cols.flow_col(t, l, NfrLayout::PTo);
      const int qf = m.cols.flow_col(t, l, NfrLayout::QFrom);
      const int qt = m.cols.flow_col(t, l, NfrLayout::QTo);
      const int lc = m.cols.flow_col(t, l, NfrLayout::Loss);
      b.add_eq({{pf, 1.0}, {sei, -g}, {sfi, -g}, {wee, g}, {wff, g}, {wfe, bb}, {wef, -bb}}, 0.0);
      b.add_eq({{qf, 1.0}, {sei, bb}, {sfi, bb}, {wee, -bb}, {wff, -bb}, {wfe, g}, {wef, -g}},
               0.0);
      b.add_eq({{pt, 1.0}, {sej, -g}, {sfj, -g}, {wee, g}, {wff, g}, {wfe, -bb}, {wef, bb}}, 0.0);
      b.add_eq({{qt, 1.0}, {sej, bb}, {sfj, bb}, {wee, -bb}, {wff, -bb}, {wfe, -g}, {wef, g}},
               0.0);
      b.add_eq({{lc, 1.0},
                {sei, -g},
                {sej, -g},
                {wee, 2.0 * g},
                {sfi, -g},
                {sfj, -g},
                {wff, 2.0 * g}},
               0.0);
      // conservation rows, implied by the five above but kept on purpose
      b.add_eq({{pf, 1.0}, {pt, 1.0}, {lc, -1.0}}, 0.0);
      b.add_eq({{qf, 1.0}, {qt, 1.0}, {lc, bb / g}}, 0.0);
    }

    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<int, double>> prow, qrow;
      for (int l = 0; l < L; ++l) {
        const Branch& br = c.branches[static_cast<size_t>(l)];
        if (br.from == i) {
          prow.emplace_back(m.cols.flow_col(t, l, NfrLayout::PFrom), 1.0);
          qrow.emplace_back(m.cols.flow_col(t, l, NfrLayout::QFrom), 1.0);
        }
        if (br.to == i) {
          prow.emplace_back(m.cols.flow_col(t, l, NfrLayout::PTo), 1.0);
          qrow.emplace_back(m.cols.flow_col(t, l, NfrLayout::QTo), 1.0);
        }
      }
      for (int d : c.devices_at(i)) {
        const double sgn = injection_sign(c.devices[static_cast<size_t>(d)].kind);
        prow.emplace_back(m.cols.dev.p_col(d, t), -sgn);
        qrow.emplace_back(m.cols.dev.q_col(d, t), -sgn);
      }
      m.balance_p(i, t) = b.num_eq_rows();
      b.add_eq(prow, 0.0);
      m.balance_q(i, t) = b.num_eq_rows();
      b.add_eq(qrow, 0.0);

      const Bus& bus = c.buses[static_cast<size_t>(i)];
      const int sei = m.cols.square_col(t, i), sfi = m.cols.square_col(t, n + i);
      m.window_lo(i, t) = b.num_le_rows();
      b.add_ge({{sei, 1.0}, {sfi, 1.0}}, bus.vmin * bus.vmin);
      m.window_hi(i, t) = b.num_le_rows();
      b.add_le({{sei, 1.0}, {sfi, 1.0}}, bus.vmax * bus.vmax);
    }
  }

  m.mip.base = b.build();
  m.constant = b.constant();
  for (size_t f = 0; f < m.cols.dev.flex.size(); ++f) {
    m.mip.binary_cols.push_back(m.cols.dev.binary_col(static_cast<int>(f)));
  }
  return m;
}

namespace {

OperatingPoint point_from(const Case& c, const NfrMaster& m, const Eigen::VectorXd& x) {
  OperatingPoint pt = OperatingPoint::zeros(c);
  const int n = c.num_buses();
  for (int t = 0; t < c.periods; ++t) {
    for (int k = 0; k < 2 * n; ++k) pt.z[static_cast<size_t>(t)](k) = x(m.cols.z_col(t, k));
  }
  for (int d = 0; d < c.num_devices(); ++d) {
    for (int t = 0; t < c.periods; ++t) {
      pt.P(d, t) = x(m.cols.dev.p_col(d, t));
      pt.Q(d, t) = x(m.cols.dev.q_col(d, t));
    }
  }
  for (size_t f = 0; f < m.cols.dev.flex.size(); ++f) {
    const double v = x(m.cols.dev.binary_col(static_cast<int>(f)));
    pt.on[static_cast<size_t>(m.cols.dev.flex[f])] = v >= 0.5 ? 1 : 0;
  }
  return pt;
}

DualPoint prices_from(const Case& c, const NfrMaster& m, const QpSolution& sol) {
  DualPoint mu = DualPoint::zeros(c);
  for (int i = 0; i < c.num_buses(); ++i) {
    for (int t = 0; t < c.periods; ++t) {
      mu.lambda(i, t) = sol.y(m.balance_p(i, t));
      mu.gamma(i, t) = sol.y(m.balance_q(i, t));
      mu.alpha(i, t) = std::max(0.0, sol.z(m.window_lo(i, t)));
      mu.beta(i, t) = std::max(0.0, sol.z(m.window_hi(i, t)));
    }
  }
  return mu;
}

std::vector<int> mask_bits(int mask, int width) {
  std::vector<int> bits(static_cast<size_t>(width));
  for (int f = 0; f < width; ++f) bits[static_cast<size_t>(f)] = (mask >> f) & 1;
  return bits;
}

// appends rows sum coef * x <= rhs to the inequality block
void append_rows(ConvexQP& qp,
                 const std::vector<std::pair<std::vector<std::pair<int, double>>, double>>& rows) {
  const int m0 = static_cast<int>(qp.C.rows());
  const int k = static_cast<int>(rows.size());
  qp.C.conservativeResize(m0 + k, qp.num_vars());
  qp.cb.conservativeResize(m0 + k);
  qp.C.bottomRows(k).setZero();
  for (int r = 0; r < k; ++r) {
    for (const auto& [col, coef] : rows[static_cast<size_t>(r)].first) {
      qp.C(m0 + r, col) += coef;
    }
    qp.cb(m0 + r) = rows[static_cast<size_t>(r)].second;
  }
}

}  // namespace

NfrResult solve_nfr(const Case& c, const NfrOptions& opts) {
  validate_or_throw(c);
  using clock = std::chrono::steady_clock;
  NfrResult out;

  const auto t0 = clock::now();
  out.boxes = tighten_boxes(c, opts.tighten, opts.union_periods);
  {
    // replicated periods share one tightening run, count it once
    const size_t span = opts.union_periods ? 1 : out.boxes.voltage.size();
    for (size_t t = 0; t < span; ++t) {
      out.sdp_failures += out.boxes.voltage[t].sdp_failures;
      for (const LinkBox& lk : out.boxes.links[t]) out.sdp_failures += lk.sdp_failures;
    }
  }
  out.tighten_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  const auto t1 = clock::now();
  NfrMaster master = build_reformulation(c, out.boxes);
  MixedBinaryProblem& mip = master.mip;
  const int F = static_cast<int>(mip.binary_cols.size());
  const int n = c.num_buses();

  // lower tangents w >= 2 z0 z - z0^2 wherever the square envelope sags
  // below the point's own square
  auto collect_tangents = [&](const Eigen::VectorXd& x) {
    std::vector<std::pair<std::vector<std::pair<int, double>>, double>> rows;
    for (int t = 0; t < c.periods; ++t) {
      for (int k = 0; k < 2 * n; ++k) {
        const int zc = master.cols.z_col(t, k), wc = master.cols.square_col(t, k);
        const double z0 = x(zc), w = x(wc);
        if (z0 * z0 - w > 1e-7 * (1.0 + z0 * z0)) {
          const EnvelopeRow r = square_tangent(z0);
          rows.push_back({{{zc, r.xi}, {wc, r.w}}, r.rhs});
        }
      }
    }
    return rows;
  };

  auto finish = [&](const QpSolution& sol, int mask) {
    out.relaxed = point_from(c, master, sol.x);
    out.price_start = prices_from(c, master, sol);
    if (mask >= 0) {
      for (size_t f = 0; f < master.cols.dev.flex.size(); ++f) {
        out.relaxed.on[static_cast<size_t>(master.cols.dev.flex[f])] = (mask >> f) & 1;
      }
    }
  };

  if (F <= opts.mip.enumeration_limit) {
    const int A = 1 << F;
    std::vector<double> val(static_cast<size_t>(A), kInf);
    std::vector<char> fresh(static_cast<size_t>(A), 0);
    std::unordered_map<int, QpSolution> cache;

    auto solve_mask = [&](int mask) {
      for (int f = 0; f < F; ++f) {
        const int col = mip.binary_cols[static_cast<size_t>(f)];
        const double v = (mask >> f) & 1;
        mip.base.lo(col) = v;
        mip.base.hi(col) = v;
      }
      QpSolution s = solve_qp(mip.base, opts.mip.qp);
      for (int f = 0; f < F; ++f) {
        const int col = mip.binary_cols[static_cast<size_t>(f)];
        mip.base.lo(col) = 0.0;
        mip.base.hi(col) = 1.0;
      }
      if (s.status == QpStatus::Optimal) {
        val[static_cast<size_t>(mask)] = s.objective + master.constant;
      } else if (s.status == QpStatus::Infeasible) {
        val[static_cast<size_t>(mask)] = kInf;
      } else {
        // no bound for this commitment; flag and treat as unbounded below
        val[static_cast<size_t>(mask)] = -kInf;
        out.status = QpStatus::IterationLimit;
        out.message = "commitment subproblem: " + s.message;
      }
      fresh[static_cast<size_t>(mask)] = 1;
      cache[mask] = std::move(s);
    };

    for (int mask = 0; mask < A; ++mask) solve_mask(mask);

    auto argmin = [&]() {
      return static_cast<int>(std::min_element(val.begin(), val.end()) - val.begin());
    };

    int best = argmin();
    for (int round = 0; opts.square_tangents && round < opts.tangent_rounds; ++round) {
      if (!std::isfinite(val[static_cast<size_t>(best)])) break;
      if (!cache.count(best)) solve_mask(best);
      const auto rows = collect_tangents(cache[best].x);
      if (rows.empty()) break;
      append_rows(mip.base, rows);
      ++out.tangent_rounds_used;
      // stale values stay valid lower bounds, so only the argmin needs a
      // fresh solve until it stops moving
      std::fill(fresh.begin(), fresh.end(), 0);
      cache.clear();
      for (;;) {
        best = argmin();
        if (!std::isfinite(val[static_cast<size_t>(best)]) || fresh[static_cast<size_t>(best)]) {
          break;
        }
        solve_mask(best);
      }
    }

    out.commitments.reserve(static_cast<size_t>(A));
    for (int mask = 0; mask < A; ++mask) {
      out.commitments.push_back({mask_bits(mask, F), val[static_cast<size_t>(mask)]});
    }

    if (val[static_cast<size_t>(best)] == kInf) {
      out.status = QpStatus::Infeasible;
      out.message = "every commitment leaves the relaxation infeasible";
      out.dual_bound = kInf;
      out.relaxed = OperatingPoint::zeros(c);
      out.price_start = DualPoint::zeros(c);
    } else {
      if (!cache.count(best)) solve_mask(best);
      out.dual_bound = *std::min_element(val.begin(), val.end());
      finish(cache[best], best);
    }
  } else {
    MipSolution s = solve_mixed_binary(mip, opts.mip);
    for (int round = 0; opts.square_tangents && round < opts.tangent_rounds &&
                        s.status == QpStatus::Optimal && !s.node_limit_hit;
         ++round) {
      const auto rows = collect_tangents(s.x);
      if (rows.empty()) break;
      append_rows(mip.base, rows);
      ++out.tangent_rounds_used;
      s = solve_mixed_binary(mip, opts.mip);
    }
    if (s.node_limit_hit) {
      // the incumbent is not a proven minimum over commitments, so it is
      // no lower bound for the instance
      out.status = QpStatus::IterationLimit;
      out.message = "commitment search hit the node limit";
      out.dual_bound = -kInf;
      out.relaxed = s.x.size() > 0 ? point_from(c, master, s.x) : OperatingPoint::zeros(c);
      out.price_start = DualPoint::zeros(c);
      out.solve_seconds = std::chrono::duration<double>(clock::now() - t1).count();
      return out;
    }
    out.status = s.status;
    if (s.status == QpStatus::Optimal) {
      out.dual_bound = s.objective + master.constant;
      // re-solve the winning commitment as a plain QP for the duals
      int mask = 0;
      for (size_t f = 0; f < s.binaries.size(); ++f) mask |= s.binaries[f] << f;
      for (int f = 0; f < F; ++f) {
        const int col = mip.binary_cols[static_cast<size_t>(f)];
        mip.base.lo(col) = (mask >> f) & 1;
        mip.base.hi(col) = (mask >> f) & 1;
      }
      const QpSolution fixed = solve_qp(mip.base, opts.mip.qp);
      if (fixed.status == QpStatus::Optimal) {
        finish(fixed, mask);
      } else {
        out.relaxed = point_from(c, master, s.x);
        out.price_start = DualPoint::zeros(c);
      }
    } else {
      out.dual_bound = s.status == QpStatus::Infeasible ? kInf : -kInf;
      out.relaxed = OperatingPoint::zeros(c);
      out.price_start = DualPoint::zeros(c);
      if (s.status == QpStatus::Infeasible) {
        out.message = "the relaxation is infeasible, so the instance is too";
      }
    }
  }

  out.solve_seconds = std::chrono::duration<double>(clock::now() - t1).count();
  return out;
}

void write_box_csv(std::ostream& os, const Case& c, const BoxBounds& tightened) {
  const BoxBounds init = initial_boxes(c);
  const int n = c.num_buses();
  char buf[160];
  auto row = [&](int t, const std::string& var, double il, double ih, double lo, double hi) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g,%.9g,%.9g\n", t, var.c_str(), il, ih, lo,
                  hi);
    os << buf;
  };
  os << "period,variable,initial_lo,initial_hi,lo,hi\n";
  for (int t = 0; t < c.periods; ++t) {
    const VoltageBoxes& v0 = init.voltage[static_cast<size_t>(t)];
    const VoltageBoxes& v1 = tightened.voltage[static_cast<size_t>(t)];
    for (int k = 0; k < 2 * n; ++k) {
      const std::string var = (k < n ? "e:" : "f:") + c.buses[static_cast<size_t>(k % n)].name;
      row(t, var, -v0.hi(k), v0.hi(k), -v1.hi(k), v1.hi(k));
    }
    for (size_t l = 0; l < c.branches.size(); ++l) {
      const Branch& br = c.branches[l];
      const LinkBox& b0 = init.links[static_cast<size_t>(t)][l];
      const LinkBox& b1 = tightened.links[static_cast<size_t>(t)][l];
      const std::string tag =
          c.buses[static_cast<size_t>(br.from)].name + "-" + c.buses[static_cast<size_t>(br.to)].name;
      row(t, "p_from:" + tag, b0.p_from_lo, b0.p_from_hi, b1.p_from_lo, b1.p_from_hi);
      row(t, "p_to:" + tag, b0.p_to_lo, b0.p_to_hi, b1.p_to_lo, b1.p_to_hi);
      row(t, "q_from:" + tag, b0.q_from_lo, b0.q_from_hi, b1.q_from_lo, b1.q_from_hi);
      row(t, "q_to:" + tag, b0.q_to_lo, b0.q_to_hi, b1.q_to_lo, b1.q_to_hi);
      row(t, "loss:" + tag, 0.0, b0.loss_hi, 0.0, b1.loss_hi);
    }
  }
}

}  // namespace mpopf
