#include "mpopf/caseio.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace mpopf {

ParseError::ParseError(const std::string& file, int line, const std::string& message)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + message),
      file_(file),
      line_(line) {}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream in(line.substr(0, line.find('#')));
  std::string t;
  while (in >> t) toks.push_back(t);
  return toks;
}

double parse_num(const std::string& tok, const std::string& file, int line) {
  const char* s = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end != s + tok.size()) throw ParseError(file, line, "expected a number, got '" + tok + "'");
  return v;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// single value broadcasts across the horizon, otherwise one per period
std::vector<double> spread(const std::vector<double>& vals, int T, const std::string& what,
                           const std::string& file, int line) {
  if (static_cast<int>(vals.size()) == T) return vals;
  if (vals.size() == 1) return std::vector<double>(static_cast<size_t>(T), vals[0]);
  throw ParseError(file, line,
                   what + ": expected 1 or " + std::to_string(T) + " values, got " +
                       std::to_string(vals.size()));
}

std::string render_values(const std::vector<double>& vals) {
  bool uniform = true;
  for (double v : vals) {
    if (v != vals.front()) uniform = false;
  }
  std::string out;
  if (uniform && !vals.empty()) return fmt(vals.front());
  for (size_t i = 0; i < vals.size(); ++i) {
    if (i) out += ' ';
    out += fmt(vals[i]);
  }
  return out;
}

}  // namespace

Case parse_case_text(const std::string& text, const std::string& filename) {
  Case c;
  std::map<std::string, int> bus_index;
  bool have_periods = false;
  std::optional<Device> dev;  // open device block
  int dev_line = 0;
  struct Seen {
    bool pmin = false, pmax = false, qmin = false, qmax = false;
  } seen;
  std::vector<Eigen::RowVector2d> cap_rows;
  std::vector<double> cap_rhs;

  auto finalize_device = [&]() {
    if (!dev) return;
    if (!seen.pmin || !seen.pmax || !seen.qmin || !seen.qmax) {
      throw ParseError(filename, dev_line,
                       "device '" + dev->name + "' is missing a power window attribute");
    }
    if (dev->kind == DeviceKind::Generator) {
      const size_t T = static_cast<size_t>(c.periods);
      if (dev->cost_a.empty()) dev->cost_a.assign(T, 0.0);
      if (dev->cost_b.empty()) dev->cost_b.assign(T, 0.0);
      if (dev->cost_c.empty()) dev->cost_c.assign(T, 0.0);
    }
    if (!cap_rows.empty()) {
      dev->cap_A.resize(static_cast<Eigen::Index>(cap_rows.size()), 2);
      dev->cap_a.resize(static_cast<Eigen::Index>(cap_rows.size()));
      for (size_t r = 0; r < cap_rows.size(); ++r) {
        dev->cap_A.row(static_cast<Eigen::Index>(r)) = cap_rows[r];
        dev->cap_a(static_cast<Eigen::Index>(r)) = cap_rhs[r];
      }
      cap_rows.clear();
      cap_rhs.clear();
    }
    c.devices.push_back(std::move(*dev));
    dev.reset();
    seen = Seen{};
  };

  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string& kw = toks[0];
    auto need = [&](size_t count) {
      if (toks.size() != count + 1) {
        throw ParseError(filename, lineno,
                         "'" + kw + "' expects " + std::to_string(count) + " arguments");
      }
    };
    auto values = [&]() {
      std::vector<double> v;
      for (size_t i = 1; i < toks.size(); ++i) v.push_back(parse_num(toks[i], filename, lineno));
      if (v.empty()) throw ParseError(filename, lineno, "'" + kw + "' expects values");
      return v;
    };

    if (kw == "case") {
      need(1);
      c.name = toks[1];
    } else if (kw == "periods") {
      need(1);
      c.periods = static_cast<int>(parse_num(toks[1], filename, lineno));
      if (c.periods < 1) throw ParseError(filename, lineno, "periods must be >= 1");
      have_periods = true;
    } else if (kw == "objective") {
      need(1);
      if (toks[1] == "generation") {
        c.objective = ObjectiveKind::GenerationCost;
      } else if (toks[1] == "curtailment") {
        c.objective = ObjectiveKind::Curtailment;
      } else {
        throw ParseError(filename, lineno, "objective must be 'generation' or 'curtailment'");
      }
    } else if (kw == "curtail_price") {
      need(1);
      c.curtail_price = parse_num(toks[1], filename, lineno);
    } else if (kw == "loss_price") {
      need(1);
      c.loss_price = parse_num(toks[1], filename, lineno);
    } else if (kw == "bus") {
      finalize_device();
      need(3);
      if (bus_index.count(toks[1])) {
        throw ParseError(filename, lineno, "duplicate bus '" + toks[1] + "'");
      }
      bus_index[toks[1]] = c.num_buses();
      c.buses.push_back(
          {toks[1], parse_num(toks[2], filename, lineno), parse_num(toks[3], filename, lineno)});
    } else if (kw == "branch") {
      finalize_device();
      need(4);
      for (int side = 1; side <= 2; ++side) {
        if (!bus_index.count(toks[static_cast<size_t>(side)])) {
          throw ParseError(filename, lineno,
                           "unknown bus '" + toks[static_cast<size_t>(side)] + "'");
        }
      }
      c.branches.push_back({bus_index[toks[1]], bus_index[toks[2]],
                            parse_num(toks[3], filename, lineno),
                            parse_num(toks[4], filename, lineno)});
    } else if (kw == "device") {
      finalize_device();
      need(3);
      if (!have_periods) {
        throw ParseError(filename, lineno, "'periods' must appear before the first device");
      }
      Device d;
      d.name = toks[1];
      for (const Device& existing : c.devices) {
        if (existing.name == d.name) {
          throw ParseError(filename, lineno, "duplicate device '" + d.name + "'");
        }
      }
      if (toks[2] == "generator") {
        d.kind = DeviceKind::Generator;
      } else if (toks[2] == "flexible") {
        d.kind = DeviceKind::Flexible;
      } else if (toks[2] == "static") {
        d.kind = DeviceKind::StaticLoad;
      } else {
        throw ParseError(filename, lineno, "unknown device kind '" + toks[2] + "'");
      }
      if (!bus_index.count(toks[3])) {
        throw ParseError(filename, lineno, "unknown bus '" + toks[3] + "'");
      }
      d.bus = bus_index[toks[3]];
      dev = std::move(d);
      dev_line = lineno;
    } else if (kw == "pmin" || kw == "pmax" || kw == "qmin" || kw == "qmax" || kw == "cost_a" ||
               kw == "cost_b" || kw == "cost_c" || kw == "baseline") {
      if (!dev) throw ParseError(filename, lineno, "'" + kw + "' outside a device block");
      const auto v = spread(values(), c.periods, kw, filename, lineno);
      if (kw == "pmin") {
        dev->pmin = v;
        seen.pmin = true;
      } else if (kw == "pmax") {
        dev->pmax = v;
        seen.pmax = true;
      } else if (kw == "qmin") {
        dev->qmin = v;
        seen.qmin = true;
      } else if (kw == "qmax") {
        dev->qmax = v;
        seen.qmax = true;
      } else if (kw == "cost_a") {
        dev->cost_a = v;
      } else if (kw == "cost_b") {
        dev->cost_b = v;
      } else if (kw == "cost_c") {
        dev->cost_c = v;
      } else {
        dev->baseline = v;
      }
    } else if (kw == "fee") {
      if (!dev) throw ParseError(filename, lineno, "'fee' outside a device block");
      need(1);
      dev->fee = parse_num(toks[1], filename, lineno);
    } else if (kw == "cap") {
      if (!dev) throw ParseError(filename, lineno, "'cap' outside a device block");
      need(3);
      cap_rows.emplace_back(parse_num(toks[1], filename, lineno),
                            parse_num(toks[2], filename, lineno));
      cap_rhs.push_back(parse_num(toks[3], filename, lineno));
    } else {
      throw ParseError(filename, lineno, "unknown directive '" + kw + "'");
    }
  }
  finalize_device();
  validate_or_throw(c);
  return c;
}

Case parse_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open case file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_case_text(buf.str(), path);
}

std::string serialize_case(const Case& c) {
  std::ostringstream out;
  out << "case " << c.name << "\n";
  out << "periods " << c.periods << "\n";
  out << "objective "
      << (c.objective == ObjectiveKind::GenerationCost ? "generation" : "curtailment") << "\n";
  if (c.objective == ObjectiveKind::Curtailment) {
    out << "curtail_price " << fmt(c.curtail_price) << "\n";
    out << "loss_price " << fmt(c.loss_price) << "\n";
  }
  out << "\n";
  for (const Bus& b : c.buses) {
    out << "bus " << b.name << " " << fmt(b.vmin) << " " << fmt(b.vmax) << "\n";
  }
  for (const Branch& br : c.branches) {
    out << "branch " << c.buses[static_cast<size_t>(br.from)].name << " "
        << c.buses[static_cast<size_t>(br.to)].name << " " << fmt(br.g) << " " << fmt(br.b)
        << "\n";
  }
  for (const Device& d : c.devices) {
    const char* kind = d.kind == DeviceKind::Generator
                           ? "generator"
                           : (d.kind == DeviceKind::Flexible ? "flexible" : "static");
    out << "\ndevice " << d.name << " " << kind << " "
        << c.buses[static_cast<size_t>(d.bus)].name << "\n";
    out << "  pmin " << render_values(d.pmin) << "\n";
    out << "  pmax " << render_values(d.pmax) << "\n";
    out << "  qmin " << render_values(d.qmin) << "\n";
    out << "  qmax " << render_values(d.qmax) << "\n";
    if (d.kind == DeviceKind::Generator) {
      out << "  cost_a " << render_values(d.cost_a) << "\n";
      out << "  cost_b " << render_values(d.cost_b) << "\n";
      out << "  cost_c " << render_values(d.cost_c) << "\n";
    }
    if (d.kind == DeviceKind::Flexible) {
      out << "  baseline " << render_values(d.baseline) << "\n";
      out << "  fee " << fmt(d.fee) << "\n";
    }
    for (Eigen::Index r = 0; r < d.cap_A.rows(); ++r) {
      out << "  cap " << fmt(d.cap_A(r, 0)) << " " << fmt(d.cap_A(r, 1)) << " " << fmt(d.cap_a(r))
          << "\n";
    }
  }
  return out.str();
}

void write_case_file(const std::string& path, const Case& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write case file '" + path + "'");
  out << serialize_case(c);
}

Case with_periods(const Case& c, int periods) {
  if (periods < 1) throw std::invalid_argument("with_periods: horizon must be >= 1");
  Case out = c;
  out.periods = periods;
  auto cycle = [&](std::vector<double>& v) {
    if (v.empty()) return;
    std::vector<double> next(static_cast<size_t>(periods));
    for (int t = 0; t < periods; ++t) {
      next[static_cast<size_t>(t)] = v[static_cast<size_t>(t % c.periods)];
    }
    v = std::move(next);
  };
  for (Device& d : out.devices) {
    cycle(d.pmin);
    cycle(d.pmax);
    cycle(d.qmin);
    cycle(d.qmax);
    cycle(d.cost_a);
    cycle(d.cost_b);
    cycle(d.cost_c);
    cycle(d.baseline);
  }
  return out;
}

RunConfig parse_run_config_text(const std::string& text, const std::string& filename) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string& kw = toks[0];
    if (kw == "output" && toks.size() == 2) {
      cfg.output = toks[1];
    } else if (kw == "format" && toks.size() == 2) {
      if (toks[1] != "csv" && toks[1] != "md") {
        throw ParseError(filename, lineno, "format must be 'csv' or 'md'");
      }
      cfg.format = toks[1];
    } else if (kw == "seed" && toks.size() == 2) {
      cfg.seed = std::strtoull(toks[1].c_str(), nullptr, 10);
    } else if (kw == "tol" && toks.size() == 2) {
      cfg.tol = parse_num(toks[1], filename, lineno);
      if (!(cfg.tol > 0.0)) throw ParseError(filename, lineno, "tol must be positive");
    } else if (kw == "single_core" && toks.size() == 2) {
      cfg.single_core = toks[1] == "true" || toks[1] == "1";
    } else if (kw == "bundle_iters" && toks.size() == 2) {
      cfg.bundle_iters = static_cast<int>(parse_num(toks[1], filename, lineno));
      if (cfg.bundle_iters < 1) throw ParseError(filename, lineno, "bundle_iters must be >= 1");
    } else if (kw == "bundle_tol" && toks.size() == 2) {
      cfg.bundle_tol = parse_num(toks[1], filename, lineno);
      if (!(cfg.bundle_tol > 0.0)) throw ParseError(filename, lineno, "bundle_tol must be positive");
    } else if (kw == "sdp_tol" && toks.size() == 2) {
      cfg.sdp_tol = parse_num(toks[1], filename, lineno);
      if (!(cfg.sdp_tol > 0.0)) throw ParseError(filename, lineno, "sdp_tol must be positive");
    } else if (kw == "run") {
      if (toks.size() != 6 || toks[2] != "periods" || toks[4] != "relaxation") {
        throw ParseError(filename, lineno,
                         "expected: run <case> periods <N> relaxation <lr|nfr|both>");
      }
      RunSpec spec;
      spec.case_path = toks[1];
      spec.periods = static_cast<int>(parse_num(toks[3], filename, lineno));
      if (spec.periods < 1) throw ParseError(filename, lineno, "periods must be >= 1");
      spec.relaxation = toks[5];
      if (spec.relaxation != "lr" && spec.relaxation != "nfr" && spec.relaxation != "both") {
        throw ParseError(filename, lineno, "relaxation must be lr, nfr or both");
      }
      cfg.runs.push_back(spec);
    } else {
      throw ParseError(filename, lineno, "unknown directive '" + kw + "'");
    }
  }
  return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str(), path);
}

namespace {

// one row rendered as the nine report cells
std::vector<std::string> row_cells(const BenchRow& r) {
  char buf[64];
  std::vector<std::string> cells;
  cells.push_back(r.case_name);
  cells.push_back(r.relaxation);
  cells.push_back(std::to_string(r.periods));
  std::snprintf(buf, sizeof(buf), "%.6f", r.dual_bound);
  cells.emplace_back(buf);
  std::snprintf(buf, sizeof(buf), "%.6f", r.primal_bound);
  cells.emplace_back(buf);
  if (r.gap_defined) {
    std::snprintf(buf, sizeof(buf), "%.4f", r.gap_pct);
    cells.emplace_back(buf);
  } else {
    cells.emplace_back("undef");
  }
  std::snprintf(buf, sizeof(buf), "%.3f", r.time_s);
  cells.emplace_back(buf);
  std::snprintf(buf, sizeof(buf), "%.3e", r.infeasibility);
  cells.emplace_back(buf);
  std::snprintf(buf, sizeof(buf), "%" PRIu64, static_cast<std::uint64_t>(r.seed));
  cells.emplace_back(buf);
  return cells;
}

const char* kHeader[] = {"case",    "relaxation", "periods",       "dual_bound", "primal_bound",
                         "gap_pct", "time_s",     "infeasibility", "seed"};

}  // namespace

std::string to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  for (size_t i = 0; i < 9; ++i) out << (i ? "," : "") << kHeader[i];
  out << "\n";
  for (const BenchRow& r : rows) {
    if (r.failed) continue;
    const auto cells = row_cells(r);
    for (size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  }
  return out.str();
}

std::string to_markdown(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "|";
  for (const char* h : kHeader) out << " " << h << " |";
  out << "\n|";
  for (size_t i = 0; i < 9; ++i) out << " --- |";
  out << "\n";
  for (const BenchRow& r : rows) {
    if (r.failed) continue;
    out << "|";
    for (const auto& cell : row_cells(r)) out << " " << cell << " |";
    out << "\n";
  }
  return out.str();
}

}  // namespace mpopf
