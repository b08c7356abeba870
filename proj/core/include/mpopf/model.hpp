// Multi-period network model in rectangular voltage coordinates.
//
// Voltages are stacked as z = (e_0..e_{n-1}, f_0..f_{n-1}); every power
// expression in the toolkit is a quadratic form in z built from the
// primitives below, so index packing lives in exactly one place.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mpopf {

enum class DeviceKind { Generator, Flexible, StaticLoad };
enum class ObjectiveKind { GenerationCost, Curtailment };

struct Bus {
  std::string name;
  double vmin = 0.9;  // per-unit voltage magnitude window
  double vmax = 1.1;
};

// Series admittance g + jb of a line; g > 0 (lossy), b < 0 (inductive).
struct Branch {
  int from = 0;
  int to = 0;
  double g = 0.0;
  double b = 0.0;
};

// A device produces (generator) or consumes (flexible/static load) power at
// one bus. Real-power windows are per period; generators may carry
// time-varying availability in pmax. The capability rows couple (P, Q)
// within a period: cap_A * (P; Q) <= cap_a, identical across periods.
//
// A flexible load follows its baseline profile exactly while idle. Paying
// the availability fee (d = 1) unlocks the modulation window [pmin, pmax],
// subject to drawing the same total energy as the baseline.
struct Device {
  std::string name;
  DeviceKind kind = DeviceKind::Generator;
  int bus = 0;
  std::vector<double> pmin, pmax;  // size periods
  std::vector<double> qmin, qmax;  // size periods
  Eigen::MatrixXd cap_A;           // rows x 2, may be empty
  Eigen::VectorXd cap_a;
  // generator cost a*P^2 + b*P + c per period
  std::vector<double> cost_a, cost_b, cost_c;
  // flexible commitment: baseline consumption per period and availability fee
  std::vector<double> baseline;
  double fee = 0.0;

  double baseline_energy() const;
};

struct Case {
  std::string name;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Device> devices;
  int periods = 1;
  ObjectiveKind objective = ObjectiveKind::GenerationCost;
  double curtail_price = 0.0;  // price on unused generator headroom
  double loss_price = 0.0;     // price on flexible consumption

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_devices() const { return static_cast<int>(devices.size()); }
  std::vector<int> devices_at(int bus) const;
  std::vector<int> flexible_devices() const;
};

// +1 if the device injects into the bus, -1 if it draws from it.
double injection_sign(DeviceKind kind);

// Problems found in a case description; empty means well formed.
std::vector<std::string> validate(const Case& c);
void validate_or_throw(const Case& c);

struct OperatingPoint {
  std::vector<Eigen::VectorXd> z;  // per period, size 2 * num_buses
  Eigen::MatrixXd P, Q;            // num_devices x periods
  std::vector<int> on;             // commitment per device; loads/generators use 1

  static OperatingPoint zeros(const Case& c);
};

struct BranchPQ {
  double p_from = 0.0, q_from = 0.0;
  double p_to = 0.0, q_to = 0.0;
};
BranchPQ branch_flow(const Branch& br, const Eigen::VectorXd& z);
double branch_loss(const Branch& br, const Eigen::VectorXd& z);

// Symmetric 2n x 2n forms with z' M z equal to the net real (reactive)
// power flowing out of `bus` into the network.
Eigen::MatrixXd active_injection_form(const Case& c, int bus);
Eigen::MatrixXd reactive_injection_form(const Case& c, int bus);

// Net device injections per bus for period t.
void bus_injections(const Case& c, const OperatingPoint& pt, int t, Eigen::VectorXd& pinj,
                    Eigen::VectorXd& qinj);

// Power-flow mismatch and voltage-window violations at one period.
struct PfResidual {
  Eigen::VectorXd rp, rq;    // network minus device injections
  Eigen::VectorXd vlo, vhi;  // max(0, bound violation) on squared magnitude
};
PfResidual pf_residuals(const Case& c, const Eigen::VectorXd& z, const Eigen::VectorXd& pinj,
                        const Eigen::VectorXd& qinj);

// Sum of squared flow residuals and voltage-window violations over the
// whole horizon; the feasibility figure reported by the benchmark.
double infeasibility(const Case& c, const OperatingPoint& pt);

double objective_value(const Case& c, const OperatingPoint& pt);

// Worst violation per constraint family at a candidate point.
struct CheckReport {
  double flow = 0.0;        // |rP|, |rQ| max
  double voltage = 0.0;     // squared-magnitude window
  double device_box = 0.0;  // P/Q windows incl. commitment gating
  double capability = 0.0;  // cap_A (P;Q) <= cap_a rows
  double flex_energy = 0.0; // committed energy balance
  double worst() const;
  bool ok(double tol) const { return worst() <= tol; }
};
CheckReport check_point(const Case& c, const OperatingPoint& pt);

}  // namespace mpopf
