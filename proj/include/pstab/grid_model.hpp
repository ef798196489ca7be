#pragma once

#include <map>
#include <optional>

#include "pstab/dae.hpp"

namespace pstab {

enum class BusType { Slack, PV, PQ };

struct Bus {
  int id = 0;
  BusType type = BusType::PQ;
  double v_set = 1.0;      // pu, PV and slack buses
  double angle_set = 0.0;  // rad, slack bus
  double p_gen = 0.0;      // pu on system base, scheduled generation
  double q_gen = 0.0;      // pu, PQ generation
  double shunt_b = 0.0;    // pu, capacitor banks
};

struct Branch {
  int from = 0;
  int to = 0;
  Complex z{0.0, 0.1};  // series impedance, pu
  double b = 0.0;       // total charging susceptance, pu
};

/// Constant-current active power, constant-impedance reactive power.
struct Load {
  std::string name;
  int bus = 0;
  double p = 0.0;  // pu at the power-flow voltage
  double q = 0.0;
  double scale = 1.0;
};

struct ExciterAvr {
  double ka = 150.0;
  double tr = 0.01;
  double ta = 0.0;  // 0: static exciter, field voltage is algebraic in the states
  double efd_min = -5.0;
  double efd_max = 5.0;
};

struct Governor {
  double droop = 0.05;  // pu on machine base
  double ts = 0.2;      // servo
  double trh = 7.0;     // reheater
  double fhp = 0.3;     // high-pressure fraction
  double pmin = 0.0;
  double pmax = 1.0;
};

/// PSS transfer function  K * sTw/(1+sTw) * (1+sT1)/(1+sT2) * (1+sT3)/(1+sT4),
/// input machine speed deviation, output added to the AVR error signal.
struct PssParams {
  double k = 0.0;
  double tw = 10.0;
  double t1 = 1.0;
  double t2 = 1.0;
  double t3 = 1.0;
  double t4 = 1.0;
  double vmin = -0.1;
  double vmax = 0.1;

  void validate(const std::string& who) const;
  bool operator==(const PssParams&) const = default;
};

/// Sixth-order two-axis machine. Reactances and time constants on machine base.
struct SyncMachine {
  std::string name;
  int bus = 0;
  double mva = 900.0;
  double h = 6.5;
  double d = 0.0;
  double ra = 0.0025;
  double xd = 1.8, xq = 1.7;
  double xd1 = 0.3, xq1 = 0.55;
  double xd2 = 0.25, xq2 = 0.25;
  double td01 = 8.0, tq01 = 0.4;
  double td02 = 0.03, tq02 = 0.05;
  std::optional<ExciterAvr> avr;
  std::optional<Governor> gov;
  std::optional<PssParams> pss;  // the machine's PSS slot

  void validate() const;
};

/// Grid-following converter: PLL, active-power loop, reactive-power loop with
/// voltage support, first-order inner current loop, RL coupling reactor.
struct GflConverter {
  std::string name;
  int bus = 0;
  double mva = 900.0;
  double pll_kp = 0.4714;
  double pll_ki = 41.89;
  double p_kp = 0.05;
  double p_ki = 31.4;
  double q_kp = 0.05;
  double q_ki = 31.4;
  double kv = 0.4;    // pu reactive power per pu voltage error
  double tc = 0.01;   // inner current loop
  double tv = 0.01;   // voltage measurement
  double r = 0.003;   // reactor, converter base
  double x = 0.15;
  double imax = 1.2;  // converter base

  void validate() const;
};

struct PowerSystemModel {
  std::string name;
  double base_mva = 100.0;
  double f_nom = 60.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Load> loads;
  std::vector<SyncMachine> machines;
  std::vector<GflConverter> converters;

  void validate() const;
  std::size_t bus_index(int id) const;
  const SyncMachine& machine(const std::string& name) const;
  SyncMachine& machine(const std::string& name);
  /// PSS slots are named after their host machine bus, e.g. "PSS4".
  std::vector<std::string> pss_slots() const;
  SyncMachine& pss_host(const std::string& slot);
  const SyncMachine& pss_host(const std::string& slot) const;
  double omega_base() const { return 2.0 * kPi * f_nom; }
};

std::string pss_slot_name(const SyncMachine& m);

enum class IbrShare { Zero, Fifty };

/// Kundur two-area network. At 50 % the machines at Buses 1 and 3 are swapped
/// for grid-following converters at the same dispatch.
PowerSystemModel build_two_area(IbrShare share);

/// Bus voltage and injection solution.
struct PowerFlowResult {
  CVec v;         // bus voltage phasors
  CVec s_inj;     // net injection per bus (generation - load), pu
  CVec s_gen;     // generation per bus
  int iterations = 0;
  double mismatch = 0.0;
};

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 50;
};

CMat build_ybus(const PowerSystemModel& model);
PowerFlowResult solve_power_flow(const PowerSystemModel& model, const PowerFlowOptions& opt = {});

/// Active power flow on a branch at its from-bus end.
double branch_flow(const PowerSystemModel& model, const PowerFlowResult& pf, int from, int to);

/// The power system as a DAE: machine/controller/converter states, bus voltage
/// real and imaginary parts as algebraic variables.
class GridDae final : public Dae {
 public:
  /// `pf` fixes the load reference voltages.
  GridDae(PowerSystemModel model, const PowerFlowResult& pf);

  const Labels& state_labels() const override { return state_labels_; }
  const Labels& algebraic_labels() const override { return alg_labels_; }
  const Labels& input_labels() const override { return input_labels_; }
  const Labels& output_labels() const override { return output_labels_; }

  void residual(const Vec& x, const Vec& y, const Vec& u, Vec& f, Vec& g) const override;
  void outputs(const Vec& x, const Vec& y, const Vec& u, Vec& z) const override;
  Labels active_limiters(const Vec& x, const Vec& y, const Vec& u) const override;

  const PowerSystemModel& model() const { return model_; }

  /// Steady state consistent with the power flow: f = 0, g = 0.
  DaePoint initialize(const PowerFlowResult& pf) const;

  /// States of devices that measure the voltage of `bus`.
  std::vector<std::size_t> voltage_sensing_states(int bus) const;
  /// Rotor angle and speed states of every machine.
  std::vector<std::size_t> shaft_states() const;
  /// State category for modal classification: "rotor", "flux", "avr",
  /// "governor", "pss", "gfl".
  std::string state_group(std::size_t i) const;

 private:
  struct MachineLayout {
    std::size_t x0 = 0;  // delta, dw, eq1, ed1, eq2, ed2
    std::optional<std::size_t> avr, efd, gov, pss;
    std::size_t bus = 0;
    std::size_t in_vref = 0, in_pref = 0, in_pss = 0;
  };
  struct ConverterLayout {
    std::size_t x0 = 0;  // theta, xpll, xp, xq, id, iq, vm
    std::size_t bus = 0;
    std::size_t in_pref = 0, in_qref = 0, in_vref = 0;
  };
  struct MachineEval;
  MachineEval eval_machine(std::size_t k, const Vec& x, const Vec& y, const Vec& u) const;
  struct ConverterEval;
  ConverterEval eval_converter(std::size_t k, const Vec& x, const Vec& y, const Vec& u) const;

  PowerSystemModel model_;
  CMat ybus_;
  std::vector<double> load_v0_;
  std::vector<std::size_t> load_bus_;
  std::vector<MachineLayout> ml_;
  std::vector<ConverterLayout> cl_;
  std::vector<std::string> groups_;
  Labels state_labels_, alg_labels_, input_labels_, output_labels_;
};

/// Solve the power flow and initialize the dynamic states.
struct OperatingPoint {
  PowerFlowResult pf;
  DaePoint point;
};

OperatingPoint init_dynamic_states(const GridDae& dae, const PowerFlowResult& pf);

/// Convenience: model -> power flow -> DAE -> equilibrium.
struct SolvedSystem {
  std::shared_ptr<const GridDae> dae;
  OperatingPoint op;
};
SolvedSystem solve_system(const PowerSystemModel& model);

}  // namespace pstab
