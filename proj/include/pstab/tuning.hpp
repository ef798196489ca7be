#pragma once

#include <functional>
#include <optional>

#include "pstab/modal.hpp"
#include "pstab/time_sim.hpp"

namespace pstab {

/// Phase magnitude the lead-lag blocks must supply, |theta_R - 180|.
double compensation_angle(double residue_angle_deg);

/// Lead-lag blocks needed for `theta_deg`: 1 below 60, 2 below 120, else 3.
int block_count(double theta_deg);

/// Largest phase a single lead-lag block is asked to supply.
inline constexpr double kMaxBlockPhase = 60.0;

/// N identical blocks (1 + sT)/(1 + saT) with total phase `theta_deg` at
/// `omega_c`. Negative angles give lag blocks (a > 1).
struct LeadLagDesign {
  double theta_deg = 0.0;
  int n = 1;
  double omega_c = 1.0;
  double a = 1.0;
  double t = 1.0;
};
LeadLagDesign leadlag_design(double theta_deg, int n, double omega_c);

/// Phase (degrees) of the design's N-block chain at `w`.
double leadlag_phase_deg(const LeadLagDesign& d, double w);

/// K * sTw/(1+sTw) * (1+sT1)/(1+sT2) * (1+sT3)/(1+sT4) at s = jw.
Complex pss_response(const PssParams& p, double w, bool with_washout = true);

/// Washout from the critical-mode frequency: 10 s below 2 Hz, else 1 s.
double washout_for(double freq_hz);

/// PSS as a linear system (states xw, x1, x2), input speed deviation, output V_PSS.
StateSpaceModel pss_state_space(const PssParams& p, const std::string& prefix);

/// Closes a PSS around a SISO plant `input` -> `output` (V_ref -> speed):
/// u = V_PSS. Result has the plant states followed by the PSS states.
StateSpaceModel close_pss_loop(const StateSpaceModel& plant, const std::string& input, const std::string& output,
                               const PssParams& p, const std::string& prefix);

struct RootLocus {
  std::vector<double> gains;              // ascending, first entry 0
  std::vector<std::vector<Complex>> poles;  // [gain][branch], branches matched by continuity
  std::vector<std::vector<double>> rotor;   // [gain][branch] rotor participation
  std::vector<Complex> zeros;             // finite limiting zeros
  Labels state_labels;
};

/// Closed-loop state matrix for a gain.
using ClosedLoopFn = std::function<StateSpaceModel(double gain)>;

/// Eigenvalues over `gains`, matched branch to branch by nearest neighbour.
RootLocus root_locus(const ClosedLoopFn& closed_loop, const std::vector<double>& gains);

/// 0 followed by `points` log-spaced gains in [lo, hi].
std::vector<double> gain_grid(double lo = 0.1, double hi = 1000.0, int points = 60);

struct GainChoice {
  double gain = 0.0;
  double min_damping = 0.0;
  bool stabilizable = true;
};

/// Damping ratios that count for gain selection at grid point i: branches
/// with rotor participation >= 0.3 and any unstable branch.
double electromechanical_min_damping(const RootLocus& rl, std::size_t i);

/// Grid gain maximizing the minimum electromechanical damping ratio; ties go
/// to the smaller gain. The K = 0 point is not a candidate.
GainChoice select_gain(const RootLocus& rl);

enum class TuningMethod { Residues, PVref };
const char* to_string(TuningMethod m);
TuningMethod parse_tuning_method(const std::string& s);

struct PhaseResponse {
  std::vector<double> freq_hz;
  std::vector<double> phase_deg;  // unwrapped
  std::vector<double> magnitude;
  std::string source;  // "frozen-shaft-tf" or "simulation-probe"
};

/// 20 log-spaced points over [0.1, 10] Hz.
std::vector<double> pvref_grid(int points = 20);

/// Phase of c (jwI - A)^-1 b over the grid, unwrapped from the first point.
PhaseResponse tf_phase(const StateSpaceModel& siso, const std::vector<double>& freq_hz);

struct LeadLagFit {
  double t1 = 1.0, t2 = 1.0, t3 = 1.0, t4 = 1.0;
  double rms_deg = 0.0;  // weighted RMS of the compensated phase
  bool warning = false;  // rms above 20 degrees
};

/// Least-squares fit of N tied blocks to -target over the grid; points inside
/// [band_lo, band_hi] Hz weigh 5x. Each block's T1/T2 ratio (or its inverse)
/// is held to `max_ratio`; 0 leaves it free.
LeadLagFit fit_leadlag_to_phase(const PhaseResponse& target, int n, double band_lo = 0.2, double band_hi = 2.0,
                                double max_ratio = 0.0);

/// Everything a tuning method needs to know about the plant around one PSS slot.
struct TuningPlant {
  std::string slot;
  std::string host;
  /// V_ref -> speed model with the slot's PSS disabled.
  StateSpaceModel vref_speed;
  /// Full closed-loop state-space model with `p` installed in the slot.
  std::function<StateSpaceModel(const PssParams& p)> closed_loop;
  /// Frozen-shaft V_ref -> P model of the host (empty when unavailable).
  std::optional<StateSpaceModel> frozen_shaft;
  /// Finite limiting zeros of the loop (may be empty).
  std::function<std::vector<Complex>(const PssParams& p)> zeros;
};

/// Plant around `slot` from a full power-system model (other PSSs as installed).
TuningPlant model_plant(const PowerSystemModel& model, const std::string& slot);

/// Plant from an imported V_ref -> speed (and optionally P) state-space model.
/// The loop is closed algebraically.
TuningPlant state_space_plant(const StateSpaceModel& ss, const std::string& host, const std::string& slot);

struct TuningResult {
  std::string slot;
  TuningMethod method = TuningMethod::Residues;
  PssParams params;
  double min_damping = 0.0;
  bool stabilizable = true;
  Complex critical;        // lambda_c
  Complex residue;         // R_c (Residues)
  double residue_angle = 0.0;
  double compensation = 0.0;  // signed phase asked of the blocks, degrees
  int blocks = 0;
  bool capped = false;        // three blocks needed, two fitted
  double fit_rms = 0.0;       // P-Vref fit residual
  std::vector<std::string> warnings;
  RootLocus locus;
  PhaseResponse phase;
};

struct TuneOptions {
  std::vector<double> gains = gain_grid();
  /// P-Vref phase from the simulated probe instead of the frozen-shaft model.
  bool use_probe = false;
  ProbeOptions probe;
  /// Per-block T1/T2 bound for the P-Vref fit; 0 leaves it free.
  double max_lead_ratio = 20.0;
};

TuningResult tune_residues(const TuningPlant& plant, const TuneOptions& opt = {});
TuningResult tune_pvref(const TuningPlant& plant, const TuneOptions& opt = {});
TuningResult tune(const TuningPlant& plant, TuningMethod method, const TuneOptions& opt = {});

/// Model-level entry points; the slot's current PSS is disabled for the plant.
TuningResult tune_slot(const PowerSystemModel& model, const std::string& slot, TuningMethod method,
                       const TuneOptions& opt = {});

/// Simulation probe of the V_ref -> P phase with every machine's inertia
/// scaled by `inertia_scale`.
PhaseResponse probe_pvref_phase(const PowerSystemModel& model, const std::string& gen,
                                const std::vector<double>& freq_hz, double inertia_scale = 1e6,
                                const ProbeOptions& opt = {});

/// Frozen-shaft V_ref -> P phase of `gen` in `model`.
PhaseResponse frozen_shaft_phase(const PowerSystemModel& model, const std::string& gen,
                                 const std::vector<double>& freq_hz);

struct RetuneOutcome {
  std::vector<TuningResult> steps;
  std::vector<std::string> errors;  // per-slot failures, empty on success
  PowerSystemModel model;           // with every result applied
  bool stable = false;
  double min_rotor_damping = 0.0;
};

/// Tunes slots in order, each against the model with earlier results installed.
RetuneOutcome retune_sequential(const PowerSystemModel& model, const std::vector<std::string>& order,
                                TuningMethod method, const TuneOptions& opt = {});

/// Tunes every slot against the starting model, then applies all results together.
RetuneOutcome retune_uncoordinated(const PowerSystemModel& model, const std::vector<std::string>& slots,
                                   TuningMethod method, const TuneOptions& opt = {});

/// Modal summary of a model: stability and minimum rotor-mode damping.
struct ModalSummary {
  bool stable = true;
  double min_rotor_damping = 1.0;
  Complex least_damped_rotor;
  double max_sigma = 0.0;  // largest real part of non-neutral modes
};
ModalSummary modal_summary(const PowerSystemModel& model);

void write_tuning_csv(std::ostream& os, const std::vector<TuningResult>& results);

}  // namespace pstab
