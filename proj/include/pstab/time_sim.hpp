#pragma once

#include <iosfwd>

#include "pstab/grid_model.hpp"

namespace pstab {

enum class DisturbanceKind { LoadStep, VrefSinusoid };

/// Input perturbation applied from `start_time` on. Load steps scale the
/// load by (1 + magnitude); sinusoids add magnitude * sin(2 pi f (t - start)).
struct Disturbance {
  DisturbanceKind kind = DisturbanceKind::LoadStep;
  std::string target;  // load name ("L9") or generator name ("G4")
  double magnitude = 0.0;
  double start_time = 0.0;
  double frequency = 0.0;

  void validate() const;
  std::string input_label() const;
};

/// Load increase of `fraction` at the load on `bus`, at time `t`.
Disturbance apply_load_step(const PowerSystemModel& model, int bus, double fraction, double t);
Disturbance vref_sinusoid(const std::string& gen, double amplitude, double freq_hz, double start_time = 0.0);

struct Trajectory {
  std::vector<double> time;
  Labels channels;
  std::vector<std::vector<double>> data;  // one series per channel
  std::string scenario;
  double dt = 0.0;

  const std::vector<double>& channel(const std::string& name) const;
};

struct SimOptions {
  double t_end = 20.0;
  double dt = 0.005;
  double newton_tol = 1e-8;
  int max_newton = 12;
  /// Output or state labels to record; empty records every output.
  Labels channels;
  std::string scenario;
};

/// Implicit trapezoidal integration of the DAE from the point `p0`.
Trajectory simulate(const Dae& dae, const DaePoint& p0, const std::vector<Disturbance>& disturbances,
                    const SimOptions& opt = {});

enum class StabilityClass { Decaying, Sustained, Growing };
const char* to_string(StabilityClass c);

struct StabilityVerdict {
  StabilityClass cls = StabilityClass::Decaying;
  double sigma = 0.0;  // 1/s
  double freq_hz = 0.0;
  std::string channel;
  bool oscillation_free = false;
  bool fallback = false;  // envelope-ratio estimate used instead of the fit
};

/// Growth-rate thresholds (1/s) separating decaying / sustained / growing.
inline constexpr double kGrowingSigma = 0.005;

/// Fits A e^{sigma t} cos(2 pi f t + phi) + c + B e^{rho t} to the channel
/// on t >= t_from and classifies by sigma.
StabilityVerdict classify_stability(const Trajectory& traj, const std::string& channel, double t_from);

struct ProbeOptions {
  int discard_cycles = 10;
  int measure_cycles = 10;
  double max_dt = 0.005;
  int min_samples_per_cycle = 200;
};

/// Steady-state complex gain of `output` relative to a small sinusoid on
/// `input`, by single-frequency least squares over the measured cycles.
Complex sinusoid_probe(const Dae& dae, const DaePoint& p0, const std::string& input, const std::string& output,
                       double freq_hz, double amplitude, const ProbeOptions& opt = {});

/// V_ref -> P probe of generator `gen`; the caller supplies a model whose
/// inertias were already scaled up.
Complex vref_probe(const GridDae& dae, const DaePoint& p0, const std::string& gen, double freq_hz,
                   double amplitude = 1e-3, const ProbeOptions& opt = {});

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace pstab
