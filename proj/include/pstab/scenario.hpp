#pragma once

#include <map>
#include <optional>

#include "pstab/tuning.hpp"

namespace pstab {

inline constexpr const char* kScenarioSchema = "pstab.scenario/1";

enum class Experiment {
  PowerFlow,
  Modes,
  RootLocus,
  TuneResidues,
  TunePVref,
  RetuneSequential,
  RetuneUncoordinated,
  Simulate,
  PVrefSweep,
};
const char* to_string(Experiment e);
Experiment parse_experiment(const std::string& s);

/// Legacy parameter sets, applied to every PSS slot.
PssParams legacy_set(const std::string& name);  // "A", "B", "set-A", "Set B", ...
bool is_legacy_set(const std::string& name);

struct ExperimentOptions {
  double t_end = 20.0;
  double dt = 0.005;
  std::string channel = "G4.P";
  double fit_from = 1.5;  // classification window start, s
  std::string slot = "PSS4";
  std::vector<std::string> order = {"PSS4", "PSS2"};
  TuningMethod method = TuningMethod::Residues;  // re-tuning experiments
  double gain_min = 0.1;
  double gain_max = 1000.0;
  int gain_points = 60;
  double max_lead_ratio = 20.0;
  bool use_probe = false;
  int sweep_points = 20;
};

struct Scenario {
  std::string name;
  /// "two-area-0ibr", "two-area-50ibr", "custom" or "state-space".
  std::string preset;
  PowerSystemModel model;
  /// Per-slot PSS assignment as written (set name or "explicit"), for reports.
  std::map<std::string, std::string> pss_source;
  std::vector<Disturbance> disturbances;
  Experiment experiment = Experiment::Modes;
  ExperimentOptions options;
  /// Tune-only workflow on an imported V_ref -> speed model.
  std::optional<StateSpaceModel> state_space;
  std::string state_space_host;
  std::string source_path;
};

/// Preset name or path to a scenario file.
Scenario load_scenario(const std::string& path_or_preset);
Scenario parse_scenario(const std::string& json_text, const std::string& origin = "<string>");
Scenario preset_scenario(const std::string& preset);

/// Fully expanded scenario (explicit network and devices); reloading it gives
/// the same model bit for bit.
std::string export_scenario(const Scenario& sc);

/// Installs `set` in every PSS slot (name or "off").
void assign_pss(Scenario& sc, const std::string& set);
void assign_pss(Scenario& sc, const std::string& slot, const PssParams& p, const std::string& source);

struct ModeRow {
  Complex lambda;
  double freq_hz = 0.0;
  double damping = 1.0;
  std::string cls;
  double rotor = 0.0;
  std::string dominant;
};

struct SweepRow {
  double freq_hz = 0.0;
  double tf_phase = 0.0;
  double probe_phase = 0.0;
  double compensated = 0.0;  // tf phase plus the fitted lead-lag phase
};

struct Report {
  std::string scenario;
  Experiment experiment = Experiment::Modes;
  std::map<std::string, std::string> pss_source;
  std::vector<std::pair<std::string, PssParams>> pss_before;
  std::vector<std::pair<std::string, PssParams>> pss_after;

  std::optional<PowerFlowResult> powerflow;
  std::vector<int> bus_ids;

  /// Modal results of the final system (after re-tuning where applicable).
  bool has_modes = false;
  bool modal_stable = true;
  double min_rotor_damping = 1.0;
  double max_sigma = 0.0;
  std::vector<ModeRow> modes;
  Mat participation;
  ModalAnalysis modal;

  std::vector<TuningResult> tuning;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  std::optional<Trajectory> trajectory;
  std::optional<StabilityVerdict> verdict;
  /// Modal flag and time-domain verdict agree (simulate only).
  std::optional<bool> sign_agreement;

  std::vector<SweepRow> sweep;
  LeadLagFit sweep_fit;

  std::vector<std::string> artifacts;

  /// 0 stable, 2 unstable; non-simulate experiments return 0.
  int exit_code() const;
};

Report run_experiment(const Scenario& sc);

/// Report as JSON (numerics at full precision).
std::string report_json(const Report& r);

/// Human-readable summary for terminals.
std::string report_summary(const Report& r);

/// Writes CSV, SVG, report.json and manifest.json under `out_dir`; the
/// returned report lists the artifact paths.
Report write_artifacts(Report r, const Scenario& sc, const std::string& out_dir);

/// Table of the installed PSS parameters in K_PSS, T_W, T1..T4 order.
void write_pss_table(std::ostream& os, const std::vector<std::pair<std::string, PssParams>>& rows);
std::string format_pss_row(const PssParams& p);

}  // namespace pstab
