// Command-line front end over the C API.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pstab/pstab.h"

namespace {

struct ScenarioDeleter {
  void operator()(pstab_scenario* s) const { pstab_scenario_free(s); }
};
struct ReportDeleter {
  void operator()(pstab_report* r) const { pstab_report_free(r); }
};
using ScenarioPtr = std::unique_ptr<pstab_scenario, ScenarioDeleter>;
using ReportPtr = std::unique_ptr<pstab_report, ReportDeleter>;

struct Failure {
  std::string msg;
};

void check(pstab_status s, const char* what) {
  if (s != PSTAB_OK) throw Failure{std::string(what) + ": " + pstab_status_string(s) + ": " + pstab_last_error()};
}

struct Common {
  std::string scenario = "two-area-0ibr";
  std::string out_dir;
  std::string set;
  std::string slot;
  std::string method;
  std::string order;
  std::string channel;
  double t_end = 0.0;
  double dt = 0.0;
  bool probe = false;
  bool uncoordinated = false;
  bool json = false;
  bool quiet = false;
  std::string export_path;
  std::string plant_path;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-s,--scenario", c.scenario, "preset (two-area-0ibr, two-area-50ibr) or scenario file")
      ->capture_default_str();
  sub->add_option("-o,--out-dir", c.out_dir, "write CSV/SVG/JSON artifacts and a manifest here");
  sub->add_option("--set", c.set, "PSS parameters for every slot: A, B or off");
  sub->add_flag("--json", c.json, "print the report as JSON instead of the summary");
  sub->add_flag("-q,--quiet", c.quiet, "print nothing on success");
}

int run(const std::string& experiment, const Common& c) {
  pstab_scenario* raw = nullptr;
  check(pstab_scenario_load(c.scenario.c_str(), &raw), "loading scenario");
  ScenarioPtr sc(raw);
  if (!c.set.empty()) check(pstab_scenario_set_pss(sc.get(), c.set.c_str()), "--set");
  if (!experiment.empty() && experiment != "export") check(pstab_scenario_set_experiment(sc.get(), experiment.c_str()), "experiment");
  auto opt = [&](const char* key, const std::string& v) {
    if (!v.empty()) check(pstab_scenario_set_option(sc.get(), key, v.c_str()), key);
  };
  opt("slot", c.slot);
  opt("method", c.method);
  opt("order", c.order);
  opt("channel", c.channel);
  if (c.t_end > 0) opt("t_end", std::to_string(c.t_end));
  if (c.dt > 0) opt("dt", std::to_string(c.dt));
  if (c.probe) opt("use_probe", "true");

  if (!c.plant_path.empty()) {
    const std::string slot = c.slot.empty() ? "PSS4" : c.slot;
    check(pstab_scenario_export_plant(sc.get(), slot.c_str(), c.plant_path.c_str()), "--save-plant");
  }
  if (!c.export_path.empty()) {
    char* text = nullptr;
    check(pstab_scenario_export(sc.get(), &text), "export");
    std::unique_ptr<char, void (*)(char*)> guard(text, pstab_string_free);
    FILE* f = c.export_path == "-" ? stdout : std::fopen(c.export_path.c_str(), "wb");
    if (!f) throw Failure{"cannot write " + c.export_path};
    std::fputs(text, f);
    if (f != stdout) std::fclose(f);
    if (experiment == "export") return 0;
  }

  pstab_report* rr = nullptr;
  check(pstab_run(sc.get(), &rr), "running experiment");
  ReportPtr rep(rr);
  if (!c.out_dir.empty()) check(pstab_report_write(rep.get(), sc.get(), c.out_dir.c_str()), "writing artifacts");
  if (!c.quiet) {
    char* text = nullptr;
    check(c.json ? pstab_report_json(rep.get(), &text) : pstab_report_summary(rep.get(), &text), "report");
    std::fputs(text, stdout);
    pstab_string_free(text);
  }
  return pstab_report_exit_code(rep.get());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-signal analysis, PSS tuning and simulation of multi-machine power systems"};
  app.set_version_flag("--version", std::string(pstab_version()));
  app.require_subcommand(1);

  Common c;
  std::string chosen;

  auto* pf = app.add_subcommand("powerflow", "solve the power flow");
  add_common(pf, c);

  auto* modes = app.add_subcommand("modes", "eigenvalues, damping ratios and mode classes");
  add_common(modes, c);
  modes->add_option("--save-plant", c.plant_path, "also write the V_ref -> (speed, P) model of --slot's generator");
  modes->add_option("--slot", c.slot, "PSS slot for --save-plant (default PSS4)");

  auto* rl = app.add_subcommand("rootlocus", "root locus of a slot's installed PSS over the gain grid");
  add_common(rl, c);
  rl->add_option("--slot", c.slot, "PSS slot, e.g. PSS4");

  auto* tune = app.add_subcommand("tune", "re-tune one PSS slot");
  add_common(tune, c);
  tune->add_option("--slot", c.slot, "PSS slot, e.g. PSS4");
  tune->add_option("--method", c.method, "residues or pvref")->check(CLI::IsMember({"residues", "pvref", "p-vref"}));
  tune->add_flag("--probe", c.probe, "P-Vref phase from the simulated probe instead of the frozen-shaft model");

  auto* retune = app.add_subcommand("retune", "re-tune several PSS slots");
  add_common(retune, c);
  retune->add_option("--order", c.order, "comma-separated slots, e.g. PSS4,PSS2");
  retune->add_option("--method", c.method, "residues or pvref")->check(CLI::IsMember({"residues", "pvref", "p-vref"}));
  retune->add_flag("--uncoordinated", c.uncoordinated, "tune every slot against the starting model");
  retune->add_flag("--probe", c.probe, "P-Vref phase from the simulated probe");

  auto* sim = app.add_subcommand("simulate", "nonlinear simulation and stability verdict (exit 0 stable, 2 unstable)");
  add_common(sim, c);
  sim->add_option("--channel", c.channel, "output to classify, e.g. G4.P");
  sim->add_option("--t-end", c.t_end, "simulation length, s");
  sim->add_option("--dt", c.dt, "time step, s");

  auto* sweep = app.add_subcommand("sweep", "P-Vref phase: frozen-shaft model, simulation probe and lead-lag fit");
  add_common(sweep, c);
  sweep->add_option("--slot", c.slot, "PSS slot whose generator is swept");

  auto* report = app.add_subcommand("report", "run the experiment named in the scenario file");
  add_common(report, c);
  report->add_option("--export", c.export_path, "also write the fully expanded scenario ('-' for stdout)");

  auto* exp = app.add_subcommand("export", "write the fully expanded scenario");
  add_common(exp, c);
  exp->add_option("file", c.export_path, "output file ('-' for stdout)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pf->parsed()) chosen = "powerflow";
    else if (modes->parsed()) chosen = "modes";
    else if (rl->parsed()) chosen = "root-locus";
    else if (tune->parsed()) chosen = (c.method == "pvref" || c.method == "p-vref") ? "tune-pvref" : "tune-residues";
    else if (retune->parsed()) chosen = c.uncoordinated ? "retune-uncoordinated" : "retune-sequential";
    else if (sim->parsed()) chosen = "simulate";
    else if (sweep->parsed()) chosen = "pvref-sweep";
    else if (exp->parsed()) chosen = "export";
    if (chosen == "tune-pvref" || chosen == "tune-residues") c.method.clear();
    return run(chosen, c);
  } catch (const Failure& f) {
    std::fprintf(stderr, "pstab: %s\n", f.msg.c_str());
    return 1;
  }
}
