#include "pstab/pstab.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>

#include "pstab/scenario.hpp"

struct pstab_scenario {
  pstab::Scenario sc;
};

struct pstab_report {
  pstab::Report rep;
};

namespace {

thread_local std::string g_last_error;

pstab_status to_status(pstab::ErrorCode c) {
  switch (c) {
    case pstab::ErrorCode::InvalidArgument: return PSTAB_ERR_INVALID_ARGUMENT;
    case pstab::ErrorCode::Parse: return PSTAB_ERR_PARSE;
    case pstab::ErrorCode::Schema: return PSTAB_ERR_SCHEMA;
    case pstab::ErrorCode::Convergence: return PSTAB_ERR_CONVERGENCE;
    case pstab::ErrorCode::Singular: return PSTAB_ERR_SINGULAR;
    case pstab::ErrorCode::Numeric: return PSTAB_ERR_NUMERIC;
    case pstab::ErrorCode::Io: return PSTAB_ERR_IO;
    case pstab::ErrorCode::Internal: return PSTAB_ERR_INTERNAL;
  }
  return PSTAB_ERR_INTERNAL;
}

pstab_status fail(pstab_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
pstab_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return PSTAB_OK;
  } catch (const pstab::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(PSTAB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PSTAB_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PSTAB_ERR_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

pstab::PssParams from_c(const pstab_pss_params& p) {
  pstab::PssParams q;
  q.k = p.k;
  q.tw = p.tw;
  q.t1 = p.t1;
  q.t2 = p.t2;
  q.t3 = p.t3;
  q.t4 = p.t4;
  q.vmin = p.vmin;
  q.vmax = p.vmax;
  return q;
}

pstab_pss_params to_c(const pstab::PssParams& p) {
  return {p.k, p.tw, p.t1, p.t2, p.t3, p.t4, p.vmin, p.vmax};
}

double parse_double(const char* key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw pstab::Error(pstab::ErrorCode::InvalidArgument, std::string(key) + ": not a number: " + v);
  return d;
}

int parse_int(const char* key, const std::string& v) {
  char* end = nullptr;
  const long d = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') throw pstab::Error(pstab::ErrorCode::InvalidArgument, std::string(key) + ": not an integer: " + v);
  return static_cast<int>(d);
}

bool parse_bool(const char* key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw pstab::Error(pstab::ErrorCode::InvalidArgument, std::string(key) + ": expected true or false: " + v);
}

void check_slot(const pstab::Scenario& sc, const std::string& slot) {
  if (sc.state_space) return;
  const auto slots = sc.model.pss_slots();
  if (std::find(slots.begin(), slots.end(), slot) == slots.end())
    throw pstab::Error(pstab::ErrorCode::InvalidArgument, "no PSS slot " + slot + " in this system");
}

#define REQUIRE_ARG(x) \
  if (!(x)) return fail(PSTAB_ERR_INVALID_ARGUMENT, #x " must not be null")

}  // namespace

extern "C" {

const char* pstab_version(void) { return pstab::kVersion; }

const char* pstab_last_error(void) { return g_last_error.c_str(); }

const char* pstab_status_string(pstab_status s) {
  switch (s) {
    case PSTAB_OK: return "ok";
    case PSTAB_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PSTAB_ERR_PARSE: return "parse error";
    case PSTAB_ERR_SCHEMA: return "schema error";
    case PSTAB_ERR_CONVERGENCE: return "convergence failure";
    case PSTAB_ERR_SINGULAR: return "singular matrix";
    case PSTAB_ERR_NUMERIC: return "numerical error";
    case PSTAB_ERR_IO: return "i/o error";
    case PSTAB_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void pstab_string_free(char* s) { std::free(s); }

pstab_status pstab_scenario_load(const char* path_or_preset, pstab_scenario** out) {
  REQUIRE_ARG(path_or_preset);
  REQUIRE_ARG(out);
  *out = nullptr;
  return guarded([&] { *out = new pstab_scenario{pstab::load_scenario(path_or_preset)}; });
}

pstab_status pstab_scenario_parse(const char* json_text, pstab_scenario** out) {
  REQUIRE_ARG(json_text);
  REQUIRE_ARG(out);
  *out = nullptr;
  return guarded([&] { *out = new pstab_scenario{pstab::parse_scenario(json_text)}; });
}

void pstab_scenario_free(pstab_scenario* sc) { delete sc; }

pstab_status pstab_scenario_export(const pstab_scenario* sc, char** json_out) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(json_out);
  *json_out = nullptr;
  return guarded([&] { *json_out = dup(pstab::export_scenario(sc->sc)); });
}

pstab_status pstab_scenario_set_pss(pstab_scenario* sc, const char* set) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(set);
  return guarded([&] {
    if (sc->sc.state_space) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "a state-space system has no PSS slots");
    auto copy = sc->sc;
    pstab::assign_pss(copy, set);
    sc->sc = std::move(copy);
  });
}

pstab_status pstab_scenario_set_pss_params(pstab_scenario* sc, const char* slot, const pstab_pss_params* p) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(slot);
  REQUIRE_ARG(p);
  return guarded([&] {
    check_slot(sc->sc, slot);
    if (sc->sc.state_space) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "a state-space system has no PSS slots");
    pstab::assign_pss(sc->sc, slot, from_c(*p), "explicit");
  });
}

pstab_status pstab_scenario_get_pss_params(const pstab_scenario* sc, const char* slot, pstab_pss_params* out) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(slot);
  REQUIRE_ARG(out);
  return guarded([&] {
    if (sc->sc.state_space) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "a state-space system has no PSS slots");
    check_slot(sc->sc, slot);
    *out = to_c(*sc->sc.model.pss_host(slot).pss);
  });
}

pstab_status pstab_scenario_set_experiment(pstab_scenario* sc, const char* experiment) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(experiment);
  return guarded([&] { sc->sc.experiment = pstab::parse_experiment(experiment); });
}

pstab_status pstab_scenario_set_option(pstab_scenario* sc, const char* key, const char* value) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(key);
  REQUIRE_ARG(value);
  return guarded([&] {
    auto o = sc->sc.options;
    const std::string k = key, v = value;
    if (k == "t_end") o.t_end = parse_double(key, v);
    else if (k == "dt") o.dt = parse_double(key, v);
    else if (k == "channel") o.channel = v;
    else if (k == "fit_from") o.fit_from = parse_double(key, v);
    else if (k == "slot") {
      check_slot(sc->sc, v);
      o.slot = v;
    } else if (k == "order") {
      std::vector<std::string> order;
      std::stringstream ss(v);
      std::string s;
      while (std::getline(ss, s, ','))
        if (!s.empty()) {
          check_slot(sc->sc, s);
          order.push_back(s);
        }
      if (order.empty()) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "order needs at least one PSS slot");
      o.order = order;
    } else if (k == "method") o.method = pstab::parse_tuning_method(v);
    else if (k == "gain_min") o.gain_min = parse_double(key, v);
    else if (k == "gain_max") o.gain_max = parse_double(key, v);
    else if (k == "gain_points") o.gain_points = parse_int(key, v);
    else if (k == "max_lead_ratio") o.max_lead_ratio = parse_double(key, v);
    else if (k == "use_probe") o.use_probe = parse_bool(key, v);
    else if (k == "sweep_points") o.sweep_points = parse_int(key, v);
    else throw pstab::Error(pstab::ErrorCode::InvalidArgument, "unknown option '" + k + "'");
    if (!(o.dt > 0) || !(o.t_end > o.dt)) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "need 0 < dt < t_end");
    if (!(o.gain_min > 0) || !(o.gain_max > o.gain_min) || o.gain_points < 2)
      throw pstab::Error(pstab::ErrorCode::InvalidArgument, "need 0 < gain_min < gain_max and gain_points >= 2");
    if (o.sweep_points < 2) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "sweep_points must be >= 2");
    if (o.max_lead_ratio < 0) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "max_lead_ratio must be >= 0");
    sc->sc.options = o;
  });
}

pstab_status pstab_scenario_export_plant(const pstab_scenario* sc, const char* slot, const char* path) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(slot);
  REQUIRE_ARG(path);
  return guarded([&] {
    if (sc->sc.state_space) throw pstab::Error(pstab::ErrorCode::InvalidArgument, "scenario is already a state-space model");
    check_slot(sc->sc, slot);
    auto m = sc->sc.model;
    auto& host = m.pss_host(slot);
    host.pss->k = 0.0;
    const auto sys = pstab::solve_system(m);
    const auto ss = pstab::linearize(*sys.dae, sys.op.point, {host.name + ".Vref"}, {host.name + ".dw", host.name + ".P"});
    pstab::save_state_space(path, ss);
  });
}

pstab_status pstab_run(const pstab_scenario* sc, pstab_report** out) {
  REQUIRE_ARG(sc);
  REQUIRE_ARG(out);
  *out = nullptr;
  return guarded([&] { *out = new pstab_report{pstab::run_experiment(sc->sc)}; });
}

void pstab_report_free(pstab_report* r) { delete r; }

pstab_status pstab_report_write(pstab_report* r, const pstab_scenario* sc, const char* out_dir) {
  REQUIRE_ARG(r);
  REQUIRE_ARG(sc);
  REQUIRE_ARG(out_dir);
  return guarded([&] { r->rep = pstab::write_artifacts(r->rep, sc->sc, out_dir); });
}

pstab_status pstab_report_json(const pstab_report* r, char** json_out) {
  REQUIRE_ARG(r);
  REQUIRE_ARG(json_out);
  *json_out = nullptr;
  return guarded([&] { *json_out = dup(pstab::report_json(r->rep)); });
}

pstab_status pstab_report_summary(const pstab_report* r, char** text_out) {
  REQUIRE_ARG(r);
  REQUIRE_ARG(text_out);
  *text_out = nullptr;
  return guarded([&] { *text_out = dup(pstab::report_summary(r->rep)); });
}

int pstab_report_exit_code(const pstab_report* r) { return r ? r->rep.exit_code() : 1; }

pstab_status pstab_report_modal(const pstab_report* r, int* stable, double* min_rotor_damping, double* max_sigma) {
  REQUIRE_ARG(r);
  if (!r->rep.has_modes) return fail(PSTAB_ERR_INVALID_ARGUMENT, "report has no modal results");
  if (stable) *stable = r->rep.modal_stable ? 1 : 0;
  if (min_rotor_damping) *min_rotor_damping = r->rep.min_rotor_damping;
  if (max_sigma) *max_sigma = r->rep.max_sigma;
  return PSTAB_OK;
}

size_t pstab_report_mode_count(const pstab_report* r) { return r ? r->rep.modes.size() : 0; }

pstab_status pstab_report_mode(const pstab_report* r, size_t i, pstab_mode* out) {
  REQUIRE_ARG(r);
  REQUIRE_ARG(out);
  if (i >= r->rep.modes.size()) return fail(PSTAB_ERR_INVALID_ARGUMENT, "mode index out of range");
  const auto& m = r->rep.modes[i];
  *out = {m.lambda.real(), m.lambda.imag(), m.freq_hz, m.damping, m.rotor, m.cls.c_str(), m.dominant.c_str()};
  return PSTAB_OK;
}

pstab_status pstab_report_verdict(const pstab_report* r, pstab_verdict* out) {
  REQUIRE_ARG(r);
  REQUIRE_ARG(out);
  if (!r->rep.verdict) return fail(PSTAB_ERR_INVALID_ARGUMENT, "report has no simulation verdict");
  const auto& v = *r->rep.verdict;
  out->cls = v.cls == pstab::StabilityClass::Decaying ? PSTAB_DECAYING
             : v.cls == pstab::StabilityClass::Sustained ? PSTAB_SUSTAINED
                                                         : PSTAB_GROWING;
  out->sigma = v.sigma;
  out->freq_hz = v.freq_hz;
  out->modal_stable = r->rep.modal_stable ? 1 : 0;
  out->sign_agreement = r->rep.sign_agreement.value_or(false) ? 1 : 0;
  return PSTAB_OK;
}

size_t pstab_report_tuning_count(const pstab_report* r) { return r ? r->rep.tuning.size() : 0; }

pstab_status pstab_report_tuning(const pstab_report* r, size_t i, pstab_tuning* out) {
  REQUIRE_ARG(r);
  REQUIRE_ARG(out);
  if (i >= r->rep.tuning.size()) return fail(PSTAB_ERR_INVALID_ARGUMENT, "tuning index out of range");
  const auto& t = r->rep.tuning[i];
  out->slot = t.slot.c_str();
  out->method = pstab::to_string(t.method);
  out->params = to_c(t.params);
  out->min_damping = t.min_damping;
  out->stabilizable = t.stabilizable ? 1 : 0;
  out->critical_re = t.critical.real();
  out->critical_im = t.critical.imag();
  out->residue_angle_deg = t.residue_angle;
  out->compensation_deg = t.compensation;
  out->blocks = t.blocks;
  out->fit_rms_deg = t.fit_rms;
  return PSTAB_OK;
}

size_t pstab_report_artifact_count(const pstab_report* r) { return r ? r->rep.artifacts.size() : 0; }

const char* pstab_report_artifact(const pstab_report* r, size_t i) {
  if (!r || i >= r->rep.artifacts.size()) return nullptr;
  return r->rep.artifacts[i].c_str();
}

size_t pstab_report_warning_count(const pstab_report* r) { return r ? r->rep.warnings.size() : 0; }

const char* pstab_report_warning(const pstab_report* r, size_t i) {
  if (!r || i >= r->rep.warnings.size()) return nullptr;
  return r->rep.warnings[i].c_str();
}

}  // extern "C"
