#ifndef PSTAB_H
#define PSTAB_H

#include <stddef.h>

#if defined(_WIN32)
#if defined(PSTAB_BUILDING)
#define PSTAB_API __declspec(dllexport)
#else
#define PSTAB_API __declspec(dllimport)
#endif
#else
#define PSTAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pstab_status {
  PSTAB_OK = 0,
  PSTAB_ERR_INVALID_ARGUMENT = 1,
  PSTAB_ERR_PARSE = 2,
  PSTAB_ERR_SCHEMA = 3,
  PSTAB_ERR_CONVERGENCE = 4,
  PSTAB_ERR_SINGULAR = 5,
  PSTAB_ERR_NUMERIC = 6,
  PSTAB_ERR_IO = 7,
  PSTAB_ERR_INTERNAL = 8
} pstab_status;

typedef struct pstab_scenario pstab_scenario;
typedef struct pstab_report pstab_report;

typedef struct pstab_pss_params {
  double k;
  double tw;
  double t1, t2, t3, t4;
  double vmin, vmax;
} pstab_pss_params;

typedef struct pstab_mode {
  double re, im;
  double freq_hz;
  double damping;
  double rotor_participation;
  const char* cls; /* "inter-area", "local", "control", "other"; owned by the report */
  const char* dominant_state;
} pstab_mode;

typedef enum pstab_verdict_class { PSTAB_DECAYING = 0, PSTAB_SUSTAINED = 1, PSTAB_GROWING = 2 } pstab_verdict_class;

typedef struct pstab_verdict {
  pstab_verdict_class cls;
  double sigma;
  double freq_hz;
  int modal_stable;
  int sign_agreement;
} pstab_verdict;

typedef struct pstab_tuning {
  const char* slot;   /* owned by the report */
  const char* method; /* "residues" or "pvref" */
  pstab_pss_params params;
  double min_damping;
  int stabilizable;
  double critical_re, critical_im;
  double residue_angle_deg;
  double compensation_deg;
  int blocks;
  double fit_rms_deg;
} pstab_tuning;

/* Library version string. */
PSTAB_API const char* pstab_version(void);

/* Message of the last failed call on this thread ("" when none). */
PSTAB_API const char* pstab_last_error(void);
PSTAB_API const char* pstab_status_string(pstab_status status);

/* Strings returned through char** are allocated by the library. */
PSTAB_API void pstab_string_free(char* s);

/* Scenarios: a preset name ("two-area-0ibr", "two-area-50ibr") or a file path. */
PSTAB_API pstab_status pstab_scenario_load(const char* path_or_preset, pstab_scenario** out);
PSTAB_API pstab_status pstab_scenario_parse(const char* json_text, pstab_scenario** out);
PSTAB_API void pstab_scenario_free(pstab_scenario* sc);
PSTAB_API pstab_status pstab_scenario_export(const pstab_scenario* sc, char** json_out);

/* "A", "B", "set-A", ... or "off", applied to every PSS slot. */
PSTAB_API pstab_status pstab_scenario_set_pss(pstab_scenario* sc, const char* set);
PSTAB_API pstab_status pstab_scenario_set_pss_params(pstab_scenario* sc, const char* slot, const pstab_pss_params* p);
PSTAB_API pstab_status pstab_scenario_get_pss_params(const pstab_scenario* sc, const char* slot, pstab_pss_params* out);
PSTAB_API pstab_status pstab_scenario_set_experiment(pstab_scenario* sc, const char* experiment);

/* Option by name: t_end, dt, channel, fit_from, slot, order (comma list),
   method, gain_min, gain_max, gain_points, max_lead_ratio, use_probe,
   sweep_points. Values are parsed from text. */
PSTAB_API pstab_status pstab_scenario_set_option(pstab_scenario* sc, const char* key, const char* value);

/* Writes the V_ref -> (speed, P) model of the slot's host generator, slot
   disabled, in the labeled CSV state-space format. */
PSTAB_API pstab_status pstab_scenario_export_plant(const pstab_scenario* sc, const char* slot, const char* path);

PSTAB_API pstab_status pstab_run(const pstab_scenario* sc, pstab_report** out);
PSTAB_API void pstab_report_free(pstab_report* r);

/* Writes artifacts (CSV, SVG, report.json, manifest.json) under out_dir. */
PSTAB_API pstab_status pstab_report_write(pstab_report* r, const pstab_scenario* sc, const char* out_dir);
PSTAB_API pstab_status pstab_report_json(const pstab_report* r, char** json_out);
PSTAB_API pstab_status pstab_report_summary(const pstab_report* r, char** text_out);

/* 0 stable, 2 unstable (simulate experiments); 0 otherwise. */
PSTAB_API int pstab_report_exit_code(const pstab_report* r);

PSTAB_API pstab_status pstab_report_modal(const pstab_report* r, int* stable, double* min_rotor_damping,
                                          double* max_sigma);
PSTAB_API size_t pstab_report_mode_count(const pstab_report* r);
PSTAB_API pstab_status pstab_report_mode(const pstab_report* r, size_t i, pstab_mode* out);
PSTAB_API pstab_status pstab_report_verdict(const pstab_report* r, pstab_verdict* out);
PSTAB_API size_t pstab_report_tuning_count(const pstab_report* r);
PSTAB_API pstab_status pstab_report_tuning(const pstab_report* r, size_t i, pstab_tuning* out);
PSTAB_API size_t pstab_report_artifact_count(const pstab_report* r);
PSTAB_API const char* pstab_report_artifact(const pstab_report* r, size_t i);
PSTAB_API size_t pstab_report_warning_count(const pstab_report* r);
PSTAB_API const char* pstab_report_warning(const pstab_report* r, size_t i);

#ifdef __cplusplus
}
#endif

#endif
