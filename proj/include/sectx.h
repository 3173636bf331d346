/* C interface to the transaction-security toolkit. All analysis entry
 * points take an opaque scenario handle and return a status code; reports
 * are heap-allocated JSON strings released with sectx_string_free. */
#ifndef SECTX_H_
#define SECTX_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct sectx_scenario sectx_scenario;

/* Status codes double as suggested process exit codes. */
enum {
  SECTX_OK = 0,         /* analysis ran, nothing to report */
  SECTX_VIOLATIONS = 1, /* analysis ran and found violations */
  SECTX_USAGE = 2,      /* bad arguments, schema errors, unknown names */
  SECTX_INTERNAL = 3    /* unexpected failure; see sectx_last_error */
};

/* Loads and validates a scenario file. Returns NULL on failure, with the
 * cause available through sectx_last_error(). */
sectx_scenario* sectx_scenario_open(const char* path);
void sectx_scenario_close(sectx_scenario* s);

/* Last error message of the calling thread; empty string if none. The
 * buffer is owned by the library and overwritten by the next failure. */
const char* sectx_last_error(void);

/* Static program analysis: information-flow diagnostics and stage plans
 * for every program in the scenario. */
int sectx_check(sectx_scenario* s, char** out_json);

/* One simulated execution. protocol is "2pc", "locks" or "sc" (empty: the
 * scenario default); variant may be empty. Trace and metrics sections are
 * included when the flags are nonzero. */
int sectx_run(sectx_scenario* s, const char* protocol, const char* variant,
              uint64_t seed, int include_trace, int include_metrics,
              char** out_json);

/* Abort-channel probe: per-variant attacker-visible abort rates over
 * matched seeds. */
int sectx_attack_demo(sectx_scenario* s, const char* protocol,
                      const char* attacker, int trials, char** out_json);

/* Relaxed observational determinism over matched seeds, comparing the
 * observer principal's projections across all scenario variants. */
int sectx_rod(sectx_scenario* s, const char* protocol, const char* observer,
              int seeds, char** out_json);

/* Exhaustive exploration. For program scenarios: valence classification,
 * ordering necessary-condition checks and deadlock freedom under the given
 * protocol. For raw-transaction wall scenarios: the impossibility
 * demonstration. bound limits input events per transaction (or protocol
 * events per location for the wall search). */
int sectx_explore(sectx_scenario* s, const char* protocol, int bound,
                  char** out_json);

void sectx_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* SECTX_H_ */
