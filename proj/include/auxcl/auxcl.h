/* C interface to the auxcl experiment runner. */
#ifndef AUXCL_H
#define AUXCL_H

#include <stddef.h>

#if defined(AUXCL_BUILDING_LIBRARY)
#define AUXCL_API __attribute__((visibility("default")))
#else
#define AUXCL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    AUXCL_OK = 0,
    AUXCL_ERR_ARGUMENT = 1,
    AUXCL_ERR_CONFIG = 2,
    AUXCL_ERR_RUNTIME = 3
} auxcl_status;

typedef enum { AUXCL_REPORT_TEXT = 0, AUXCL_REPORT_CSV = 1 } auxcl_report_format;

typedef struct auxcl_experiment auxcl_experiment;

typedef void (*auxcl_progress_fn)(const char* line, void* user);

AUXCL_API const char* auxcl_version(void);

/* Message for the last failing call on this thread; "" if none. */
AUXCL_API const char* auxcl_last_error(void);

AUXCL_API auxcl_status auxcl_experiment_load(const char* config_path, auxcl_experiment** out);
AUXCL_API void auxcl_experiment_free(auxcl_experiment* exp);

/* Loads data and checks every grid cell without training. */
AUXCL_API auxcl_status auxcl_experiment_validate(auxcl_experiment* exp, size_t* rows_out);

/* workers == 0 uses the value from the config. */
AUXCL_API auxcl_status auxcl_experiment_run(auxcl_experiment* exp, size_t workers,
                                            auxcl_progress_fn progress, void* user);

/* Resolved output directory; owned by exp. */
AUXCL_API const char* auxcl_experiment_output_dir(const auxcl_experiment* exp);
AUXCL_API size_t auxcl_experiment_workers(const auxcl_experiment* exp);

/* Aggregated table for a results directory; free *out with auxcl_string_free. */
AUXCL_API auxcl_status auxcl_report(const char* results_dir, auxcl_report_format format,
                                    char** out);
AUXCL_API void auxcl_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
