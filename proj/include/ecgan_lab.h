/* C interface to the ECGAN desk-scale lab.
 *
 * Every call returns an ecgan_status. On failure, ecgan_last_error() gives a
 * message for the calling thread that stays valid until that thread's next
 * call into the library. Handles are opaque and owned by the caller, who must
 * release them with the matching *_destroy function. A handle must not be
 * used from two threads at once.
 */
#ifndef ECGAN_LAB_H
#define ECGAN_LAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ECGAN_LAB_API __declspec(dllexport)
#else
#define ECGAN_LAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ecgan_status {
  ECGAN_OK = 0,
  ECGAN_E_INVALID_ARGUMENT = 1, /* bad config, unknown preset, malformed input */
  ECGAN_E_IO = 2,               /* unreadable or unwritable artifact, run conflict */
  ECGAN_E_TRAINING_ABORTED = 3, /* non-finite loss; partial artifacts are kept */
  ECGAN_E_INTERNAL = 4
} ecgan_status;

typedef struct ecgan_experiment ecgan_experiment;
typedef struct ecgan_report ecgan_report;
typedef struct ecgan_generator ecgan_generator;

/* Receives one progress line (no trailing newline). */
typedef void (*ecgan_log_fn)(const char* line, void* user);

ECGAN_LAB_API const char* ecgan_version(void);
ECGAN_LAB_API const char* ecgan_last_error(void);
ECGAN_LAB_API const char* ecgan_status_string(ecgan_status status);

ECGAN_LAB_API int ecgan_preset_count(void);
/* NULL when index is out of range. */
ECGAN_LAB_API const char* ecgan_preset_name(int index);

/* ---- energy head ------------------------------------------------------ */

/* out[y] = sum_i weight[i * num_classes + y] * features[i] + bias[y];
 * weight is feature_dim x num_classes, row-major. */
ECGAN_LAB_API ecgan_status ecgan_energy_scores(const double* weight, const double* bias, int feature_dim,
                                               int num_classes, const double* features, double* out);
/* log sum_y exp(logits[y]). */
ECGAN_LAB_API ecgan_status ecgan_aggregate_energy(const double* logits, int num_classes, double* out);
/* softmax(logits). */
ECGAN_LAB_API ecgan_status ecgan_class_posterior(const double* logits, int num_classes, double* out);

/* ---- experiments ------------------------------------------------------ */

ECGAN_LAB_API ecgan_status ecgan_experiment_create(ecgan_experiment** out);
ECGAN_LAB_API void ecgan_experiment_destroy(ecgan_experiment* exp);
/* Merges key = value lines from a file; later calls override earlier ones. */
ECGAN_LAB_API ecgan_status ecgan_experiment_load_file(ecgan_experiment* exp, const char* path);
ECGAN_LAB_API ecgan_status ecgan_experiment_set(ecgan_experiment* exp, const char* key, const char* value);
/* Checks the accumulated settings without running anything. */
ECGAN_LAB_API ecgan_status ecgan_experiment_validate(ecgan_experiment* exp);
/* Directory the run writes to; NULL until the settings validate. Owned by the handle. */
ECGAN_LAB_API const char* ecgan_experiment_run_dir(ecgan_experiment* exp);
/* Trains every seed. *up_to_date (optional) is set to 1 when an identical
 * finished run already existed and nothing was written. */
ECGAN_LAB_API ecgan_status ecgan_experiment_run(ecgan_experiment* exp, int force, ecgan_log_fn log, void* user,
                                                int* up_to_date);

/* Runs or loads each experiment and writes compare.txt and compare.csv to
 * out_dir. The table text is returned in *table (optional). */
ECGAN_LAB_API ecgan_status ecgan_compare(ecgan_experiment* const* exps, size_t count, const char* out_dir,
                                         int no_train, int force, ecgan_log_fn log, void* user,
                                         ecgan_report** table);

/* ---- oracle suites ---------------------------------------------------- */

/* kind: "duality", "entropy-bound", "gradients" or "equivalence". A suite
 * that runs and fails still returns ECGAN_OK; check ecgan_report_passed. */
ECGAN_LAB_API ecgan_status ecgan_verify(const char* kind, uint64_t seed, ecgan_report** out);

ECGAN_LAB_API const char* ecgan_report_text(const ecgan_report* report);
ECGAN_LAB_API int ecgan_report_passed(const ecgan_report* report);
ECGAN_LAB_API void ecgan_report_destroy(ecgan_report* report);

/* ---- trained generators ----------------------------------------------- */

/* which: "best" or "final". Loads the moving-average generator of one seed. */
ECGAN_LAB_API ecgan_status ecgan_generator_open(const char* run_dir, uint64_t seed, const char* which,
                                                ecgan_generator** out);
ECGAN_LAB_API int ecgan_generator_data_dim(const ecgan_generator* gen);
ECGAN_LAB_API int ecgan_generator_num_classes(const ecgan_generator* gen);
/* Writes count x data_dim values, row-major, to out. */
ECGAN_LAB_API ecgan_status ecgan_generator_sample(ecgan_generator* gen, const int* labels, size_t count,
                                                  uint64_t noise_seed, double* out);
ECGAN_LAB_API void ecgan_generator_destroy(ecgan_generator* gen);

#ifdef __cplusplus
}
#endif

#endif /* ECGAN_LAB_H */
