#ifndef AVSD_AVSD_H
#define AVSD_AVSD_H

/* C interface to the dialog, reasoning and evaluation pipeline.
 *
 * Every function returns an avsd_status. On failure the message of the
 * calling thread's last error is available from avsd_last_error(). Handles
 * are opaque and owned by the caller; release them with the matching
 * *_free function. */

#include <stddef.h>

#if defined(AVSD_BUILDING)
#define AVSD_API __attribute__((visibility("default")))
#else
#define AVSD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  AVSD_OK = 0,
  AVSD_ERR_RUNTIME = 1,
  AVSD_ERR_USAGE = 2
} avsd_status;

typedef struct avsd_config avsd_config;
typedef struct avsd_model avsd_model;

AVSD_API const char* avsd_version(void);
AVSD_API const char* avsd_last_error(void);

/* Loads a run configuration and applies "key.path=value" overrides in order. */
AVSD_API avsd_status avsd_config_load(const char* path, const char* const* overrides, size_t override_count,
                             avsd_config** out);
AVSD_API void avsd_config_free(avsd_config* config);
/* Resolved configuration as JSON; the string lives until the next call on
 * this handle. */
AVSD_API avsd_status avsd_config_json(avsd_config* config, const char** out);

AVSD_API avsd_status avsd_synth(const avsd_config* config);

/* role: "teacher", "student_jstl" or "plain". Writes "<work_dir>/<role>.ckpt". */
AVSD_API avsd_status avsd_train(const avsd_config* config, const char* role);

/* dialog: checkpoint name under work_dir or a path. */
AVSD_API avsd_status avsd_train_rpn(const avsd_config* config, const char* dialog);

/* One or two checkpoints; beam <= 0 keeps the configured beam.
 * split: "train", "validation" or "test". */
AVSD_API avsd_status avsd_generate(const avsd_config* config, const char* const* checkpoints, size_t checkpoint_count,
                          int beam, const char* split, const char* output_path);

/* method: "attention" or "rpn". generated_path may be NULL to condition on
 * reference answers. */
AVSD_API avsd_status avsd_reason(const avsd_config* config, const char* method, const char* dialog, const char* rpn,
                        const char* split, const char* generated_path, const char* output_path);

/* Either of generated_path and reasons_path may be NULL, not both.
 * report_path may be NULL. The human-readable table is written to table_out
 * when it is not NULL; it lives until the next avsd_evaluate call on the
 * calling thread. */
AVSD_API avsd_status avsd_evaluate(const char* references_path, const char* feature_dir, const char* generated_path,
                          const char* reasons_path, const char* report_path, const char** table_out);

/* Runs the verification checks (all when check_count is 0) and calls
 * `line` with one report line per check. gradient_scale multiplies analytic
 * gradients (1 for a normal run). *passed receives 1 when all ran checks
 * pass. */
typedef void (*avsd_line_callback)(const char* line, void* user);
AVSD_API avsd_status avsd_verify(const char* work_dir, const int* checks, size_t check_count, double gradient_scale,
                        avsd_line_callback line, void* user, int* passed);

AVSD_API avsd_status avsd_model_load(const char* path, avsd_model** out);
AVSD_API void avsd_model_free(avsd_model* model);
AVSD_API avsd_status avsd_model_info(const avsd_model* model, size_t* vocab_size, size_t* parameter_count, int* is_teacher);

#ifdef __cplusplus
}
#endif

#endif
