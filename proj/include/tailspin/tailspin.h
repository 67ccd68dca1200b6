#ifndef TAILSPIN_TAILSPIN_H
#define TAILSPIN_TAILSPIN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32) && defined(TAILSPIN_BUILDING)
#define TSP_API __declspec(dllexport)
#elif defined(_WIN32)
#define TSP_API __declspec(dllimport)
#elif defined(TAILSPIN_BUILDING)
#define TSP_API __attribute__((visibility("default")))
#else
#define TSP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tsp_status {
  TSP_OK = 0,
  TSP_CONFIG_ERROR = 1,
  TSP_DIMENSION_ERROR = 2,
  TSP_NUMERIC_ERROR = 3,
  TSP_DOMAIN_ERROR = 4,
  TSP_PRECONDITION_ERROR = 5,
  TSP_TAPE_ERROR = 6,
  TSP_IO_ERROR = 7,
  TSP_ORACLE_ERROR = 8,
  TSP_INTERNAL_ERROR = 9,
  TSP_INVALID_ARGUMENT = 10
} tsp_status;

typedef struct tsp_config tsp_config;
typedef struct tsp_dataset tsp_dataset;

/* Machine name of a status, e.g. "config_error". */
TSP_API const char* tsp_status_name(tsp_status status);
/* Message of the last failure on this thread; "" after success. */
TSP_API const char* tsp_last_error(void);
TSP_API const char* tsp_version(void);

/* path may be NULL or "" for defaults. */
TSP_API tsp_status tsp_config_load(const char* path, tsp_config** out);
TSP_API tsp_status tsp_config_set(tsp_config* config, const char* key, const char* value);
/* "key=value" */
TSP_API tsp_status tsp_config_override(tsp_config* config, const char* assignment);
/* Borrowed until the next call on this config. */
TSP_API tsp_status tsp_config_get(const tsp_config* config, const char* key, const char** value);
TSP_API tsp_status tsp_config_resolved(const tsp_config* config, const char** text);
TSP_API uint64_t tsp_config_hash(const tsp_config* config);
TSP_API void tsp_config_free(tsp_config* config);

/* Runs a subcommand; *report (borrowed, thread-local) receives its text output. */
TSP_API tsp_status tsp_run_command(const char* command, const tsp_config* config, const char** report);

TSP_API tsp_status tsp_dataset_read(const char* manifest, tsp_dataset** out);
TSP_API tsp_status tsp_dataset_write(const tsp_dataset* dataset, const char* manifest);
TSP_API size_t tsp_dataset_size(const tsp_dataset* dataset);
TSP_API size_t tsp_dataset_dim(const tsp_dataset* dataset);
TSP_API uint32_t tsp_dataset_num_classes(const tsp_dataset* dataset);
/* Borrowed arrays of size() * dim() and size() entries. */
TSP_API const float* tsp_dataset_features(const tsp_dataset* dataset);
TSP_API const uint32_t* tsp_dataset_labels_observed(const tsp_dataset* dataset);
TSP_API const uint32_t* tsp_dataset_labels_true(const tsp_dataset* dataset);
TSP_API void tsp_dataset_free(tsp_dataset* dataset);

TSP_API tsp_status tsp_lambert_w0(double x, double* out);
/* clamp_as_written: 0 for the lower-bound floor, 1 for the +2/e floor. */
TSP_API tsp_status tsp_superloss_sigma(double loss, double tau, double lambda, int clamp_as_written, double* out);
TSP_API double tsp_scaled_lr(double base_lr, size_t batch_size);
/* cosine: 0 constant, 1 warmup + cosine. */
TSP_API tsp_status tsp_lr_at(int cosine, size_t warmup_epochs, size_t total_epochs, size_t epoch,
                             double effective_lr, double* out);
/* method: simclr | simsiam | byol | barlow_twins. *last_layer_only set to 0 or 1. */
TSP_API tsp_status tsp_select_freeze_policy(const char* method, double nu, int* last_layer_only);

#ifdef __cplusplus
}
#endif

#endif
