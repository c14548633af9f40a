/* C API for the ncct library.
 *
 * Every function that can fail returns an ncct_status; NCCT_OK is 0.
 * On failure, ncct_last_error() returns a thread-local message for the
 * most recent failing call on the calling thread. Objects come back
 * through out-parameters as opaque handles and must be released with
 * the matching _free function. Strings returned through char** are
 * NUL-terminated, heap-allocated, and released with ncct_string_free.
 */
#ifndef NCCT_H
#define NCCT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ncct_status {
    NCCT_OK = 0,
    NCCT_ERR_INVALID_ARGUMENT = 1,
    NCCT_ERR_IO = 2,
    NCCT_ERR_FORMAT = 3,     /* malformed file contents */
    NCCT_ERR_TRUNCATED = 4,  /* file shorter than its header promises */
    NCCT_ERR_CHECKSUM = 5,   /* stored CRC does not match the bytes */
    NCCT_ERR_DIVERGENCE = 6, /* training went non-finite */
    NCCT_ERR_INTERNAL = 7
} ncct_status;

const char* ncct_last_error(void);
const char* ncct_version(void);
void ncct_string_free(char* s);

/* Content CRC-32 of a file for manifest bookkeeping.  NCDS/NCPT files end
 * with a self-checksum that would make the whole-file CRC a constant
 * residue, so a trailing self-checksum is detected and excluded. */
ncct_status ncct_file_crc32(const char* path, uint32_t* out);

/* ---- datasets ------------------------------------------------------ */

typedef struct ncct_dataset ncct_dataset;

ncct_status ncct_dataset_generate(int num_classes, int per_class, int height, int width,
                                  double variation, uint64_t seed, int test_split,
                                  ncct_dataset** out);
ncct_status ncct_dataset_load(const char* path, ncct_dataset** out);
ncct_status ncct_dataset_save(const ncct_dataset* d, const char* path);
ncct_status ncct_dataset_inject_symmetric(const ncct_dataset* d, double rate,
                                          uint64_t seed, ncct_dataset** out);
/* pairs_path NULL selects the built-in expression confusion pairs */
ncct_status ncct_dataset_inject_asymmetric(const ncct_dataset* d, double rate,
                                           const char* pairs_path, uint64_t seed,
                                           ncct_dataset** out);
ncct_status ncct_dataset_oversample(const ncct_dataset* d, uint64_t seed,
                                    ncct_dataset** out);
void ncct_dataset_free(ncct_dataset* d);

size_t ncct_dataset_size(const ncct_dataset* d);
int ncct_dataset_num_classes(const ncct_dataset* d);
int ncct_dataset_height(const ncct_dataset* d);
int ncct_dataset_width(const ncct_dataset* d);
double ncct_dataset_noise_rate(const ncct_dataset* d);

/* ---- training configuration ---------------------------------------- */

typedef struct ncct_train_config ncct_train_config;

ncct_status ncct_config_create(ncct_train_config** out); /* defaults */
ncct_status ncct_config_set(ncct_train_config* cfg, const char* key, const char* value);
/* apply each `key = value` line of a config or manifest file, in order;
 * `meta.*` bookkeeping keys are skipped */
ncct_status ncct_config_load_file(ncct_train_config* cfg, const char* path);
/* the effective settings, rendered in config-file syntax */
ncct_status ncct_config_render(const ncct_train_config* cfg, char** out);
void ncct_config_free(ncct_train_config* cfg);

/* ---- training ------------------------------------------------------ */

typedef struct ncct_step_info {
    int epoch; /* 1-based */
    int batch; /* 0-based within the epoch */
    int batch_size;
    int num_confident;
    int num_non_confident;
    double loss_s;
    double loss_c;
    double loss;
    int warmup;
} ncct_step_info;

typedef void (*ncct_step_callback)(const ncct_step_info* info, void* user);

typedef struct ncct_train_result ncct_train_result;

/* checkpoint_path may be NULL.  When set and the config asks for periodic
 * checkpoints (checkpoint_every > 0), epoch N writes "<checkpoint_path>.eN". */
ncct_status ncct_train(const ncct_dataset* train_set, const ncct_dataset* test_set,
                       const ncct_train_config* cfg, ncct_step_callback callback,
                       void* user, const char* checkpoint_path, ncct_train_result** out);

int ncct_result_num_epochs(const ncct_train_result* r);
double ncct_result_max_acc(const ncct_train_result* r);
double ncct_result_last5_mean(const ncct_train_result* r);
double ncct_result_final_acc(const ncct_train_result* r);
ncct_status ncct_result_metrics_csv(const ncct_train_result* r, char** out);
ncct_status ncct_result_class_fractions_csv(const ncct_train_result* r, char** out);
ncct_status ncct_result_accuracy_svg(const ncct_train_result* r, char** out);
ncct_status ncct_result_save_checkpoint(const ncct_train_result* r, const char* path);
void ncct_result_free(ncct_train_result* r);

/* ---- trained models ------------------------------------------------ */

typedef struct ncct_model ncct_model;

ncct_status ncct_model_load(const char* path, ncct_model** out);
void ncct_model_free(ncct_model* m);
ncct_status ncct_model_evaluate(const ncct_model* m, const ncct_dataset* d, double* acc);
ncct_status ncct_model_confusion_text(const ncct_model* m, const ncct_dataset* d,
                                      char** out);
ncct_status ncct_model_confusion_csv(const ncct_model* m, const ncct_dataset* d,
                                     char** out);

/* ---- experiments and reports --------------------------------------- */

/* one full run per k; noise_kind/noise_rate only annotate the rows */
ncct_status ncct_sweep_k(const ncct_dataset* train_set, const ncct_dataset* test_set,
                         const ncct_train_config* base, const int* ks, size_t num_ks,
                         const char* noise_kind, double noise_rate, char** csv_out,
                         char** svg_out);

ncct_status ncct_metrics_csv_to_svg(const char* csv_path, char** svg_out);
ncct_status ncct_sweep_csv_to_svg(const char* csv_path, char** svg_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* NCCT_H */
