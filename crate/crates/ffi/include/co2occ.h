#ifndef CO2OCC_H
#define CO2OCC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every function.
typedef enum Co2occStatus {
  CO2OCC_STATUS_OK = 0,
  // A required pointer argument was null.
  CO2OCC_STATUS_NULL_ARGUMENT = 1,
  // Bad value, flag, configuration or non-UTF-8 string.
  CO2OCC_STATUS_INVALID_ARGUMENT = 2,
  CO2OCC_STATUS_IO = 3,
  CO2OCC_STATUS_PARSE = 4,
  // The data cannot support the request (single class, empty series).
  CO2OCC_STATUS_DEGENERATE_DATA = 5,
  // Model and data disagree on features or format version.
  CO2OCC_STATUS_SCHEMA = 6,
  CO2OCC_STATUS_DIMENSION = 7,
  // Internal error; the library state is unchanged.
  CO2OCC_STATUS_PANIC = 99,
} Co2occStatus;

// Gridded room dataset.
typedef struct Co2occDataset Co2occDataset;

// Trained classifier.
typedef struct Co2occModel Co2occModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *co2occ_version(void);

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on this thread.
const char *co2occ_last_error_message(void);

// Loads a model saved by `co2occ train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum Co2occStatus co2occ_model_load(const char *path, struct Co2occModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`co2occ_model_load`] and not be used afterwards.
void co2occ_model_free(struct Co2occModel *model);

// Number of input features, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t co2occ_model_n_features(const struct Co2occModel *model);

// Number of classes, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t co2occ_model_n_classes(const struct Co2occModel *model);

// Predicts the label of one raw (unnormalized) feature row.
//
// # Safety
// `features` must point to `n_features` doubles; `out_label` must be writable.
enum Co2occStatus co2occ_model_predict(const struct Co2occModel *model,
                                       const double *features,
                                       size_t n_features,
                                       int64_t *out_label);

// Predicts `n_rows` row-major raw feature rows into `out_labels`.
//
// # Safety
// `rows` must hold `n_rows * n_features` doubles and `out_labels` room
// for `n_rows` values.
enum Co2occStatus co2occ_model_predict_batch(const struct Co2occModel *model,
                                             const double *rows,
                                             size_t n_rows,
                                             size_t n_features,
                                             int64_t *out_labels);

// Loads `sensors.csv`, `labels.csv` and `room.json` from `dir` and grids
// them at `target_interval_s`.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum Co2occStatus co2occ_dataset_load(const char *dir,
                                      uint32_t native_interval_s,
                                      uint32_t target_interval_s,
                                      struct Co2occDataset **out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `ds` must come from [`co2occ_dataset_load`] and not be used afterwards.
void co2occ_dataset_free(struct Co2occDataset *ds);

// Number of grid points, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t co2occ_dataset_len(const struct Co2occDataset *ds);

// Copies the occupant counts into `out` (capacity `cap`) and stores the
// total count in `out_len`. Fails with `Dimension` when `cap` is too small.
//
// # Safety
// `out` must have room for `cap` values; `out_len` must be writable.
enum Co2occStatus co2occ_dataset_occupants(const struct Co2occDataset *ds,
                                           uint32_t *out,
                                           size_t cap,
                                           size_t *out_len);

// `exp(-gamma * |x - z|^2)` for two vectors of length `dim`.
//
// # Safety
// `x` and `z` must hold `dim` doubles; `out` must be writable.
enum Co2occStatus co2occ_rbf_kernel(const double *x,
                                    const double *z,
                                    size_t dim,
                                    double gamma,
                                    double *out);

// Spearman rank correlation with average ranks for ties.
//
// # Safety
// `a` and `b` must hold `n` doubles; `out` must be writable.
enum Co2occStatus co2occ_srocc(const double *a, const double *b, size_t n, double *out);

// Runs the simulator from JSON config and schedule files and writes the
// sensor, label, room and manifest files into `out_dir`.
//
// # Safety
// All arguments must be NUL-terminated strings.
enum Co2occStatus co2occ_simulate(const char *config_path,
                                  const char *schedule_path,
                                  const char *out_dir);

// Runs the full evaluation protocol on one room directory and writes the
// report JSON to `out_path`. `features` is a comma list such as
// `"avg,fd,vd"`; `task` is `"state"` or `"quantity"`.
//
// # Safety
// String arguments must be NUL-terminated.
enum Co2occStatus co2occ_experiment(const char *data_dir,
                                    const char *features,
                                    const char *task,
                                    uint32_t interval_s,
                                    size_t rounds,
                                    uint64_t seed,
                                    const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CO2OCC_H */
