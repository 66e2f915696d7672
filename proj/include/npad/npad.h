#ifndef NPAD_NPAD_H
#define NPAD_NPAD_H

/* C interface to the N-pad anomaly detection library.
 *
 * Every fallible call returns an npad_status. On failure, npad_last_error()
 * returns a message for the calling thread that stays valid until the next
 * call on that thread. Handles are opaque; free them with the matching
 * *_free function (passing NULL is allowed). Strings returned through char**
 * out-parameters are owned by the caller and released with npad_string_free.
 * Config arguments are JSON objects as text; NULL or "" means defaults. */

#include <stddef.h>
#include <stdint.h>

#if defined(NPAD_BUILDING_LIBRARY)
#define NPAD_API __attribute__((visibility("default")))
#else
#define NPAD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum npad_status {
  NPAD_OK = 0,
  NPAD_ERR_IO = 1,
  NPAD_ERR_FORMAT = 2,
  NPAD_ERR_TRUNCATED = 3,
  NPAD_ERR_UNKNOWN_DTYPE = 4,
  NPAD_ERR_INVALID_ARGUMENT = 5,
  NPAD_ERR_SHAPE_MISMATCH = 6,
  NPAD_ERR_VALIDATION = 7,
  NPAD_ERR_NUMERICAL = 8,
  NPAD_ERR_CONFIG = 9,
  NPAD_ERR_INTERNAL = 10,
  NPAD_ERR_OUT_OF_MEMORY = 11
} npad_status;

typedef enum npad_dtype {
  NPAD_F32 = 0,
  NPAD_F64 = 1,
  NPAD_U8 = 2
} npad_dtype;

typedef struct npad_tensor npad_tensor;
typedef struct npad_model npad_model;

NPAD_API const char* npad_version(void);
NPAD_API const char* npad_last_error(void);
NPAD_API const char* npad_status_string(npad_status status);
NPAD_API void npad_string_free(char* s);

/* Worker cap for all parallel loops. Results do not depend on it. */
NPAD_API npad_status npad_set_threads(int threads);

/* Tensors (NPAD files). `data` holds size * element-size bytes, row-major. */
NPAD_API npad_status npad_tensor_create(npad_dtype dtype, const uint32_t* shape, size_t ndim,
                                        const void* data, npad_tensor** out);
NPAD_API npad_status npad_tensor_read(const char* path, npad_tensor** out);
NPAD_API npad_status npad_tensor_write(const npad_tensor* tensor, const char* path);
NPAD_API npad_dtype npad_tensor_dtype(const npad_tensor* tensor);
NPAD_API size_t npad_tensor_ndim(const npad_tensor* tensor);
NPAD_API uint32_t npad_tensor_dim(const npad_tensor* tensor, size_t axis);
NPAD_API size_t npad_tensor_size(const npad_tensor* tensor);
NPAD_API const void* npad_tensor_data(const npad_tensor* tensor);
NPAD_API void npad_tensor_free(npad_tensor* tensor);

/* Fits a model from the train entries of a manifest and writes a bundle
 * directory. `hash_out`, if not NULL, receives the content hash
 * (64 hex chars + NUL, so at least 65 bytes). */
NPAD_API npad_status npad_fit(const char* config_json, const char* manifest_path,
                              const char* out_dir, char* hash_out);

/* Scores the test entries of a manifest. `overrides_json` may set only
 * inference-time keys (q, r, k_top, feature_shift, smooth_sigma, threads,
 * fpr_cap, pro_thresholds). */
NPAD_API npad_status npad_score(const char* bundle_dir, const char* manifest_path,
                                const char* overrides_json, const char* out_dir);

/* Computes image AUROC, pixel AUROC and PRO for a score directory. The
 * report is written to `out_path` (if not NULL) and returned through
 * `report_json` (if not NULL). `curves_path` may be NULL. */
NPAD_API npad_status npad_evaluate(const char* scores_dir, const char* manifest_path,
                                   const char* config_json, const char* out_path,
                                   const char* curves_path, char** report_json);

/* Runs the module and weighting ablations on data_dir/{train,test}.json.
 * Rows are returned as a JSON array of {table, method, pixel_auroc}. */
NPAD_API npad_status npad_ablate(const char* config_json, const char* data_dir,
                                 const char* out_csv, char** rows_json);

/* Writes a synthetic dataset (tensors, masks, train.json, test.json). */
NPAD_API npad_status npad_synth(const char* synth_json, const char* out_dir);

/* In-memory scoring of single feature maps with a loaded bundle. */
NPAD_API npad_status npad_model_load(const char* bundle_dir, npad_model** out);
NPAD_API npad_status npad_model_info(const npad_model* model, char** info_json);
/* `features` is an H x W x C tensor with the training channel count. The
 * anomaly map (H x W, f64) is returned through `map_out` if not NULL. */
NPAD_API npad_status npad_model_score(const npad_model* model, const npad_tensor* features,
                                      double* image_score, npad_tensor** map_out);
NPAD_API void npad_model_free(npad_model* model);

#ifdef __cplusplus
}
#endif

#endif
