#ifndef UISVD_H
#define UISVD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum UisvdAgeEncoding {
  UISVD_AGE_ENCODING_ONE_HOT = 0,
  UISVD_AGE_ENCODING_CUMULATIVE = 1,
} UisvdAgeEncoding;

typedef enum UisvdAttrNorm {
  UISVD_ATTR_NORM_ACTIVE = 0,
  UISVD_ATTR_NORM_GLOBAL = 1,
} UisvdAttrNorm;

typedef enum UisvdFallback {
  UISVD_FALLBACK_NONE = 0,
  UISVD_FALLBACK_COLD_USER = 1,
  UISVD_FALLBACK_COLD_ITEM = 2,
  UISVD_FALLBACK_COLD_BOTH = 3,
  UISVD_FALLBACK_GLOBAL_MEAN = 4,
} UisvdFallback;

typedef enum UisvdFlavor {
  // Detect from the files present.
  UISVD_FLAVOR_AUTO = 0,
  UISVD_FLAVOR_ML100K = 1,
  UISVD_FLAVOR_ML1M = 2,
} UisvdFlavor;

typedef enum UisvdStatus {
  UISVD_STATUS_OK = 0,
  UISVD_STATUS_NULL_POINTER = 1,
  UISVD_STATUS_INVALID_ARGUMENT = 2,
  UISVD_STATUS_IO = 3,
  UISVD_STATUS_DATA = 4,
  UISVD_STATUS_DIVERGED = 5,
  UISVD_STATUS_UNKNOWN_ID = 6,
  UISVD_STATUS_FORMAT = 7,
  UISVD_STATUS_PANIC = 8,
} UisvdStatus;

typedef enum UisvdVariant {
  UISVD_VARIANT_BIAS_SVD = 0,
  UISVD_VARIANT_MF = 1,
  UISVD_VARIANT_SVD_PP = 2,
  UISVD_VARIANT_U_SVD_PP = 3,
  UISVD_VARIANT_I_SVD_PP = 4,
  UISVD_VARIANT_UI_SVD_PP = 5,
} UisvdVariant;

typedef struct UisvdDataset UisvdDataset;

typedef struct UisvdModel UisvdModel;

typedef struct UisvdHyperParams {
  uint32_t k;
  double gamma;
  double lambda;
  double alpha;
  double beta;
  uint32_t epochs;
  uint64_t seed;
  enum UisvdVariant variant;
  enum UisvdAgeEncoding age_encoding;
  enum UisvdAttrNorm attr_norm;
} UisvdHyperParams;

typedef struct UisvdPrediction {
  double value;
  // `value` clipped to [1, 5].
  double clamped_value;
  enum UisvdFallback fallback;
} UisvdPrediction;

// A prediction request where either side may be unseen. Known ids take
// precedence; otherwise `age` (0 = none) and `genres` (indices into the
// model's genre vocabulary) describe the unseen side.
typedef struct UisvdColdQuery {
  bool has_user;
  uint32_t user_id;
  uint32_t age;
  bool has_item;
  uint32_t item_id;
  const uint32_t *genres;
  size_t num_genres;
} UisvdColdQuery;

// Library version as a static NUL-terminated string.
const char *uisvd_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *uisvd_last_error_message(void);

// Default hyperparameters for a dataset layout (`Auto` means ml-100k).
enum UisvdStatus uisvd_hyperparams_default(enum UisvdFlavor flavor, struct UisvdHyperParams *out);

// Load a MovieLens directory. On success `*out` owns a new dataset.
enum UisvdStatus uisvd_dataset_load(const char *path,
                                    enum UisvdFlavor flavor,
                                    struct UisvdDataset **out);

void uisvd_dataset_free(struct UisvdDataset *ds);

// Number of indexed users; 0 for NULL.
size_t uisvd_dataset_num_users(const struct UisvdDataset *ds);

// Number of indexed items; 0 for NULL.
size_t uisvd_dataset_num_items(const struct UisvdDataset *ds);

// Number of ratings in this view; 0 for NULL.
size_t uisvd_dataset_num_ratings(const struct UisvdDataset *ds);

// Seeded random split; both outputs are new datasets owned by the caller.
enum UisvdStatus uisvd_dataset_split(const struct UisvdDataset *ds,
                                     double ratio,
                                     uint64_t seed,
                                     struct UisvdDataset **out_train,
                                     struct UisvdDataset **out_test);

// Fit a model on `train`. On success `*out` owns a new model.
enum UisvdStatus uisvd_model_fit(const struct UisvdHyperParams *hp,
                                 const struct UisvdDataset *train,
                                 struct UisvdModel **out);

void uisvd_model_free(struct UisvdModel *model);

// Hyperparameters the model was trained with.
enum UisvdStatus uisvd_model_hyperparams(const struct UisvdModel *model,
                                         struct UisvdHyperParams *out);

enum UisvdStatus uisvd_model_save(const struct UisvdModel *model, const char *path);

enum UisvdStatus uisvd_model_load(const char *path, struct UisvdModel **out);

// Prediction for a known user and item.
enum UisvdStatus uisvd_model_predict(const struct UisvdModel *model,
                                     uint32_t user_id,
                                     uint32_t item_id,
                                     struct UisvdPrediction *out);

// Prediction where the user, the item, or both may be unseen.
enum UisvdStatus uisvd_model_predict_cold(const struct UisvdModel *model,
                                          const struct UisvdColdQuery *query,
                                          struct UisvdPrediction *out);

// RMSE and MAE of the model on every rating of `test`.
enum UisvdStatus uisvd_model_evaluate(const struct UisvdModel *model,
                                      const struct UisvdDataset *test,
                                      bool clamp,
                                      double *out_rmse,
                                      double *out_mae);

#endif  /* UISVD_H */
