/* C interface to the wunet library. Every object is an opaque handle owned by
 * the caller and released with its _free function. Functions return a
 * wunet_status; on failure wunet_last_error() describes the problem for the
 * calling thread until its next failing call. */
#ifndef WUNET_WUNET_H
#define WUNET_WUNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WUNET_API __declspec(dllexport)
#else
#define WUNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wunet_status {
  WUNET_OK = 0,
  WUNET_ERR_INVALID_ARGUMENT = 1,
  WUNET_ERR_SHAPE = 2,
  WUNET_ERR_IO = 3,
  WUNET_ERR_PARSE = 4,
  WUNET_ERR_VALIDATION = 5,
  WUNET_ERR_CHECKPOINT = 6,
  WUNET_ERR_NUMERIC = 7,
  WUNET_ERR_INTERNAL = 8
} wunet_status;

WUNET_API const char* wunet_last_error(void);
WUNET_API const char* wunet_status_name(wunet_status status);
WUNET_API const char* wunet_version(void);

/* Training configuration. */
typedef struct wunet_config wunet_config;

WUNET_API wunet_status wunet_config_default(wunet_config** out);
WUNET_API wunet_status wunet_config_load(const char* path, wunet_config** out);
WUNET_API wunet_status wunet_config_parse(const char* text, wunet_config** out);
WUNET_API void wunet_config_free(wunet_config* config);

typedef struct wunet_config_values {
  size_t epochs;
  size_t batch_size;
  double lr;
  uint64_t seed;
  double val_fraction;
  double threshold;
} wunet_config_values;

WUNET_API wunet_status wunet_config_get(const wunet_config* config, wunet_config_values* out);
WUNET_API wunet_status wunet_config_set_checkpoint_path(wunet_config* config, const char* path);
/* Copies the checkpoint path into buf (NUL-terminated); *needed receives the
 * length including the terminator. */
WUNET_API wunet_status wunet_config_get_checkpoint_path(const wunet_config* config, char* buf,
                                                        size_t capacity, size_t* needed);

/* Datasets. */
typedef struct wunet_dataset wunet_dataset;

typedef enum wunet_split { WUNET_SPLIT_TRAIN = 0, WUNET_SPLIT_VAL = 1 } wunet_split;

WUNET_API wunet_status wunet_dataset_load(const char* manifest_path, wunet_dataset** out);
WUNET_API wunet_status wunet_dataset_synth(size_t n_per_class, uint64_t seed, wunet_dataset** out);
WUNET_API wunet_status wunet_dataset_save(const wunet_dataset* dataset, const char* dir);
WUNET_API wunet_status wunet_dataset_split(wunet_dataset* dataset, double val_fraction,
                                           uint64_t seed);
WUNET_API wunet_status wunet_dataset_sizes(const wunet_dataset* dataset, size_t* total,
                                           size_t* train, size_t* val);
WUNET_API void wunet_dataset_free(wunet_dataset* dataset);

/* Training. */
typedef struct wunet_epoch_log {
  size_t epoch;
  double cls_loss;
  double seg_loss;
  double total_loss;
  double seconds;
} wunet_epoch_log;

typedef void (*wunet_epoch_callback)(const wunet_epoch_log* log, void* user);

typedef struct wunet_train_summary {
  size_t epochs_run;
  size_t best_epoch;
  double best_loss;
} wunet_train_summary;

/* Trains on the dataset's train split and writes the best checkpoint to the
 * config's checkpoint_path. When csv_path is non-NULL the epoch log is
 * written there. callback and summary may be NULL. */
WUNET_API wunet_status wunet_train(const wunet_config* config, const wunet_dataset* dataset,
                                   const char* csv_path, wunet_epoch_callback callback,
                                   void* user, wunet_train_summary* summary);

/* Trained models. */
typedef struct wunet_model wunet_model;

WUNET_API wunet_status wunet_model_load(const char* checkpoint_path, wunet_model** out);
/* Copy of the configuration stored in the checkpoint. */
WUNET_API wunet_status wunet_model_config(const wunet_model* model, wunet_config** out);
WUNET_API void wunet_model_free(wunet_model* model);

typedef struct wunet_metrics {
  double accuracy;
  double f1_classification;
  double dice_mean;
  double precision_seg;
  double recall_seg;
  double f1_seg;
} wunet_metrics;

WUNET_API wunet_status wunet_evaluate(const wunet_model* model, const wunet_dataset* dataset,
                                      wunet_split split, double threshold, wunet_metrics* out);
/* JSON object with the six metric fields; same buffer contract as
 * wunet_config_get_checkpoint_path. */
WUNET_API wunet_status wunet_metrics_to_json(const wunet_metrics* metrics, char* buf,
                                             size_t capacity, size_t* needed);

#define WUNET_NUM_CLASSES 4

typedef struct wunet_prediction {
  int label;
  const char* label_name; /* static string */
  double probabilities[WUNET_NUM_CLASSES];
} wunet_prediction;

/* Classifies one PNG and writes its thresholded mask as a 0/255 grayscale
 * PNG to mask_path. */
WUNET_API wunet_status wunet_predict(const wunet_model* model, const char* image_path,
                                     double threshold, const char* mask_path,
                                     wunet_prediction* out);

WUNET_API const char* wunet_class_name(int label);

/* Finite-difference gradient verification. */
typedef struct wunet_gradcheck_report wunet_gradcheck_report;

enum {
  /* Skip the whole-network checks (layer primitives and losses only). */
  WUNET_GRADCHECK_LAYERS_ONLY = 1,
  /* Corrupt the conv2d weight gradient for the duration of the run, to show
   * the checker fails. Not thread-safe with concurrent training. */
  WUNET_GRADCHECK_PERTURB_CONV = 2
};

typedef struct wunet_gradcheck_entry {
  const char* name; /* owned by the report */
  double max_rel_error;
  double tolerance;
  size_t coordinates;
  size_t skipped;
  int passed;
} wunet_gradcheck_entry;

WUNET_API wunet_status wunet_gradcheck_run(uint64_t seed, int flags,
                                           wunet_gradcheck_report** out);
WUNET_API size_t wunet_gradcheck_count(const wunet_gradcheck_report* report);
WUNET_API wunet_status wunet_gradcheck_entry_at(const wunet_gradcheck_report* report,
                                                size_t index, wunet_gradcheck_entry* out);
WUNET_API int wunet_gradcheck_passed(const wunet_gradcheck_report* report);
WUNET_API void wunet_gradcheck_free(wunet_gradcheck_report* report);

#ifdef __cplusplus
}
#endif

#endif /* WUNET_WUNET_H */
