/* C ABI for the TDSGL recommender engine.
 *
 * Conventions:
 *   - every fallible call returns TdsglStatus (TDSGL_OK == 0);
 *   - results come back through out-pointers (NULL skips a field);
 *   - on failure, tdsgl_last_error() returns a message for the calling
 *     thread, valid until its next failing call;
 *   - handles are opaque and freed with their matching *_free function.
 */

#ifndef TDSGL_H
#define TDSGL_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum TdsglStatus {
  TDSGL_OK = 0,
  TDSGL_NULL_POINTER = 1,
  TDSGL_INVALID_UTF8 = 2,
  TDSGL_IO_ERROR = 3,
  TDSGL_PARSE_ERROR = 4,
  TDSGL_INVALID_ARGUMENT = 5,
  TDSGL_INTERNAL_ERROR = 6,
} TdsglStatus;

typedef struct TdsglDataset TdsglDataset;
typedef struct TdsglConfig TdsglConfig;

/* Engine version as a static NUL-terminated string. */
const char *tdsgl_version(void);

/* Message describing the last error on this thread. */
const char *tdsgl_last_error(void);

/* Parse a raw adjacency-list dataset (one file, or a directory whose
 * train/test files are merged). The result is unsplit. */
TdsglStatus tdsgl_dataset_load(const char *path, TdsglDataset **out);

/* Load a prepared dataset directory written by `tdsgl prepare`. */
TdsglStatus tdsgl_dataset_load_prepared(const char *dir, TdsglDataset **out);

/* Deterministic per-user split of an unsplit dataset, in place. */
TdsglStatus tdsgl_dataset_split(TdsglDataset *ds, double train_ratio,
                                double validation_ratio, double test_ratio,
                                uint64_t seed);

/* Basic dataset statistics; any out-pointer may be NULL. */
TdsglStatus tdsgl_dataset_stats(const TdsglDataset *ds, uint64_t *num_users,
                                uint64_t *num_items, uint64_t *train,
                                uint64_t *validation, uint64_t *test);

void tdsgl_dataset_free(TdsglDataset *ds);

/* New configuration with engine defaults and the full TDSGL variant. */
TdsglStatus tdsgl_config_new(TdsglConfig **out);

/* Set one flat configuration key: model.dim, model.layers, ssl.tau,
 * ssl.lambda, mask.beta, aug.kind, aug.rho, fe.kind, reg.mu, train.lr,
 * train.batch, train.epochs, train.seed, train.patience, train.eval-every,
 * ssl.full-contrast, ssl.include-positive-in-denominator, model.self-loop. */
TdsglStatus tdsgl_config_set(TdsglConfig *cfg, const char *key,
                             const char *value);

/* Select a variant: tdsgl, sgl-ed, sgl-nd, sgl-rw, tdsgl-tf, tdsgl-gif,
 * tdsgl-nl, tdsgl-nl+w, lightgcn. */
TdsglStatus tdsgl_config_set_variant(TdsglConfig *cfg, const char *variant);

void tdsgl_config_free(TdsglConfig *cfg);

/* Train on the dataset's train split, validating on its validation split.
 * When run_dir is non-NULL, loss traces (steps.csv, epochs.csv) and the
 * best checkpoint (checkpoint.bin) are written there. Full-ranking test
 * Recall@20 / NDCG@20 come back through the out-pointers (NULL to skip). */
TdsglStatus tdsgl_train(const TdsglDataset *ds, const TdsglConfig *cfg,
                        const char *run_dir, double *test_recall,
                        double *test_ndcg);

/* Evaluate a saved checkpoint with full ranking at cutoff k.
 * split is "test" or "validation". */
TdsglStatus tdsgl_evaluate_checkpoint(const TdsglDataset *ds,
                                      const TdsglConfig *cfg,
                                      const char *checkpoint_path,
                                      const char *split, uint32_t k,
                                      double *recall, double *ndcg);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TDSGL_H */
