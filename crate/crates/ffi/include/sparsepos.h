#ifndef SPARSEPOS_H
#define SPARSEPOS_H

/* Generated by cbindgen from sparsepos-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit codes.
 */
typedef enum SparseposStatus {
  SPARSEPOS_STATUS_OK = 0,
  /**
   * Invalid arguments (null pointers, bad UTF-8, bad configuration).
   */
  SPARSEPOS_STATUS_USAGE = 1,
  /**
   * Unreadable or malformed data files.
   */
  SPARSEPOS_STATUS_DATA = 2,
  /**
   * Numerical failure during training or inference.
   */
  SPARSEPOS_STATUS_NUMERICAL = 3,
} SparseposStatus;

/**
 * Opaque handle to a trained model plus its vocabulary and preprocessing
 * policy.
 */
typedef struct SparseposModel SparseposModel;

/**
 * Clustering scores of a prediction against gold tags.
 */
typedef struct SparseposMetrics {
  double one_many;
  double one_one;
  double vi;
  double v;
} SparseposMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread; empty until an error occurs. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *sparsepos_last_error(void);

/**
 * Library version as a malloc'd string; free with `sparsepos_string_free`.
 */
char *sparsepos_version(void);

/**
 * Free a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void sparsepos_string_free(char *s);

/**
 * Train a model on a corpus file.
 *
 * `config_pairs` holds newline-separated `key = value` settings with the
 * same keys as the experiment config files (`algo`, `emission`, `states`,
 * `iters`, `sigma`, ...); pass null or empty for the defaults.
 *
 * # Safety
 * `corpus_path` must be a valid NUL-terminated string; `config_pairs` may
 * be null; `out` must be a valid pointer to receive the handle.
 */
enum SparseposStatus sparsepos_train_file(const char *corpus_path,
                                          const char *config_pairs,
                                          uint64_t seed,
                                          struct SparseposModel **out);

/**
 * Load a model file written by `sparsepos_model_save` or the CLI.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be valid.
 */
enum SparseposStatus sparsepos_model_load(const char *path, struct SparseposModel **out);

/**
 * Write a model to the versioned text format.
 *
 * # Safety
 * `model` must be a live handle; `path` a valid NUL-terminated string.
 */
enum SparseposStatus sparsepos_model_save(const struct SparseposModel *model, const char *path);

/**
 * Number of hidden states of a model handle; 0 for null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uint32_t sparsepos_model_states(const struct SparseposModel *model);

/**
 * Free a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must come from this library and not have been freed already.
 */
void sparsepos_model_free(struct SparseposModel *model);

/**
 * Tag a corpus file and write the tag file (one cluster id per token line,
 * blank line between sentences). `viterbi` false means posterior decoding.
 *
 * # Safety
 * `model` must be a live handle; the paths valid NUL-terminated strings.
 */
enum SparseposStatus sparsepos_tag_file(const struct SparseposModel *model,
                                        const char *corpus_path,
                                        const char *tags_path,
                                        bool viterbi);

/**
 * Score a tag file against a gold corpus; writes all four metrics.
 *
 * # Safety
 * The paths must be valid NUL-terminated strings; `out` must be valid.
 */
enum SparseposStatus sparsepos_eval_files(const char *pred_path,
                                          const char *gold_path,
                                          struct SparseposMetrics *out);

/**
 * Sample a synthetic gold-tagged corpus from a generated HMM.
 *
 * # Safety
 * `out_path` must be a valid NUL-terminated string.
 */
enum SparseposStatus sparsepos_synth(uint32_t states,
                                     uint32_t vocab,
                                     uint64_t tokens,
                                     double sparsity,
                                     uint64_t seed,
                                     const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSEPOS_H */
