#ifndef EMOLABEL_H
#define EMOLABEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible function.
typedef enum EmoStatus {
  EMO_STATUS_OK = 0,
  // A required pointer argument was NULL.
  EMO_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  EMO_STATUS_INVALID_UTF8 = 2,
  // Shapes, ranges or enum values are inconsistent.
  EMO_STATUS_INVALID_ARGUMENT = 3,
  // The input data violates the data model (classes, ratings, votes).
  EMO_STATUS_INVALID_INPUT = 4,
  // A file could not be read or parsed.
  EMO_STATUS_IO = 5,
  // Training produced a non-finite loss.
  EMO_STATUS_DIVERGED = 6,
  // An internal panic was caught.
  EMO_STATUS_PANIC = 7,
} EmoStatus;

typedef enum EmoRule {
  EMO_RULE_MAJORITY = 0,
  EMO_RULE_PLURALITY = 1,
  EMO_RULE_ALL_INCLUSIVE = 2,
} EmoRule;

typedef enum EmoLabelKind {
  EMO_LABEL_KIND_HARD = 0,
  EMO_LABEL_KIND_FRACTION = 1,
  EMO_LABEL_KIND_ALPHA_SOFT = 2,
  EMO_LABEL_KIND_MULTI_HOT = 3,
} EmoLabelKind;

typedef enum EmoLossKind {
  EMO_LOSS_KIND_CROSS_ENTROPY = 0,
  EMO_LOSS_KIND_BINARY_CROSS_ENTROPY = 1,
  EMO_LOSS_KIND_KL_DIVERGENCE = 2,
} EmoLossKind;

// Opaque annotated corpus.
typedef struct EmoCorpus EmoCorpus;

// Opaque penalization matrix.
typedef struct EmoPenalty EmoPenalty;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string. Do not free.
const char *emo_version(void);

// Message of the last failed call on this thread, or NULL if the last call
// succeeded. The caller owns the string and frees it with
// [`emo_string_free`].
char *emo_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void emo_string_free(char *s);

// Loads an annotation CSV (`utterance_id,rater_id,class[,session,speaker]`)
// with the comma-separated class set `classes`.
//
// # Safety
// `path` and `classes` must be NUL-terminated strings; `out` must be valid
// for writes.
enum EmoStatus emo_corpus_load(const char *path, const char *classes, struct EmoCorpus **out);

// # Safety
// `corpus` must be NULL or a handle from [`emo_corpus_load`] not yet freed.
void emo_corpus_free(struct EmoCorpus *corpus);

// Number of utterances and classes.
//
// # Safety
// `corpus` must be a live handle; out-pointers must be valid for writes.
enum EmoStatus emo_corpus_shape(const struct EmoCorpus *corpus,
                                size_t *out_utterances,
                                size_t *out_classes);

// In-set vote counts, one row per utterance in id order.
//
// # Safety
// `out` must hold `len` writable entries; `len` must equal utterances x classes.
enum EmoStatus emo_corpus_vote_counts(const struct EmoCorpus *corpus, uint32_t *out, size_t len);

// Share of utterances and of ratings a rule discards.
//
// # Safety
// `corpus` must be a live handle; out-pointers must be valid for writes.
enum EmoStatus emo_corpus_loss_report(const struct EmoCorpus *corpus,
                                      enum EmoRule rule,
                                      double *out_data_loss,
                                      double *out_rating_loss);

// Consensus for one vote-count vector. `out_class` receives the class
// index, or -1 when the rule assigns none; `out_kept` whether the
// utterance survives the rule. `key` seeds the all-inclusive tie break
// together with `seed` and is usually the utterance id.
//
// # Safety
// `counts` must hold `num_classes` entries; `key` must be a NUL-terminated
// string; out-pointers must be valid for writes.
enum EmoStatus emo_aggregate(const uint32_t *counts,
                             size_t num_classes,
                             enum EmoRule rule,
                             uint64_t seed,
                             const char *key,
                             int64_t *out_class,
                             bool *out_kept);

// Soft encodings of one vote-count vector: fraction, alpha-soft (with
// `alpha`) or multi-hot. Hard labels come from [`emo_aggregate`].
//
// # Safety
// `counts` and `out` must each hold `num_classes` entries.
enum EmoStatus emo_encode(const uint32_t *counts,
                          size_t num_classes,
                          enum EmoLabelKind kind,
                          double alpha,
                          double *out);

// `(1 - eps) * y + eps / C` for a distribution `values` of kind `kind`.
//
// # Safety
// `values` and `out` must each hold `num_classes` entries.
enum EmoStatus emo_smooth(const double *values,
                          size_t num_classes,
                          enum EmoLabelKind kind,
                          double eps,
                          double *out);

// Penalization matrix of a corpus.
//
// # Safety
// `corpus` must be a live handle; `out` must be valid for writes.
enum EmoStatus emo_penalty_from_corpus(const struct EmoCorpus *corpus, struct EmoPenalty **out);

// Penalization matrix from explicit row-major values.
//
// # Safety
// `values` must hold `num_classes * num_classes` entries; `out` must be
// valid for writes.
enum EmoStatus emo_penalty_from_values(const double *values,
                                       size_t num_classes,
                                       struct EmoPenalty **out);

// # Safety
// `penalty` must be NULL or a live handle.
void emo_penalty_free(struct EmoPenalty *penalty);

// # Safety
// `penalty` must be a live handle; `out` must be valid for writes.
enum EmoStatus emo_penalty_num_classes(const struct EmoPenalty *penalty, size_t *out);

// Row-major matrix values; `len` must equal the squared class count.
//
// # Safety
// `penalty` must be a live handle; `out` must hold `len` entries.
enum EmoStatus emo_penalty_values(const struct EmoPenalty *penalty, double *out, size_t len);

// Per-class loss weights `sum_z P[j][z]`; `len` must equal the class count.
//
// # Safety
// `penalty` must be a live handle; `out` must hold `len` entries.
enum EmoStatus emo_penalty_row_sums(const struct EmoPenalty *penalty, double *out, size_t len);

// Mean-reduced loss of activated predictions `yp` against targets `yt`.
// `penalty` may be NULL, in which case the penalized term is 0.
//
// # Safety
// `yt` and `yp` must hold `n * c` entries; `penalty` must be NULL or a live
// handle; out-pointers must be valid for writes.
enum EmoStatus emo_loss(const double *yt,
                        const double *yp,
                        size_t n,
                        size_t c,
                        enum EmoLossKind kind,
                        double alpha,
                        double beta,
                        const struct EmoPenalty *penalty,
                        double *out_base,
                        double *out_penalty,
                        double *out_total);

// Gradient of the mean-reduced total loss with respect to the raw output
// scores (before softmax or sigmoid).
//
// # Safety
// `yt`, `scores` and `out` must hold `n * c` entries; `penalty` must be NULL
// or a live handle.
enum EmoStatus emo_loss_gradient(const double *yt,
                                 const double *scores,
                                 size_t n,
                                 size_t c,
                                 enum EmoLossKind kind,
                                 double alpha,
                                 double beta,
                                 const struct EmoPenalty *penalty,
                                 double *out);

// `out[i][j] = scores[i][j] > threshold`.
//
// # Safety
// `scores` and `out` must hold `n * c` entries.
enum EmoStatus emo_binarize(const double *scores,
                            size_t n,
                            size_t c,
                            double threshold,
                            uint8_t *out);

// Macro, micro and support-weighted F1 of binary matrices.
//
// # Safety
// `truth` and `pred` must hold `n * c` entries; out-pointers must be valid
// for writes.
enum EmoStatus emo_f1_scores(const uint8_t *truth,
                             const uint8_t *pred,
                             size_t n,
                             size_t c,
                             double *out_macro,
                             double *out_micro,
                             double *out_weighted);

// Hamming loss (scores binarized at 0.5), label ranking loss and coverage
// error.
//
// # Safety
// `truth` and `scores` must hold `n * c` entries; out-pointers must be valid
// for writes.
enum EmoStatus emo_multilabel_metrics(const uint8_t *truth,
                                      const double *scores,
                                      size_t n,
                                      size_t c,
                                      double *out_hamming,
                                      double *out_ranking_loss,
                                      double *out_coverage_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMOLABEL_H */
