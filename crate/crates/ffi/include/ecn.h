#ifndef ECN_H
#define ECN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EcnStatus {
  ECN_STATUS_OK = 0,
  ECN_STATUS_NULL_POINTER = 1,
  ECN_STATUS_INVALID_ARGUMENT = 2,
  ECN_STATUS_IO = 3,
  ECN_STATUS_PARSE = 4,
  ECN_STATUS_LAYOUT_MISMATCH = 5,
  ECN_STATUS_NUMERIC = 6,
  ECN_STATUS_BUFFER_TOO_SMALL = 7,
  ECN_STATUS_PANIC = 8,
} EcnStatus;

// Gold-filtered documents of one language.
typedef struct EcnCorpus EcnCorpus;

// Loaded checkpoint plus an optional text-embedding table.
typedef struct EcnModel EcnModel;

typedef struct EcnMetrics {
  uintptr_t tp;
  uintptr_t fp;
  uintptr_t fn_;
  double precision;
  double recall;
  double f1;
} EcnMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ecn_version(void);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next fallible call on the same thread.
const char *ecn_last_error(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum EcnStatus ecn_model_load(const char *path, struct EcnModel **out);

// Attach an `ecn-emb v1` sidecar; required for checkpoints trained with text.
//
// # Safety
// `model` must come from [`ecn_model_load`]; `path` must be NUL-terminated.
enum EcnStatus ecn_model_load_embeddings(struct EcnModel *model, const char *path);

// # Safety
// `model` must be null or come from [`ecn_model_load`], and not be used afterwards.
void ecn_model_free(struct EcnModel *model);

// # Safety
// `model` must be null or a live handle.
uintptr_t ecn_model_parameter_count(const struct EcnModel *model);

// Load one XFUND-format JSON file; links are gold-filtered to
// question→answer pairs.
//
// # Safety
// `path` and `language` must be NUL-terminated strings, `out` a valid pointer.
enum EcnStatus ecn_corpus_load_xfund(const char *path,
                                     const char *language,
                                     struct EcnCorpus **out);

// # Safety
// `corpus` must be null or come from [`ecn_corpus_load_xfund`], and not be used afterwards.
void ecn_corpus_free(struct EcnCorpus *corpus);

// Number of documents; 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live handle.
uintptr_t ecn_corpus_len(const struct EcnCorpus *corpus);

// Predicted question→answer pairs of document `index`, written as
// `(head, tail)` entity ids from the source file into `out_pairs`
// (`2 * capacity` slots). `*out_len` receives the pair count; when it
// exceeds `capacity` nothing is written and `BufferTooSmall` is returned.
// A negative `threshold` uses the checkpoint's.
//
// # Safety
// Handles must be live; `out_pairs` must hold `2 * capacity` values.
enum EcnStatus ecn_predict(const struct EcnModel *model,
                           const struct EcnCorpus *corpus,
                           uintptr_t index,
                           double threshold,
                           int64_t *out_pairs,
                           uintptr_t capacity,
                           uintptr_t *out_len);

// Micro-averaged relation metrics over every document of `corpus`.
//
// # Safety
// Handles must be live and `out` valid.
enum EcnStatus ecn_evaluate(const struct EcnModel *model,
                            const struct EcnCorpus *corpus,
                            double threshold,
                            struct EcnMetrics *out);

// The 14 edge features of the directed pair `(a, b)`. Boxes are
// `[x0, y0, x1, y1]` in page-normalized coordinates.
//
// # Safety
// `a` and `b` must point to 4 values, `out` to 14.
enum EcnStatus ecn_edge_features(const double *a, const double *b, double *out);

// Line-of-sight edges of `count` boxes (`4 * count` values). Edges are
// written as `(i, j)` with `i < j` into `out_edges` (`2 * capacity`
// slots), with the same `BufferTooSmall` protocol as [`ecn_predict`].
//
// # Safety
// `boxes` must hold `4 * count` values and `out_edges` `2 * capacity`.
enum EcnStatus ecn_line_of_sight(const double *boxes,
                                 uintptr_t count,
                                 uintptr_t *out_edges,
                                 uintptr_t capacity,
                                 uintptr_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECN_H */
