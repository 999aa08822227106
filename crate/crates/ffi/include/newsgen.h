#ifndef NEWSGEN_H
#define NEWSGEN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  NG_STATUS_OK = 0,
  NG_STATUS_NULL_POINTER = 1,
  NG_STATUS_INVALID_UTF8 = 2,
  NG_STATUS_IO = 3,
  NG_STATUS_PARSE = 4,
  NG_STATUS_MODEL = 5,
  NG_STATUS_VOCAB_MISMATCH = 6,
  NG_STATUS_INVALID_ARGUMENT = 7,
  NG_STATUS_PANIC = 8,
} NgStatus;

/**
 * Loaded checkpoint together with its model.
 */
typedef struct NgModel NgModel;

/**
 * Loaded tokenizer vocabulary.
 */
typedef struct NgVocab NgVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *ng_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ng_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void ng_string_free(char *s);

/**
 * # Safety
 * `ids`/`len` must come from [`ng_encode`].
 */
void ng_ids_free(uint32_t *ids, size_t len);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
NgStatus ng_vocab_load(const char *path, NgVocab **out);

/**
 * # Safety
 * `v` must be null or a handle from [`ng_vocab_load`], freed at most once.
 */
void ng_vocab_free(NgVocab *v);

/**
 * Number of tokens, or 0 for a null handle.
 *
 * # Safety
 * `v` must be null or a live vocabulary handle.
 */
size_t ng_vocab_size(const NgVocab *v);

/**
 * # Safety
 * Pointers must be valid; `text` NUL-terminated.
 */
NgStatus ng_encode(const NgVocab *v, const char *text, uint32_t **out_ids, size_t *out_len);

/**
 * # Safety
 * `ids` must point at `len` ids; `out` must be valid.
 */
NgStatus ng_decode(const NgVocab *v, const uint32_t *ids, size_t len, char **out);

/**
 * Loads a checkpoint, refusing one trained with a different vocabulary.
 *
 * # Safety
 * `path` NUL-terminated, `v` a live handle, `out` valid.
 */
NgStatus ng_model_load(const char *path, const NgVocab *v, NgModel **out);

/**
 * # Safety
 * `m` must be null or a handle from [`ng_model_load`], freed at most once.
 */
void ng_model_free(NgModel *m);

/**
 * Body perplexity over prepared documents given as JSON lines.
 *
 * # Safety
 * Pointers must be valid; `docs_jsonl` NUL-terminated.
 */
NgStatus ng_perplexity(const NgModel *m, const NgVocab *v, const char *docs_jsonl, double *out_ppl);

/**
 * Samples a body continuation of `context` (a serialized prefix ending in
 * `<start-body>`) with nucleus sampling.
 *
 * # Safety
 * Pointers must be valid; `context` NUL-terminated.
 */
NgStatus ng_generate(const NgModel *m,
                     const NgVocab *v,
                     const char *context,
                     double p,
                     double temperature,
                     size_t max_new_tokens,
                     uint64_t seed,
                     bool strip_categories,
                     char **out);

/**
 * Writes the renormalized nucleus of `probs` into `out` (both of length `n`).
 *
 * # Safety
 * `probs` and `out` must point at `n` doubles.
 */
NgStatus ng_top_p_filter(const double *probs, size_t n, double p, double *out);

/**
 * Recall@K for a row-major `n_queries × n_targets` similarity matrix whose
 * correct target for query `i` is target `i`. `out` receives one value per k.
 *
 * # Safety
 * `sim` must hold `n_queries * n_targets` floats, `ks` and `out` `n_ks` entries.
 */
NgStatus ng_recall_at_k(const float *sim,
                        size_t n_queries,
                        size_t n_targets,
                        const size_t *ks,
                        size_t n_ks,
                        double *out);

/**
 * Serializes one JSON article in the given field order (preset name or
 * comma list). Entities and mentions come from the article's supplied
 * annotations; `annotate` adds category tokens to narrative fields.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
NgStatus ng_serialize(const char *article_json, const char *order, bool annotate, char **out);

/**
 * # Safety
 * `text` NUL-terminated, `out` valid.
 */
NgStatus ng_strip_annotations(const char *text, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEWSGEN_H */
