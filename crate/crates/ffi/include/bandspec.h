#ifndef BANDSPEC_H
#define BANDSPEC_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Return codes. The nonzero values below 5 match the exit codes of the
 * `bandspec` command.
 */
typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_FAILURE = 1,
  BS_STATUS_INVALID = 2,
  BS_STATUS_AMBIGUOUS = 3,
  BS_STATUS_NUMERICAL = 4,
  BS_STATUS_NULL_POINTER = 5,
  BS_STATUS_PANIC = 6,
} BsStatus;

typedef struct BsInitial BsInitial;

typedef struct BsMatrix BsMatrix;

typedef struct BsMeasure BsMeasure;

typedef struct BsReconstruction BsReconstruction;

/**
 * Options for [`bs_inverse`]. `k_max = 0` runs to exhaustion.
 */
typedef struct BsInverseOptions {
  size_t k_max;
  double eps_zero;
  double ambiguity_factor;
  double band_tol;
  bool verify_skips;
} BsInverseOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library on the same thread.
 */
const char *bs_last_error_message(void);

void bs_string_free(char *s);

/**
 * A band matrix from its diagonals `d^(0), d^(1), …, d^(n)` stored one
 * after another (`size`, `size − 1`, …, `size − n` entries).
 */
enum BsStatus bs_matrix_from_diagonals(size_t n,
                                       size_t size,
                                       const double *data,
                                       size_t len,
                                       struct BsMatrix **out);

/**
 * A band matrix from the JSON matrix file format.
 */
enum BsStatus bs_matrix_from_json(const char *json, struct BsMatrix **out);

/**
 * JSON matrix file text, to be released with [`bs_string_free`].
 */
enum BsStatus bs_matrix_to_json(const struct BsMatrix *m, char **out);

void bs_matrix_free(struct BsMatrix *m);

/**
 * Band half-width `n`, or 0 for a null handle.
 */
size_t bs_matrix_n(const struct BsMatrix *m);

/**
 * Order `N`, or 0 for a null handle.
 */
size_t bs_matrix_size(const struct BsMatrix *m);

/**
 * `d_k^(i)` for `0 ≤ i ≤ n` and 1-based `k ≤ N − i`.
 */
enum BsStatus bs_matrix_entry(const struct BsMatrix *m, size_t i, size_t k, double *out);

/**
 * Checks class membership. The degeneration profile `m_1 < … < m_j0` is
 * written to `m` (at most `cap` entries, `m` may be null) and `j0` to `len`.
 */
enum BsStatus bs_matrix_validate(const struct BsMatrix *m, size_t *out, size_t cap, size_t *len);

/**
 * Initial conditions 𝒯 from `n·n` row-major entries.
 */
enum BsStatus bs_initial_new(size_t n, const double *rows, struct BsInitial **out);

enum BsStatus bs_initial_identity(size_t n, struct BsInitial **out);

/**
 * Writes 𝒯 row-major into `n·n` doubles.
 */
enum BsStatus bs_initial_get(const struct BsInitial *t, double *out);

void bs_initial_free(struct BsInitial *t);

/**
 * The spectral function of the leading `size × size` block of `m` under `t`.
 */
enum BsStatus bs_forward(const struct BsMatrix *m,
                         const struct BsInitial *t,
                         size_t size,
                         struct BsMeasure **out);

/**
 * A measure with `count` atoms at `nodes`, weights as `count` row-major
 * `n × n` blocks.
 */
enum BsStatus bs_measure_new(size_t n,
                             size_t count,
                             const double *nodes,
                             const double *weights,
                             struct BsMeasure **out);

/**
 * A measure from the JSON measure file format.
 */
enum BsStatus bs_measure_from_json(const char *json, struct BsMeasure **out);

/**
 * JSON measure file text, to be released with [`bs_string_free`].
 */
enum BsStatus bs_measure_to_json(const struct BsMeasure *s, char **out);

void bs_measure_free(struct BsMeasure *s);

size_t bs_measure_n(const struct BsMeasure *s);

size_t bs_measure_atom_count(const struct BsMeasure *s);

/**
 * Node and row-major weight of atom `l` (0-based, ascending nodes).
 */
enum BsStatus bs_measure_atom(const struct BsMeasure *s, size_t l, double *x, double *weight);

/**
 * The moment `S_k = Σ x_l^k W_l`, row-major.
 */
enum BsStatus bs_measure_moment(const struct BsMeasure *s, size_t k, double *out);

struct BsInverseOptions bs_inverse_options_default(void);

/**
 * Reconstructs the matrix and 𝒯 from a measure. `options` may be null for
 * the defaults.
 */
enum BsStatus bs_inverse(const struct BsMeasure *s,
                         const struct BsInverseOptions *options,
                         struct BsReconstruction **out);

/**
 * A new handle holding the reconstructed matrix.
 */
enum BsStatus bs_reconstruction_matrix(const struct BsReconstruction *r, struct BsMatrix **out);

/**
 * A new handle holding the extracted 𝒯.
 */
enum BsStatus bs_reconstruction_initial(const struct BsReconstruction *r, struct BsInitial **out);

/**
 * Degenerations detected from the generators, written like
 * [`bs_matrix_validate`].
 */
enum BsStatus bs_reconstruction_degenerations(const struct BsReconstruction *r,
                                              size_t *out,
                                              size_t cap,
                                              size_t *len);

void bs_reconstruction_free(struct BsReconstruction *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANDSPEC_H */
