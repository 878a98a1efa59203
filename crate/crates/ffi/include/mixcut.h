#ifndef MIXCUT_H
#define MIXCUT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MIX_KIND_TV 0

#define MIX_KIND_HELLINGER 1

#define MIX_KIND_L2 2

// Passed as a start state to mean "worst case over all point-mass starts".
#define MIX_START_MAX -1

typedef enum MixStatus {
  MIX_STATUS_OK = 0,
  MIX_STATUS_NULL_POINTER = 1,
  MIX_STATUS_INVALID_INPUT = 2,
  MIX_STATUS_VALIDATION_FAILED = 3,
  MIX_STATUS_NUMERIC = 4,
  MIX_STATUS_BUFFER_TOO_SMALL = 5,
  MIX_STATUS_PANIC = 6,
} MixStatus;

// Opaque chain handle.
typedef struct MixChain MixChain;

// Opaque product handle.
typedef struct MixProduct MixProduct;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message (NUL-terminated, truncated to fit) and
// returns the full message length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or valid for writes of `len` bytes.
size_t mix_last_error_message(char *buf, size_t len);

// Builds a chain from an `n × n` row-major kernel; the stationary
// distribution is solved for. Fails with `ValidationFailed` on a bad kernel.
//
// # Safety
// `data` must be valid for `n * n` reads and `out` for one write.
enum MixStatus mix_chain_from_dense(size_t n, const double *data, struct MixChain **out);

// Builds a chain from the JSON chain-file format.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` valid for one write.
enum MixStatus mix_chain_from_json(const char *json, struct MixChain **out);

// # Safety
// `chain` must be null or a handle from this library, not yet freed.
void mix_chain_free(struct MixChain *chain);

// # Safety
// `chain` must be a live handle; `out` valid for one write.
enum MixStatus mix_chain_num_states(const struct MixChain *chain, size_t *out);

// Writes the stationary distribution into `buf` (`len ≥ num_states`).
//
// # Safety
// `chain` must be a live handle; `buf` valid for `len` writes.
enum MixStatus mix_chain_stationary(const struct MixChain *chain, double *buf, size_t len);

// # Safety
// `chain` must be a live handle; `out` valid for one write.
enum MixStatus mix_chain_spectral_gap(const struct MixChain *chain, double *out);

// Distance between two distributions of length `len` (`nu` is the reference for L²).
//
// # Safety
// `mu`, `nu` valid for `len` reads; `out` for one write.
enum MixStatus mix_distance(uint32_t kind,
                            const double *mu,
                            const double *nu,
                            size_t len,
                            double *out);

// Distance to stationarity at continuous time `t` from `start_state`
// (or the worst start for [`MIX_START_MAX`]).
//
// # Safety
// `chain` must be a live handle; `out` valid for one write.
enum MixStatus mix_chain_distance_at(const struct MixChain *chain,
                                     uint32_t kind,
                                     int64_t start_state,
                                     double t,
                                     double *out);

// Mixing time `inf{t : d(t) ≤ epsilon}`; steps when `discrete` is true.
//
// # Safety
// `chain` must be a live handle; `out` valid for one write.
enum MixStatus mix_chain_mixing_time(const struct MixChain *chain,
                                     uint32_t kind,
                                     double epsilon,
                                     int64_t start_state,
                                     bool discrete,
                                     double *out);

// Product of `len` chains (copied) with positive weights.
//
// # Safety
// `chains` and `weights` valid for `len` reads, each chain a live handle; `out` valid for one write.
enum MixStatus mix_product_new(const struct MixChain *const *chains,
                               const double *weights,
                               size_t len,
                               struct MixProduct **out);

// # Safety
// `p` must be null or a handle from this library, not yet freed.
void mix_product_free(struct MixProduct *p);

// Exact worst-start Hellinger distance of the product at time `t`.
//
// # Safety
// `p` must be a live handle; `out` valid for one write.
enum MixStatus mix_product_hellinger(const struct MixProduct *p, double t, double *out);

// Bracket on the worst-start TV distance of the product at time `t`.
//
// # Safety
// `p` must be a live handle; `lower`, `upper` valid for one write each.
enum MixStatus mix_product_tv_bracket(const struct MixProduct *p,
                                      double t,
                                      double *lower,
                                      double *upper);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXCUT_H */
