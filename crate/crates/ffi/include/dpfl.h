#ifndef DPFL_H
#define DPFL_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DpflStatus {
  DPFL_STATUS_OK = 0,
  DPFL_STATUS_NULL_POINTER = 1,
  DPFL_STATUS_INVALID_ARGUMENT = 2,
  DPFL_STATUS_CONFIG = 3,
  DPFL_STATUS_IO = 4,
  DPFL_STATUS_FORMAT = 5,
  DPFL_STATUS_INFEASIBLE = 6,
  DPFL_STATUS_OUT_OF_RANGE = 7,
  DPFL_STATUS_PANIC = 8,
} DpflStatus;

typedef enum DpflCase {
  DPFL_CASE_UNCONSTRAINED = 0,
  DPFL_CASE_WIDE_SIGMA = 1,
  DPFL_CASE_TIGHT_SIGMA = 2,
} DpflCase;

typedef enum DpflRule {
  /**
   * `sigma_lo == sigma_hi`, constant over the segment.
   */
  DPFL_RULE_FIXED = 0,
  /**
   * `sigma = sqrt(qK/(kT))`; bounds are left as NaN.
   */
  DPFL_RULE_CURVE = 1,
  /**
   * Any sigma in `[sigma_lo, sigma_hi]`.
   */
  DPFL_RULE_INTERVAL = 2,
} DpflRule;

typedef struct DpflParetoSet DpflParetoSet;

typedef struct DpflSimulation DpflSimulation;

typedef struct DpflSolution DpflSolution;

/**
 * One objective point together with its `(T, sigma, q)` origin.
 */
typedef struct DpflObjective {
  double utility;
  double privacy;
  uint32_t rounds;
  double sigma;
  double q;
} DpflObjective;

typedef struct DpflSegment {
  uint32_t t_start;
  uint32_t t_end;
  enum DpflRule rule;
  double sigma_lo;
  double sigma_hi;
} DpflSegment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dpfl_version(void);

/**
 * Message of the last failed call on this thread, or NULL if the last call
 * succeeded. Valid until the next call into the library on the same thread.
 */
const char *dpfl_last_error(void);

/**
 * Closed-form privacy leakage `C·c·sqrt(qT·ln(1/δ))/(sqrt(K)·σ)`.
 */
enum DpflStatus dpfl_privacy_leakage(uint32_t rounds,
                                     double sigma,
                                     double q,
                                     double accountant_c,
                                     double c_clip,
                                     double delta,
                                     size_t clients,
                                     double *out);

/**
 * Utility objective `1/T + k·σ²/(qK)`.
 */
enum DpflStatus dpfl_utility_f1(uint32_t rounds,
                                double sigma,
                                double q,
                                double k,
                                size_t clients,
                                double *out);

/**
 * Privacy objective `sqrt(qT)/σ`.
 */
enum DpflStatus dpfl_privacy_f2(uint32_t rounds, double sigma, double q, double *out);

/**
 * `k·σ²·T − q·K`.
 */
enum DpflStatus dpfl_manifold_residual(uint32_t rounds,
                                       double sigma,
                                       double q,
                                       double k,
                                       size_t clients,
                                       double *out);

/**
 * Designed noise `sqrt(q·K/(k·T))` for a deployment.
 */
enum DpflStatus dpfl_design_sigma(double q, size_t clients, double k, uint32_t rounds, double *out);

/**
 * Regime of the analytical solution. `sigma_max <= 0` or NaN means no
 * ceiling.
 */
enum DpflStatus dpfl_classify_case(double q,
                                   size_t clients,
                                   double k,
                                   double sigma_max,
                                   uint32_t t_max,
                                   enum DpflCase *out);

/**
 * Fits `k` of `k·σ²·T = q0·K0` from `n` Pareto points given as parallel
 * `rounds`/`sigma` arrays. `r2_out` may be NULL.
 */
enum DpflStatus dpfl_fit_k(const uint32_t *rounds,
                           const double *sigma,
                           size_t n,
                           double q0,
                           size_t k0,
                           double *k_out,
                           double *r2_out);

/**
 * Non-dominated subset of `n` points. On success `*out` owns a new set.
 */
enum DpflStatus dpfl_pareto_sort(const struct DpflObjective *points,
                                 size_t n,
                                 struct DpflParetoSet **out);

/**
 * Member count; 0 for NULL.
 */
size_t dpfl_pareto_len(const struct DpflParetoSet *set);

/**
 * Members are ordered by ascending utility.
 */
enum DpflStatus dpfl_pareto_get(const struct DpflParetoSet *set,
                                size_t index,
                                struct DpflObjective *out);

void dpfl_pareto_free(struct DpflParetoSet *set);

/**
 * Analytical solution set for fixed `q`. `sigma_max <= 0` means no ceiling.
 */
enum DpflStatus dpfl_solution_new(double q,
                                  size_t clients,
                                  double k,
                                  double sigma_max,
                                  uint32_t t_max,
                                  struct DpflSolution **out);

enum DpflStatus dpfl_solution_case(const struct DpflSolution *sol, enum DpflCase *out);

/**
 * Segment count; 0 for NULL.
 */
size_t dpfl_solution_segment_count(const struct DpflSolution *sol);

enum DpflStatus dpfl_solution_segment(const struct DpflSolution *sol,
                                      size_t index,
                                      struct DpflSegment *out);

/**
 * Admissible σ range at round `T`.
 */
enum DpflStatus dpfl_solution_sigma_bounds(const struct DpflSolution *sol,
                                           uint32_t rounds,
                                           double *lo,
                                           double *hi);

void dpfl_solution_free(struct DpflSolution *sol);

/**
 * Builds a simulation from an experiment config (JSON, NUL-terminated).
 * The dataset named in the config is loaded and partitioned here.
 */
enum DpflStatus dpfl_simulation_new(const char *config_json, struct DpflSimulation **out);

/**
 * Runs DP-FedSGD once per seed and keeps the averaged trace. With `n == 0`
 * the seeds from the config are used.
 */
enum DpflStatus dpfl_simulation_run(struct DpflSimulation *sim, const uint64_t *seeds, size_t n);

/**
 * Number of rounds in the last averaged trace; 0 before the first run.
 */
size_t dpfl_simulation_rounds(const struct DpflSimulation *sim);

/**
 * Copies the averaged per-round test loss into `buf`, which must hold at
 * least [`dpfl_simulation_rounds`] values.
 */
enum DpflStatus dpfl_simulation_trace(const struct DpflSimulation *sim, double *buf, size_t len);

void dpfl_simulation_free(struct DpflSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPFL_H */
