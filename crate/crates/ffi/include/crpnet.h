#ifndef CRPNET_H
#define CRPNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CrpStatus {
  CRP_STATUS_OK = 0,
  CRP_STATUS_NULL_POINTER = 1,
  CRP_STATUS_INVALID_UTF8 = 2,
  CRP_STATUS_PARSE = 3,
  CRP_STATUS_ASSUMPTION = 4,
  CRP_STATUS_POLICY = 5,
  CRP_STATUS_DOMAIN = 6,
  CRP_STATUS_DIMENSION = 7,
  CRP_STATUS_PANIC = 8,
} CrpStatus;

// Policy selector for `crp_simulate_summary_json`.
typedef enum CrpPolicy {
  CRP_POLICY_DR = 0,
  CRP_POLICY_PRIORITY = 1,
  CRP_POLICY_LONGEST_QUEUE = 2,
} CrpPolicy;

// Parsed network.
typedef struct CrpNetwork CrpNetwork;

// Static plan built from a network; keeps its own copy of the network.
typedef struct CrpPlan CrpPlan;

// Scalar policy constants of a plan.
typedef struct CrpConstants {
  double rho_star;
  double c0;
  double c1;
  double delta;
  double delta_bound;
  size_t cheapest_buffer;
} CrpConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after success.
// The pointer stays valid until the next `crp_*` call on the same thread.
const char *crp_last_error(void);

// # Safety
// `s` is null or a string returned by this library, freed at most once.
void crp_string_free(char *s);

// Parses a network JSON document.
//
// # Safety
// `json` is a NUL-terminated string; `out` is writable.
enum CrpStatus crp_network_from_json(const char *json, struct CrpNetwork **out);

// # Safety
// `net` is null or a handle from `crp_network_from_json`, freed at most once.
void crp_network_free(struct CrpNetwork *net);

// # Safety
// `net` is a live handle or null (returns 0).
size_t crp_network_num_buffers(const struct CrpNetwork *net);

// # Safety
// `net` is a live handle or null (returns 0).
size_t crp_network_num_activities(const struct CrpNetwork *net);

// # Safety
// `net` is a live handle or null (returns 0).
size_t crp_network_num_servers(const struct CrpNetwork *net);

// Solves the static plan and builds the policy matrix and constants.
// `CRP_STATUS_ASSUMPTION` when heavy traffic, CRP, BAB or uniqueness fail.
//
// # Safety
// `net` is a live handle; `out` is writable.
enum CrpStatus crp_plan_new(const struct CrpNetwork *net, struct CrpPlan **out);

// # Safety
// `plan` is null or a handle from `crp_plan_new`, freed at most once.
void crp_plan_free(struct CrpPlan *plan);

// Copies `x*` (length n) into `out`.
//
// # Safety
// `plan` is live; `out` holds `len` doubles.
enum CrpStatus crp_plan_x_star(const struct CrpPlan *plan, double *out, size_t len);

// Copies `y` (length m) into `out`.
//
// # Safety
// `plan` is live; `out` holds `len` doubles.
enum CrpStatus crp_plan_y(const struct CrpPlan *plan, double *out, size_t len);

// Copies `pi` (length p) into `out`.
//
// # Safety
// `plan` is live; `out` holds `len` doubles.
enum CrpStatus crp_plan_pi(const struct CrpPlan *plan, double *out, size_t len);

// Copies `theta*` (length m) into `out`.
//
// # Safety
// `plan` is live; `out` holds `len` doubles.
enum CrpStatus crp_plan_theta_star(const struct CrpPlan *plan, double *out, size_t len);

// # Safety
// `plan` is live; `out` is writable.
enum CrpStatus crp_plan_constants(const struct CrpPlan *plan, struct CrpConstants *out);

// Full plan report as JSON.
//
// # Safety
// `plan` is live; `out` is writable.
enum CrpStatus crp_plan_report_json(const struct CrpPlan *plan, char **out);

// Brownian workload variance `sigma^2`.
//
// # Safety
// `plan` is live; `out` is writable.
enum CrpStatus crp_sigma2(const struct CrpPlan *plan, double *out);

// Review plan for queue lengths `q` (length m) at planning length `l`, as JSON.
//
// # Safety
// `plan` is live; `q` holds `len` doubles; `out` is writable.
enum CrpStatus crp_policy_step_json(const struct CrpPlan *plan,
                                    double l,
                                    const double *q,
                                    size_t len,
                                    char **out);

// Simulates one trajectory to `r^2 horizon` and reports a JSON summary:
// sample and period counts, Case-2 fraction, final queue lengths and
// workload, time-average holding cost.
//
// # Safety
// `plan` is live; `out` is writable.
enum CrpStatus crp_simulate_summary_json(const struct CrpPlan *plan,
                                         uint32_t policy,
                                         uint32_t r,
                                         double eps2,
                                         double horizon,
                                         uint64_t seed,
                                         uint64_t replication,
                                         char **out);

// `P(W*(t) > w)` for driftless RBM with variance `sigma^2` started at 0.
//
// # Safety
// `out` is writable.
enum CrpStatus crp_rbm_tail(double w, double t, double sigma, double *out);

// One-dimensional regulator on a sampled path `x` of length `len`:
// `psi` and `phi` each receive `len` values.
//
// # Safety
// `x`, `psi`, `phi` each hold `len` doubles.
enum CrpStatus crp_regulator_map(const double *x, size_t len, double *psi, double *phi);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRPNET_H */
