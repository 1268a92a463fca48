#ifndef CAVTUN_H
#define CAVTUN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. `Ok` is zero; everything else is a failure.
enum CavtunStatus {
  CAVTUN_STATUS_OK = 0,
  CAVTUN_STATUS_NULL_POINTER = 1,
  CAVTUN_STATUS_INVALID_PARAMETER = 2,
  CAVTUN_STATUS_DOMAIN_VIOLATION = 3,
  CAVTUN_STATUS_NO_REVIVAL = 4,
  CAVTUN_STATUS_NUMERICAL = 5,
  CAVTUN_STATUS_PANIC = 6,
};

// Initial external state of the atom.
enum CavtunWell {
  CAVTUN_WELL_LEFT = 0,
  CAVTUN_WELL_RIGHT = 1,
  CAVTUN_WELL_PLUS = 2,
  CAVTUN_WELL_MINUS = 3,
};

// Initial internal state of the atom.
enum CavtunInternal {
  CAVTUN_INTERNAL_GROUND = 0,
  CAVTUN_INTERNAL_EXCITED = 1,
};

// Opaque parameter record.
struct CavtunParams;

// Opaque composite atom-field state.
struct CavtunState;

// Reduced observables of a state.
struct CavtunObservables {
  double rho_ll;
  double rho_rr;
  double rho_ee;
  double x_mean;
};

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cavtun_version(void);

// Message for the most recent failure on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *cavtun_last_error(void);

// Creates a parameter record. `out` receives the handle on success.
//
// # Safety
// `out` must be null or valid for writing one pointer.
enum CavtunStatus cavtun_params_new(double g,
                                    double delta,
                                    double tunnel_split,
                                    double kappa,
                                    double chi,
                                    double half_sep,
                                    struct CavtunParams **out);

// Releases a parameter record. Null is ignored.
//
// # Safety
// `params` must be null or a handle from [`cavtun_params_new`] not yet freed.
void cavtun_params_free(struct CavtunParams *params);

// Eigenfrequencies `Ω₊`, `Ω₋` of the `n`-excitation sector.
//
// # Safety
// `params` must be a live handle; the outputs must be valid for writing.
enum CavtunStatus cavtun_eigenfrequencies(const struct CavtunParams *params,
                                          size_t n,
                                          double *omega_plus,
                                          double *omega_minus);

// Sector propagator `exp(−iHt)` as 16 real and 16 imaginary parts in
// row-major order.
//
// # Safety
// `params` must be a live handle; `re` and `im` must each hold 16 doubles.
enum CavtunStatus cavtun_propagator(const struct CavtunParams *params,
                                    size_t n,
                                    double t,
                                    double *re,
                                    double *im);

// Product state of a Fock field with `photons` quanta and the given atom.
//
// # Safety
// `out` must be null or valid for writing one pointer.
enum CavtunStatus cavtun_state_new_fock(size_t photons,
                                        enum CavtunWell well,
                                        enum CavtunInternal internal,
                                        struct CavtunState **out);

// Product state of a coherent field `α` and the given atom, truncated at
// the default tail weight.
//
// # Safety
// `out` must be null or valid for writing one pointer.
enum CavtunStatus cavtun_state_new_coherent(double alpha_re,
                                            double alpha_im,
                                            enum CavtunWell well,
                                            enum CavtunInternal internal,
                                            struct CavtunState **out);

// Evolves `state` by `t` in place.
//
// # Safety
// `state` and `params` must be live handles.
enum CavtunStatus cavtun_state_evolve(struct CavtunState *state,
                                      const struct CavtunParams *params,
                                      double t);

// Reduced populations and `⟨x⟩` of `state`; `params` supplies `b/2`.
//
// # Safety
// `state` and `params` must be live handles; `out` must be valid for writing.
enum CavtunStatus cavtun_state_observables(const struct CavtunState *state,
                                           const struct CavtunParams *params,
                                           struct CavtunObservables *out);

// Releases a state. Null is ignored.
//
// # Safety
// `state` must be null or a handle from a `cavtun_state_new_*` function not yet freed.
void cavtun_state_free(struct CavtunState *state);

// Collapse time for mean photon number `n_mean`: the large-`n_mean`
// estimate and the value from its defining condition.
//
// # Safety
// `params` must be a live handle; the outputs must be valid for writing.
enum CavtunStatus cavtun_collapse_time(const struct CavtunParams *params,
                                       double n_mean,
                                       double *formula,
                                       double *exact);

// Revival time for mean photon number `n_mean`, as for
// [`cavtun_collapse_time`].
//
// # Safety
// `params` must be a live handle; the outputs must be valid for writing.
enum CavtunStatus cavtun_revival_time(const struct CavtunParams *params,
                                      double n_mean,
                                      double *formula,
                                      double *exact);

// Fidelity and leakage of the left-well preparation at splitting
// `tunnel_over_g` (units of `g`).
//
// # Safety
// The outputs must be valid for writing.
enum CavtunStatus cavtun_protocol_fidelity(double tunnel_over_g, double *fidelity, double *leakage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAVTUN_H */
