#pragma once

// Weak-form assembly: the discrete Lie derivative on DG scalars, the
// momentum advection trilinear forms (flux form and rotational form, each
// with centred or upwind facet fluxes), and the implicit-midpoint step
// residual/Jacobian for the mixed velocity-pressure system.

#include <functional>

#include <Eigen/Sparse>

#include "eulerfem/spaces.hpp"

namespace eulerfem {

enum class FluxMode { Centred, Upwind };

// Below this threshold on |beta . n| at a quadrature node the upwind weight
// c_f is set to zero (c_f is otherwise sign(beta . n)/2).
inline constexpr double kUpwindEps = 1e-12;

// Parallel assembly is deterministic (fixed-order reduction over cells and
// facets); the serial backend runs the identical kernels on one thread and
// is kept as the reference for equivalence tests and benchmarks.
enum class AssemblyBackend { Serial, Parallel };
void set_assembly_backend(AssemblyBackend backend);
AssemblyBackend assembly_backend();

// Matrix A of the scalar advection form: (X_beta a, b) = b^T A a for DG
// coefficient vectors, assembled in the integrated-by-parts form
//   -sum_K (a, div(beta b))_K + sum_f (beta.n {a}, [b])_f
//                             + sum_f (c_f beta.n [a], [b])_f.
// beta must be discretely divergence-free (||div beta|| < 1e-10). The
// upwind sign c_f is taken from `indicator` when given (else from beta);
// only the sign of indicator.n enters.
SparseMat scalar_advection_matrix(const Field& beta, const FunctionSpace& dg, FluxMode mode,
                                  const Field* indicator = nullptr);

// Flux-form momentum trilinear form
//   T(u; a, v) = -sum_K (a, u.grad v)_K + sum_f (u.n {a}, [v])_f
//              [ + sum_f (c_f cross(n,[a]), [cross(u,v)])_f  in upwind mode ]
// with the 2D scalar cross(x,y) = x1 y2 - x2 y1. All three fields must
// share one RT/BDM space. The upwind sign is generated by u and oriented
// so that the penalty dissipates: the induced operator on the advected
// components is the centred one plus a positive semi-definite part.
double momentum_trilinear_gss(const Field& u, const Field& a, const Field& v, FluxMode mode);

// Rotational-form momentum trilinear form
//   T(u; a, v) = sum_K (a, grad_perp cross(u,v) - u div v)_K
//              + sum_f (cross(n,{a}), [cross(u,v)])_f
//              [ + sum_f (c_f cross(n,[a]), [cross(u,v)])_f ]
// Agrees with the flux form at a = u whenever u and v are pointwise
// divergence-free and tangent to the boundary.
double momentum_trilinear_rotational(const Field& u, const Field& a, const Field& v,
                                     FluxMode mode);

// Analytic forcing f(x, t); a null function means no forcing.
using Forcing = std::function<Vec2(const Vec2&, double)>;

struct AssembledResidual {
    Eigen::VectorXd residual;  // [velocity rows; pressure rows; mean row]
    SparseMat jacobian;        // engaged iff has_jacobian
    bool has_jacobian = false;
};

// Implicit-midpoint residual at state x = [u_guess; p; lambda]:
//   velocity rows:  (u_g - u_n, v)/dt + T(u_m; u_m, v) - (p, div v) - (f(t_mid), v)
//   pressure rows:  (div u_g, q) + lambda (q, 1)
//   mean row:       (p, 1)
// with u_m = (u_n + u_g)/2 and the flux form T. The Jacobian freezes the
// upwind sign at u_m. On non-periodic meshes the boundary normal dofs carry
// identity rows (slip condition u.n = 0). Spaces must be paired RT_s with
// DG P_s or BDM_s with DG P_{s-1}.
AssembledResidual assemble_step_residual(const Field& u_n, const Eigen::VectorXd& x_guess,
                                         const FunctionSpace& velocity,
                                         const FunctionSpace& pressure, double dt,
                                         double t_mid, FluxMode mode, const Forcing& forcing,
                                         bool with_jacobian);

// D with (D u)_iq = (div u, q_iq); used by the step residual and by the
// constrained projection.
SparseMat divergence_matrix(const FunctionSpace& velocity, const FunctionSpace& pressure);

// e with e_iq = (q_iq, 1); the mean-pressure constraint vector.
Eigen::VectorXd mean_vector(const FunctionSpace& pressure);

// Consistency guard shared by solver and harness.
void check_velocity_pressure_pairing(const FunctionSpace& velocity,
                                     const FunctionSpace& pressure);

}  // namespace eulerfem
