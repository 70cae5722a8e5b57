#pragma once

#include <Eigen/SparseLU>
#include <functional>
#include <memory>

#include "eulerfem/forms.hpp"

namespace eulerfem {

// Sparse basis of the weakly divergence-free subspace of the velocity space
// (pointwise divergence-free for the supported velocity/pressure pairings):
// grad-perp of the order s+1 stream basis with its nullspace removed (one
// pinned stream dof on the periodic mesh, every boundary stream dof on a
// slip boundary), plus the two constant velocity fields on the periodic mesh
// (the harmonic part the stream functions cannot reach).  Columns vanish on
// constrained boundary dofs by construction.
SparseMat divergence_free_basis(const FunctionSpace& velocity);

// One-shot sparse direct solve; throws SolverError when factorization or the
// triangular solve fails (singular or structurally deficient matrix).
Eigen::VectorXd lu_solve(const SparseMat& a, const Eigen::VectorXd& rhs);

// Reusable sparse LU factorization.  factorize() may be called repeatedly;
// solve() uses the most recent factorization.
class LuSolver {
public:
    void factorize(const SparseMat& a);
    bool ready() const { return ready_; }
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

private:
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    bool ready_ = false;
};

struct NewtonOptions {
    double abs_tol = 1e-11;  // on the l2 norm of the full residual
    int max_iters = 30;
    // Acceptance ceiling for a round-off stall: when an update computed from
    // a freshly assembled Jacobian fails to reduce the residual, the
    // iteration has hit its floating-point floor.  The step is accepted if
    // that floor lies below stall_tol, and rejected (SolverError) otherwise.
    double stall_tol = 1e-9;
};

struct StepReport {
    int newton_iters = 0;
    double residual_norm = 0.0;
};

// Implicit-midpoint stepper for the incompressible flow system.  Newton runs
// on the divergence-free subspace: increments are sought as B y for the
// sparse basis B above, which eliminates the pressure and mean-constraint
// rows and shrinks the linear systems by an order of magnitude while
// producing the same iterates as the full saddle formulation (the
// constraint rows are linear, so saddle Newton updates already live in the
// subspace).  The input velocity must therefore be weakly divergence-free.
// The Jacobian is reassembled at the start of every step (and again within
// a step if the iteration contracts poorly); the step equations are solved
// with Krylov iterations preconditioned by an incomplete factorization that
// persists across steps and is rebuilt only when it degrades, so staleness
// costs Krylov sweeps, never accuracy.  Consecutive steps start from an
// extrapolated initial guess.  Convergence is always judged on a freshly
// assembled residual.  A residual that bottoms out above abs_tol but below
// stall_tol (the floating-point floor of the assembly) is accepted; see
// NewtonOptions.
class TimeStepper {
public:
    TimeStepper(const FunctionSpace& velocity, const FunctionSpace& pressure, FluxMode mode,
                double dt, Forcing forcing = {}, NewtonOptions opts = {});
    ~TimeStepper();

    // One step from (u, t) to t + dt; returns the end-of-step velocity.
    Field advance(const Field& u, double t, StepReport* report = nullptr);

    // Midpoint pressure of the most recent step, recovered on demand from
    // the momentum rows: solves the bordered normal equations
    // [D D^T, e; e^T, 0] [p; mu] = [-D g; 0] where g is the pressure-free
    // momentum residual at the converged state (mean-zero pressure, exactly
    // as the saddle formulation pins it).
    const Field& pressure_field();
    // Full state [u; p; lambda] from the most recent step; the pressure
    // segment is filled by pressure_field().
    const Eigen::VectorXd& last_state() const { return x_; }

    double dt() const { return dt_; }
    FluxMode mode() const { return mode_; }

private:
    void refresh_jacobian(const SparseMat& jacobian);

    const FunctionSpace& velocity_;
    const FunctionSpace& pressure_;
    FluxMode mode_;
    double dt_;
    Forcing forcing_;
    NewtonOptions opts_;
    SparseMat basis_;    // divergence-free basis B
    SparseMat basis_t_;  // B^T, cached
    SparseMat div_;      // divergence matrix, for input validation
    std::unique_ptr<class ReducedLinearSolver> linear_;  // solves (B^T J_uu B) d = r
    Eigen::VectorXd x_;
    Field p_last_;
    Eigen::VectorXd u_prev_in_;  // input of the previous advance()
    bool have_prev_ = false;
    // Pressure recovery caches.
    double t_mid_last_ = 0.0;
    bool p_valid_ = false;
    bool p_solver_ready_ = false;
    SparseMat d_free_;  // divergence matrix with constrained columns dropped
    LuSolver p_lu_;     // bordered [D D^T, e; e^T, 0]
};

// L2-projection of an exact velocity onto the velocity space, constrained to
// the weakly divergence-free subspace (and to zero normal trace on a slip
// boundary).  Minimizes over the divergence-free basis: solves the reduced
// normal equations (B^T M B) y = B^T b and returns B y, the same minimizer
// as the full saddle formulation.
Field constrained_projection(const std::function<Vec2(const Vec2&)>& exact,
                             const FunctionSpace& velocity, const FunctionSpace& pressure);

}  // namespace eulerfem
