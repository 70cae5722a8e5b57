#pragma once

#include <array>

#include "eulerfem/forms.hpp"

namespace eulerfem {

// DG interpolant of the coordinate function x_0 or x_1.
Field coordinate_field(const FunctionSpace& dg, int axis);

// Advection operator X_beta acting componentwise on a DG space: wraps the
// assembled matrix A with (X_beta a, b) = b^T A a together with the
// block-diagonal DG mass inverse, so the operator action M^{-1} A is exact
// (cellwise dense inverses, no global solve).
class AdvectionOperator {
public:
    AdvectionOperator(Field beta, const FunctionSpace& dg, FluxMode mode,
                      const Field* indicator = nullptr);

    const SparseMat& matrix() const { return a_; }
    const FunctionSpace& scalar_space() const { return *dg_; }
    const Field& velocity() const { return beta_; }
    FluxMode mode() const { return mode_; }

    // a -> M^{-1} A a on DG coefficient vectors.
    Eigen::VectorXd apply(const Eigen::VectorXd& a) const;

private:
    const FunctionSpace* dg_;
    Field beta_;
    FluxMode mode_;
    SparseMat a_;
    SparseMat mass_inverse_;
};

// hat(X_beta): the operator applied to the coordinate functions, as two DG
// component fields.  On meshes without periodic identification (where the
// coordinates are continuous) this recovers beta's components exactly.
std::array<Field, 2> hat_map(const AdvectionOperator& op);

// hat([X_u, X_v]): composed operator actions on the coordinate functions.
std::array<Field, 2> hat_commutator(const AdvectionOperator& xu, const AdvectionOperator& xv);

// Sum_i (a_i, b_i)_{L2} over DG component fields.
double component_pair(const std::array<Field, 2>& a, const std::array<Field, 2>& b);

struct EpResidual {
    double residual;  // |T_rot(u;u,v) + pairing| (see below)
    double scale;     // max(|T_rot|, |pairing|), for relative comparison
};

// Defect of the variational identity linking the rotational momentum form to
// the componentwise advection pairing, for divergence-free boundary-tangent
// u, v:  pairing = -Sum_i [(A_u u_i, v_i) - (A_v u_i, u_i)], i.e. the
// contraction against -A^T for each assembled transport matrix A.  In upwind
// mode both matrices take their facet sign from u, and the transposition
// inverts the penalty sign relative to the momentum scheme (for centred
// matrices -A^T = A, so the convention is invisible there).
EpResidual ep_identity_residual(const Field& u, const Field& v, const FunctionSpace& dg,
                                FluxMode mode);

// Divergence-free RT_0 field supported on a closed loop of cells that wraps
// the periodic mesh, with unit flux through each consecutive shared facet.
// axis 0 runs in the x direction along cell row `index`; axis 1 runs in the
// y direction along cell column `index`.
Field build_discrete_current(const FunctionSpace& rt0, int axis, int index);

// One-step circulation defect of the implicit-midpoint scheme against a
// discrete current: |(u_next - u_prev, c)/dt - pairing| where pairing
// contracts the midpoint components against -A^T exactly as in
// ep_identity_residual, with every operator evaluated at the midpoint
// velocity.
double kelvin_residual(const Field& u_prev, const Field& u_next, const Field& current,
                       const FunctionSpace& dg, double dt, FluxMode mode);

}  // namespace eulerfem
