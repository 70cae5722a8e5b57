#pragma once

#include <functional>
#include <vector>

#include "eulerfem/spaces.hpp"

namespace eulerfem {

// Integral of |u|^2 over the domain (the energy invariant of the scheme).
double kinetic_energy(const Field& u);

// Integral of (rot u)^2, rot u = d1 u2 - d2 u1.
double enstrophy(const Field& u);

// L2 norm of div u.
double divergence_l2(const Field& u);

// Scalar vorticity interpolated into a DG space; cellwise exact whenever
// rot u is a polynomial of the DG degree on each cell (true for RT_s/BDM_s
// fields into DG P_s).
Field vorticity_dg(const Field& u, const FunctionSpace& dg);

// L2 distance between a discrete field and an analytic velocity, measured
// with a quadrature boosted beyond the mass degree.
double l2_error(const Field& u, const std::function<Vec2(const Vec2&)>& exact);

// L2 pairing of two vector fields on the same mesh, allowing different
// spaces; integrates the product directly with a rule exact for both.
double l2_pair(const Field& a, const Field& b);

// Observed convergence orders log(e_{k-1}/e_k) / log(n_k / n_{k-1}), one per
// refinement step (size = errors.size() - 1).
std::vector<double> convergence_orders(const std::vector<double>& errors,
                                       const std::vector<int>& ns);

}  // namespace eulerfem
