#include "eulerfem/algebra.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace eulerfem {

namespace {

// Block-diagonal inverse of the DG mass matrix, built from cellwise dense
// inverses.
SparseMat dg_mass_inverse(const FunctionSpace& dg) {
    if (dg.family != Family::DG) throw InvalidArgument("dg_mass_inverse: needs a DG space");
    const Mesh& mesh = *dg.mesh;
    const int nloc = dg.dofs_per_cell;
    auto rule = triangle_rule(std::min(kMaxQuadDegree, 2 * dg.order));
    auto tab = dg.scalar_element->tabulate(rule.points);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_cells()) * nloc * nloc);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        double det = mesh.det_jacobian(c);
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nloc, nloc);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            double w = rule.weights[q] * det;
            for (int i = 0; i < nloc; ++i)
                for (int j = 0; j < nloc; ++j) m(i, j) += w * tab.value(q, i) * tab.value(q, j);
        }
        Eigen::MatrixXd minv = m.inverse();
        for (int i = 0; i < nloc; ++i)
            for (int j = 0; j < nloc; ++j)
                trips.emplace_back(dg.dof(c, i), dg.dof(c, j), minv(i, j));
    }
    SparseMat out(dg.dim, dg.dim);
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

}  // namespace

Field coordinate_field(const FunctionSpace& dg, int axis) {
    if (dg.family != Family::DG) throw InvalidArgument("coordinate_field: needs a DG space");
    if (axis != 0 && axis != 1) throw InvalidArgument("coordinate_field: axis must be 0 or 1");
    if (dg.order < 1) throw InvalidArgument("coordinate_field: needs order >= 1");
    return interpolate(dg, [axis](const Vec2& p) { return axis == 0 ? p.x : p.y; });
}

AdvectionOperator::AdvectionOperator(Field beta, const FunctionSpace& dg, FluxMode mode,
                                     const Field* indicator)
    : dg_(&dg),
      beta_(std::move(beta)),
      mode_(mode),
      a_(scalar_advection_matrix(beta_, dg, mode, indicator)),
      mass_inverse_(dg_mass_inverse(dg)) {}

Eigen::VectorXd AdvectionOperator::apply(const Eigen::VectorXd& a) const {
    if (a.size() != dg_->dim) throw InvalidArgument("AdvectionOperator: size mismatch");
    return mass_inverse_ * (a_ * a);
}

std::array<Field, 2> hat_map(const AdvectionOperator& op) {
    const FunctionSpace& dg = op.scalar_space();
    std::array<Field, 2> out{zero_field(dg), zero_field(dg)};
    for (int axis = 0; axis < 2; ++axis)
        out[axis].coeffs = op.apply(coordinate_field(dg, axis).coeffs);
    return out;
}

std::array<Field, 2> hat_commutator(const AdvectionOperator& xu, const AdvectionOperator& xv) {
    if (&xu.scalar_space() != &xv.scalar_space())
        throw InvalidArgument("hat_commutator: operators on different spaces");
    const FunctionSpace& dg = xu.scalar_space();
    std::array<Field, 2> out{zero_field(dg), zero_field(dg)};
    for (int axis = 0; axis < 2; ++axis) {
        Eigen::VectorXd x = coordinate_field(dg, axis).coeffs;
        out[axis].coeffs = xu.apply(xv.apply(x)) - xv.apply(xu.apply(x));
    }
    return out;
}

double component_pair(const std::array<Field, 2>& a, const std::array<Field, 2>& b) {
    const FunctionSpace* dg = a[0].space;
    if (dg == nullptr || b[0].space != dg || a[1].space != dg || b[1].space != dg)
        throw InvalidArgument("component_pair: fields must share one DG space");
    SparseMat m = mass_matrix(*dg);
    return a[0].coeffs.dot(m * b[0].coeffs) + a[1].coeffs.dot(m * b[1].coeffs);
}

EpResidual ep_identity_residual(const Field& u, const Field& v, const FunctionSpace& dg,
                                FluxMode mode) {
    if (u.space == nullptr || u.space != v.space)
        throw InvalidArgument("ep_identity_residual: u and v must share a space");
    SparseMat au = scalar_advection_matrix(u, dg, mode);
    SparseMat av = scalar_advection_matrix(v, dg, mode, &u);
    auto ui = interpolate_components(u, dg);
    auto vi = interpolate_components(v, dg);
    // The identity contracts the momentum form against -A^T for each
    // assembled componentwise transport matrix A: these are the generators
    // of the discrete flow, whose facet penalty enters with inverted sign
    // relative to the momentum scheme. For the centred matrices
    // (antisymmetric on divergence-free fields) -A^T equals A, so the two
    // conventions coincide; in upwind mode only this orientation closes the
    // identity exactly.
    double pairing = 0.0;
    for (int i = 0; i < 2; ++i)
        pairing -= (au * ui[i].coeffs).dot(vi[i].coeffs) - (av * ui[i].coeffs).dot(ui[i].coeffs);
    double t = momentum_trilinear_rotational(u, u, v, mode);
    return {std::abs(t + pairing), std::max(std::abs(t), std::abs(pairing))};
}

Field build_discrete_current(const FunctionSpace& rt0, int axis, int index) {
    if (rt0.family != Family::RT || rt0.order != 0)
        throw InvalidArgument("build_discrete_current: space must be RT_0");
    const Mesh& mesh = *rt0.mesh;
    if (!mesh.periodic || mesh.grid_n <= 0)
        throw InvalidArgument("build_discrete_current: needs a periodic structured mesh");
    const int n = mesh.grid_n;
    if (axis != 0 && axis != 1) throw InvalidArgument("build_discrete_current: axis 0 or 1");
    if (index < 0 || index >= n) throw InvalidArgument("build_discrete_current: index out of range");

    // Square (i, j) holds the lower triangle 2*(j*n+i) with local edges
    // {right, diagonal, bottom} and the upper triangle 2*(j*n+i)+1 with local
    // edges {top, left, diagonal}.
    auto lower = [&](int i, int j) { return 2 * (j * n + i); };
    auto upper = [&](int i, int j) { return 2 * (j * n + i) + 1; };

    Field c = zero_field(rt0);
    auto add_crossing = [&](int from_cell, int to_cell, int facet) {
        const Facet& fc = mesh.facets[facet];
        if ((fc.plus_cell != from_cell || fc.minus_cell != to_cell) &&
            (fc.plus_cell != to_cell || fc.minus_cell != from_cell))
            throw InvalidArgument("build_discrete_current: broken cell chain");
        // RT_0 facet coefficients measure flux along the facet normal, which
        // points out of the plus cell.
        c.coeffs(facet) = fc.plus_cell == from_cell ? 1.0 : -1.0;
    };

    if (axis == 0) {
        const int j = index;
        for (int i = 0; i < n; ++i) {
            int prev = lower((i + n - 1) % n, j);
            // Enter the upper triangle through its left edge, cross the
            // diagonal into the lower triangle, exit through its right edge.
            add_crossing(prev, upper(i, j), mesh.cell_facets[upper(i, j)][1]);
            add_crossing(upper(i, j), lower(i, j), mesh.cell_facets[upper(i, j)][2]);
        }
    } else {
        const int i = index;
        for (int j = 0; j < n; ++j) {
            int prev = upper(i, (j + n - 1) % n);
            // Enter the lower triangle through its bottom edge, cross the
            // diagonal into the upper triangle, exit through its top edge.
            add_crossing(prev, lower(i, j), mesh.cell_facets[lower(i, j)][2]);
            add_crossing(lower(i, j), upper(i, j), mesh.cell_facets[lower(i, j)][1]);
        }
    }
    return c;
}

double kelvin_residual(const Field& u_prev, const Field& u_next, const Field& current,
                       const FunctionSpace& dg, double dt, FluxMode mode) {
    const FunctionSpace* w = u_prev.space;
    if (w == nullptr || u_next.space != w)
        throw InvalidArgument("kelvin_residual: velocity fields must share a space");
    if (dt <= 0.0) throw InvalidArgument("kelvin_residual: dt must be positive");

    Field c = current.space == w ? current : embed(current, *w);
    Field u_m{w, 0.5 * (u_prev.coeffs + u_next.coeffs)};

    SparseMat au = scalar_advection_matrix(u_m, dg, mode);
    SparseMat ac = scalar_advection_matrix(c, dg, mode, &u_m);
    auto um_i = interpolate_components(u_m, dg);
    auto c_i = interpolate_components(c, dg);
    // Same adjoint contraction as ep_identity_residual: the circulation
    // pairing uses -A^T, the flow generators with inverted facet-penalty
    // sign (identical to A in the centred case).
    double pairing = 0.0;
    for (int i = 0; i < 2; ++i)
        pairing -=
            (au * um_i[i].coeffs).dot(c_i[i].coeffs) - (ac * um_i[i].coeffs).dot(um_i[i].coeffs);

    SparseMat m = mass_matrix(*w);
    double lhs = (u_next.coeffs - u_prev.coeffs).dot(m * c.coeffs) / dt;
    return std::abs(lhs - pairing);
}

}  // namespace eulerfem
