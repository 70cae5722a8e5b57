#include "eulerfem/diagnostics.hpp"

#include <cmath>

#include "eulerfem/elements.hpp"

namespace eulerfem {

namespace {

CellGeometry cell_geometry(const Mesh& mesh, int cell) {
    auto j = mesh.jacobian(cell);
    return CellGeometry::make(mesh.corner(cell, 0), j[0], j[1]);
}

void require_vector(const Field& u, const char* who) {
    if (u.space == nullptr || !u.space->is_vector())
        throw InvalidArgument(std::string(who) + ": needs an RT/BDM field");
}

}  // namespace

double kinetic_energy(const Field& u) {
    require_vector(u, "kinetic_energy");
    const auto& sp = *u.space;
    const Mesh& mesh = *sp.mesh;
    auto rule = triangle_rule(std::min(kMaxQuadDegree, 2 * (sp.order + 1)));
    auto tab = sp.vector_element->tabulate(rule.points);
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd local = gather_cell(u, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            Vec2 vhat{0, 0};
            for (int j = 0; j < sp.dofs_per_cell; ++j) vhat += local(j) * tab.value(q, j);
            Vec2 v = piola_value(g, vhat);
            acc += rule.weights[q] * g.det * dot(v, v);
        }
    }
    return acc;
}

double enstrophy(const Field& u) {
    require_vector(u, "enstrophy");
    const auto& sp = *u.space;
    const Mesh& mesh = *sp.mesh;
    auto rule = triangle_rule(std::min(kMaxQuadDegree, 2 * (sp.order + 1)));
    auto tab = sp.vector_element->tabulate(rule.points);
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd local = gather_cell(u, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            Mat2 ghat;
            for (int j = 0; j < sp.dofs_per_cell; ++j) {
                const Mat2& gj = tab.gradient(q, j);
                for (int p = 0; p < 2; ++p)
                    for (int r = 0; r < 2; ++r) ghat.a[p][r] += local(j) * gj.a[p][r];
            }
            Mat2 grad = piola_gradient(g, ghat);
            double rot = grad.a[1][0] - grad.a[0][1];
            acc += rule.weights[q] * g.det * rot * rot;
        }
    }
    return acc;
}

double divergence_l2(const Field& u) {
    require_vector(u, "divergence_l2");
    const auto& sp = *u.space;
    const Mesh& mesh = *sp.mesh;
    auto rule = triangle_rule(std::min(kMaxQuadDegree, 2 * sp.order + 2));
    auto tab = sp.vector_element->tabulate(rule.points);
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd local = gather_cell(u, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            double dhat = 0.0;
            for (int j = 0; j < sp.dofs_per_cell; ++j) dhat += local(j) * tab.divergence(q, j);
            double d = piola_divergence(g, dhat);
            acc += rule.weights[q] * g.det * d * d;
        }
    }
    return std::sqrt(acc);
}

Field vorticity_dg(const Field& u, const FunctionSpace& dg) {
    require_vector(u, "vorticity_dg");
    if (dg.family != Family::DG) throw InvalidArgument("vorticity_dg: target must be DG");
    if (dg.mesh != u.space->mesh) throw InvalidArgument("vorticity_dg: mesh mismatch");
    const Mesh& mesh = *dg.mesh;
    auto nodes = dg.scalar_element->nodes();
    std::vector<Vec2> pts;
    pts.reserve(nodes.size());
    for (const auto& nd : nodes) pts.push_back(nd.point);
    Field out = zero_field(dg);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto rot = eval_vector_rot(u, c, pts);
        for (int i = 0; i < dg.dofs_per_cell; ++i) out.coeffs(dg.dof(c, i)) = rot[i];
    }
    return out;
}

double l2_error(const Field& u, const std::function<Vec2(const Vec2&)>& exact) {
    require_vector(u, "l2_error");
    const auto& sp = *u.space;
    const Mesh& mesh = *sp.mesh;
    auto rule = triangle_rule(std::min(kMaxQuadDegree, 2 * (sp.order + 1) + 3));
    auto tab = sp.vector_element->tabulate(rule.points);
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd local = gather_cell(u, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            Vec2 vhat{0, 0};
            for (int j = 0; j < sp.dofs_per_cell; ++j) vhat += local(j) * tab.value(q, j);
            Vec2 diff = piola_value(g, vhat) - exact(mesh.map_to_physical(c, rule.points[q]));
            acc += rule.weights[q] * g.det * dot(diff, diff);
        }
    }
    return std::sqrt(acc);
}

double l2_pair(const Field& a, const Field& b) {
    require_vector(a, "l2_pair");
    require_vector(b, "l2_pair");
    const auto& sa = *a.space;
    const auto& sb = *b.space;
    if (sa.mesh != sb.mesh) throw InvalidArgument("l2_pair: mesh mismatch");
    const Mesh& mesh = *sa.mesh;
    auto rule = triangle_rule(std::min(kMaxQuadDegree, sa.order + sb.order + 2));
    auto ta = sa.vector_element->tabulate(rule.points);
    auto tb = sb.vector_element->tabulate(rule.points);
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd la = gather_cell(a, c), lb = gather_cell(b, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            Vec2 va{0, 0}, vb{0, 0};
            for (int j = 0; j < sa.dofs_per_cell; ++j) va += la(j) * ta.value(q, j);
            for (int j = 0; j < sb.dofs_per_cell; ++j) vb += lb(j) * tb.value(q, j);
            acc += rule.weights[q] * g.det * dot(piola_value(g, va), piola_value(g, vb));
        }
    }
    return acc;
}

std::vector<double> convergence_orders(const std::vector<double>& errors,
                                       const std::vector<int>& ns) {
    if (errors.size() != ns.size() || errors.size() < 2)
        throw InvalidArgument("convergence_orders: need matching lists of length >= 2");
    std::vector<double> orders;
    orders.reserve(errors.size() - 1);
    for (std::size_t k = 1; k < errors.size(); ++k) {
        if (errors[k] <= 0.0 || errors[k - 1] <= 0.0 || ns[k] <= ns[k - 1])
            throw InvalidArgument("convergence_orders: errors must be positive, ns increasing");
        orders.push_back(std::log(errors[k - 1] / errors[k]) /
                         std::log(static_cast<double>(ns[k]) / ns[k - 1]));
    }
    return orders;
}

}  // namespace eulerfem
