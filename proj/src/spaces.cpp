#include "eulerfem/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/SparseCholesky>

namespace eulerfem {

namespace {

CellGeometry cell_geometry(const Mesh& mesh, int cell) {
    auto j = mesh.jacobian(cell);
    return CellGeometry::make(mesh.corner(cell, 0), j[0], j[1]);
}

// Sign of the local facet dof (moment k) relative to the global one: the
// global moment is taken in the canonical (plus-cell) traversal; a flipped
// cell sees the reversed parametrization and the opposite normal, giving
// (-1)^(k+1) from P_k(1-t) = (-1)^k P_k(t).
double facet_dof_sign(bool aligned, int k) { return aligned ? 1.0 : (k % 2 == 0 ? -1.0 : 1.0); }

// Reference coordinates on local edge le at canonical-facet parameter t for
// a cell whose traversal of the facet is `aligned` with the canonical one.
Vec2 edge_ref_point(int le, double t, bool aligned) {
    double s = aligned ? t : 1.0 - t;
    Vec2 tail = kReferenceVertices[kLocalEdgeVertices[le][0]];
    Vec2 head = kReferenceVertices[kLocalEdgeVertices[le][1]];
    return tail + s * (head - tail);
}

int quad_degree_for_mass(const FunctionSpace& s) {
    return s.is_vector() ? 2 * (s.order + 1) : 2 * s.order;
}

}  // namespace

FunctionSpace build_space(const Mesh& mesh, Family family, int order) {
    FunctionSpace sp;
    sp.mesh = &mesh;
    sp.family = family;
    sp.order = order;

    const int ncells = mesh.num_cells();
    const int nfacets = mesh.num_facets();

    if (family == Family::RT || family == Family::BDM) {
        sp.vector_element = std::make_shared<VectorElement>(family, order);
        const int s = order;
        const int per_facet = s + 1;
        const int nint = sp.vector_element->interior_dofs();
        sp.dofs_per_cell = sp.vector_element->ndofs();
        sp.dim = nfacets * per_facet + ncells * nint;
        sp.cell_dofs.resize(static_cast<std::size_t>(ncells) * sp.dofs_per_cell);
        sp.cell_signs.assign(sp.cell_dofs.size(), 1.0);
        for (int c = 0; c < ncells; ++c) {
            int base = c * sp.dofs_per_cell;
            for (int le = 0; le < 3; ++le) {
                int f = mesh.cell_facets[c][le];
                bool aligned = mesh.cell_facet_aligned[c][le];
                for (int k = 0; k <= s; ++k) {
                    sp.cell_dofs[base + le * per_facet + k] = f * per_facet + k;
                    sp.cell_signs[base + le * per_facet + k] = facet_dof_sign(aligned, k);
                }
            }
            for (int i = 0; i < nint; ++i)
                sp.cell_dofs[base + 3 * per_facet + i] = nfacets * per_facet + c * nint + i;
        }
        return sp;
    }

    if (family == Family::DG) {
        if (order < 0 || order > 3) throw InvalidArgument("build_space: DG order out of scope");
        sp.scalar_element = std::make_shared<ScalarElement>(order);
        sp.dofs_per_cell = sp.scalar_element->ndofs();
        sp.dim = ncells * sp.dofs_per_cell;
        sp.cell_dofs.resize(static_cast<std::size_t>(ncells) * sp.dofs_per_cell);
        sp.cell_signs.assign(sp.cell_dofs.size(), 1.0);
        for (int c = 0; c < ncells; ++c)
            for (int i = 0; i < sp.dofs_per_cell; ++i)
                sp.cell_dofs[c * sp.dofs_per_cell + i] = c * sp.dofs_per_cell + i;
        return sp;
    }

    if (family == Family::CG) {
        const int k = order;
        if (k < 1 || k > 3) throw InvalidArgument("build_space: CG order out of scope");
        sp.scalar_element = std::make_shared<ScalarElement>(k);
        sp.dofs_per_cell = sp.scalar_element->ndofs();
        const int per_facet = k - 1;
        const int nint = (k - 1) * (k - 2) / 2;
        const int nv = mesh.num_vertices();
        sp.dim = nv + nfacets * per_facet + ncells * nint;
        sp.cell_dofs.resize(static_cast<std::size_t>(ncells) * sp.dofs_per_cell);
        sp.cell_signs.assign(sp.cell_dofs.size(), 1.0);
        const auto& nodes = sp.scalar_element->nodes();
        for (int c = 0; c < ncells; ++c) {
            int base = c * sp.dofs_per_cell;
            for (int i = 0; i < sp.dofs_per_cell; ++i) {
                const auto& nd = nodes[i];
                switch (nd.kind) {
                    case ScalarElement::NodeKind::Vertex:
                        sp.cell_dofs[base + i] = mesh.cells[c][nd.entity];
                        break;
                    case ScalarElement::NodeKind::Edge: {
                        int f = mesh.cell_facets[c][nd.entity];
                        bool aligned = mesh.cell_facet_aligned[c][nd.entity];
                        int slot = aligned ? nd.slot : per_facet - 1 - nd.slot;
                        sp.cell_dofs[base + i] = nv + f * per_facet + slot;
                        break;
                    }
                    case ScalarElement::NodeKind::Interior:
                        sp.cell_dofs[base + i] =
                            nv + nfacets * per_facet + c * nint + nd.entity;
                        break;
                }
            }
        }
        return sp;
    }

    throw InvalidArgument("build_space: unknown family");
}

Field zero_field(const FunctionSpace& space) {
    return {&space, Eigen::VectorXd::Zero(space.dim)};
}

Eigen::VectorXd gather_cell(const Field& field, int cell) {
    const auto& sp = *field.space;
    Eigen::VectorXd local(sp.dofs_per_cell);
    for (int i = 0; i < sp.dofs_per_cell; ++i)
        local(i) = sp.sign(cell, i) * field.coeffs(sp.dof(cell, i));
    return local;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> mass_matrix(const FunctionSpace& space) {
    const Mesh& mesh = *space.mesh;
    auto rule = triangle_rule(quad_degree_for_mass(space));
    const int nloc = space.dofs_per_cell;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_cells()) * nloc * nloc);

    if (space.is_vector()) {
        auto tab = space.vector_element->tabulate(rule.points);
        for (int c = 0; c < mesh.num_cells(); ++c) {
            auto g = cell_geometry(mesh, c);
            for (int i = 0; i < nloc; ++i) {
                for (int j = 0; j < nloc; ++j) {
                    double acc = 0.0;
                    for (std::size_t q = 0; q < rule.points.size(); ++q) {
                        Vec2 vi = piola_value(g, tab.value(q, i));
                        Vec2 vj = piola_value(g, tab.value(q, j));
                        acc += rule.weights[q] * dot(vi, vj);
                    }
                    acc *= g.det;
                    trips.emplace_back(space.dof(c, i), space.dof(c, j),
                                       space.sign(c, i) * space.sign(c, j) * acc);
                }
            }
        }
    } else {
        auto tab = space.scalar_element->tabulate(rule.points);
        for (int c = 0; c < mesh.num_cells(); ++c) {
            double det = mesh.det_jacobian(c);
            for (int i = 0; i < nloc; ++i) {
                for (int j = 0; j < nloc; ++j) {
                    double acc = 0.0;
                    for (std::size_t q = 0; q < rule.points.size(); ++q)
                        acc += rule.weights[q] * tab.value(q, i) * tab.value(q, j);
                    trips.emplace_back(space.dof(c, i), space.dof(c, j), det * acc);
                }
            }
        }
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> m(space.dim, space.dim);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

namespace {

Field mass_solve(const FunctionSpace& space, const Eigen::VectorXd& rhs) {
    Eigen::SparseMatrix<double> m = mass_matrix(space);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(m);
    if (chol.info() != Eigen::Success)
        throw SolverError("l2_project: mass factorization failed");
    Field out{&space, chol.solve(rhs)};
    return out;
}

}  // namespace

Field l2_project(const FunctionSpace& space, const std::function<Vec2(const Vec2&)>& f) {
    if (!space.is_vector()) throw InvalidArgument("l2_project: vector data needs RT/BDM space");
    const Mesh& mesh = *space.mesh;
    int deg = std::min(kMaxQuadDegree, quad_degree_for_mass(space) + 6);
    auto rule = triangle_rule(deg);
    auto tab = space.vector_element->tabulate(rule.points);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.dim);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        for (int i = 0; i < space.dofs_per_cell; ++i) {
            double acc = 0.0;
            for (std::size_t q = 0; q < rule.points.size(); ++q) {
                Vec2 x = mesh.map_to_physical(c, rule.points[q]);
                acc += rule.weights[q] * dot(f(x), piola_value(g, tab.value(q, i)));
            }
            rhs(space.dof(c, i)) += space.sign(c, i) * g.det * acc;
        }
    }
    return mass_solve(space, rhs);
}

Field l2_project(const FunctionSpace& space, const std::function<double(const Vec2&)>& f) {
    if (space.is_vector()) throw InvalidArgument("l2_project: scalar data needs DG/CG space");
    const Mesh& mesh = *space.mesh;
    int deg = std::min(kMaxQuadDegree, quad_degree_for_mass(space) + 6);
    auto rule = triangle_rule(deg);
    auto tab = space.scalar_element->tabulate(rule.points);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.dim);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        double det = mesh.det_jacobian(c);
        for (int i = 0; i < space.dofs_per_cell; ++i) {
            double acc = 0.0;
            for (std::size_t q = 0; q < rule.points.size(); ++q) {
                Vec2 x = mesh.map_to_physical(c, rule.points[q]);
                acc += rule.weights[q] * f(x) * tab.value(q, i);
            }
            rhs(space.dof(c, i)) += det * acc;
        }
    }
    return mass_solve(space, rhs);
}

Field interpolate_cellwise(const FunctionSpace& space,
                           const std::function<Vec2(int cell, const Vec2& ref)>& eval) {
    if (!space.is_vector())
        throw InvalidArgument("interpolate_cellwise: needs a vector space");
    const Mesh& mesh = *space.mesh;
    const auto& elem = *space.vector_element;
    Field out = zero_field(space);
    const int per_facet = elem.facet_moments();
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        // Piola pullback: vhat = det J^{-1} v(x(ref)).
        auto pull = [&](const Vec2& ref) {
            Vec2 v = eval(c, ref);
            return Vec2{g.j1.y * v.x - g.j1.x * v.y, -g.j0.y * v.x + g.j0.x * v.y};
        };
        Eigen::VectorXd local = elem.apply_dofs(pull);
        for (int i = 0; i < space.dofs_per_cell; ++i) {
            if (i < 3 * per_facet) {
                int le = i / per_facet;
                if (!mesh.cell_facet_aligned[c][le]) continue;  // plus cell writes
            }
            out.coeffs(space.dof(c, i)) = space.sign(c, i) * local(i);
        }
    }
    return out;
}

Field interpolate(const FunctionSpace& space, const std::function<Vec2(const Vec2&)>& f) {
    const Mesh* mesh = space.mesh;
    return interpolate_cellwise(
        space, [&, mesh](int c, const Vec2& ref) { return f(mesh->map_to_physical(c, ref)); });
}

Field interpolate(const FunctionSpace& space, const std::function<double(const Vec2&)>& f) {
    if (space.is_vector()) throw InvalidArgument("interpolate: scalar data needs DG/CG space");
    const Mesh& mesh = *space.mesh;
    Field out = zero_field(space);
    const auto& nodes = space.scalar_element->nodes();
    for (int c = 0; c < mesh.num_cells(); ++c)
        for (int i = 0; i < space.dofs_per_cell; ++i)
            out.coeffs(space.dof(c, i)) = f(mesh.map_to_physical(c, nodes[i].point));
    return out;
}

Field embed(const Field& src, const FunctionSpace& target) {
    if (src.space->mesh != target.mesh) throw InvalidArgument("embed: mesh mismatch");
    if (!src.space->is_vector() || !target.is_vector())
        throw InvalidArgument("embed: vector spaces only");
    return interpolate_cellwise(target, [&](int c, const Vec2& ref) {
        return eval_vector(src, c, {ref})[0];
    });
}

std::array<Field, 2> interpolate_components(const Field& u, const FunctionSpace& dg) {
    if (u.space->mesh != dg.mesh) throw InvalidArgument("interpolate_components: mesh mismatch");
    if (dg.family != Family::DG)
        throw InvalidArgument("interpolate_components: target must be DG");
    const Mesh& mesh = *dg.mesh;
    std::vector<Vec2> pts;
    for (const auto& nd : dg.scalar_element->nodes()) pts.push_back(nd.point);
    std::array<Field, 2> out{zero_field(dg), zero_field(dg)};
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto vals = eval_vector(u, c, pts);
        for (int i = 0; i < dg.dofs_per_cell; ++i) {
            out[0].coeffs(dg.dof(c, i)) = vals[i].x;
            out[1].coeffs(dg.dof(c, i)) = vals[i].y;
        }
    }
    return out;
}

Field div_free_from_stream(const Field& stream, const FunctionSpace& target) {
    const FunctionSpace& cg = *stream.space;
    if (cg.family != Family::CG)
        throw InvalidArgument("div_free_from_stream: stream must be a CG field");
    if (!target.is_vector())
        throw InvalidArgument("div_free_from_stream: target must be RT/BDM");
    if (cg.mesh != target.mesh) throw InvalidArgument("div_free_from_stream: mesh mismatch");
    if (cg.order != target.order + 1)
        throw InvalidArgument("div_free_from_stream: stream order must be target order + 1");

    if (!cg.mesh->periodic) {
        // Tangency of grad-perp(psi) requires psi constant along the boundary.
        auto bdofs = boundary_dofs(cg);
        double lo = 0.0, hi = 0.0, scale = 1.0;
        bool first = true;
        for (int d : bdofs) {
            double v = stream.coeffs(d);
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
            scale = std::max(scale, std::abs(v));
        }
        if (!first && hi - lo > 1e-12 * scale)
            throw InvalidArgument(
                "div_free_from_stream: stream is not constant on the boundary");
    }

    return interpolate_cellwise(target, [&](int c, const Vec2& ref) {
        Vec2 grad = eval_scalar_gradient(stream, c, {ref})[0];
        return perp_cw(grad);  // (d2 psi, -d1 psi)
    });
}

SparseMat stream_curl_matrix(const FunctionSpace& stream_cg, const FunctionSpace& velocity) {
    const FunctionSpace& cg = stream_cg;
    if (cg.family != Family::CG)
        throw InvalidArgument("stream_curl_matrix: stream space must be CG");
    if (!velocity.is_vector())
        throw InvalidArgument("stream_curl_matrix: target must be RT/BDM");
    if (cg.mesh != velocity.mesh) throw InvalidArgument("stream_curl_matrix: mesh mismatch");
    if (cg.order != velocity.order + 1)
        throw InvalidArgument("stream_curl_matrix: stream order must be target order + 1");

    const Mesh& mesh = *velocity.mesh;
    const auto& elem = *velocity.vector_element;
    const auto& selem = *cg.scalar_element;
    const int nv = velocity.dofs_per_cell;
    const int nc = cg.dofs_per_cell;
    const int per_facet = elem.facet_moments();

    // One reference block serves every cell: the contravariant pullback
    // det(J) J^{-1} of perp(grad psi) equals perp of the reference gradient
    // (the 2D identity J^{-1} perp J^{-T} = det(J)^{-1} perp).
    Eigen::MatrixXd block(nv, nc);
    for (int k = 0; k < nc; ++k)
        block.col(k) = elem.apply_dofs([&](const Vec2& ref) {
            auto tab = selem.tabulate({ref});
            return perp_cw(tab.gradient(0, k));
        });

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_cells()) * nv * nc);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        for (int i = 0; i < nv; ++i) {
            // Shared facet dofs are written by the aligned cell only; the
            // two sides agree because the normal trace of grad-perp(psi) is
            // the tangential derivative of a continuous function.
            if (i < 3 * per_facet && !mesh.cell_facet_aligned[c][i / per_facet]) continue;
            const double sgn = velocity.sign(c, i);
            for (int k = 0; k < nc; ++k) {
                double v = sgn * block(i, k);
                if (v != 0.0) trips.emplace_back(velocity.dof(c, i), cg.dof(c, k), v);
            }
        }
    }
    SparseMat out(velocity.dim, cg.dim);
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

Field seeded_stream(const FunctionSpace& cg, unsigned seed) {
    if (cg.family != Family::CG) throw InvalidArgument("seeded_stream: needs a CG space");
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Field out = zero_field(cg);
    for (int i = 0; i < cg.dim; ++i) out.coeffs(i) = dist(gen);
    if (!cg.mesh->periodic)
        for (int d : boundary_dofs(cg)) out.coeffs(d) = 0.0;
    return out;
}

std::vector<Vec2> eval_vector(const Field& u, int cell, const std::vector<Vec2>& ref) {
    const auto& sp = *u.space;
    if (!sp.is_vector()) throw InvalidArgument("eval_vector: not a vector field");
    auto tab = sp.vector_element->tabulate(ref);
    auto g = cell_geometry(*sp.mesh, cell);
    Eigen::VectorXd local = gather_cell(u, cell);
    std::vector<Vec2> out(ref.size(), Vec2{0.0, 0.0});
    for (std::size_t q = 0; q < ref.size(); ++q) {
        Vec2 vhat{0.0, 0.0};
        for (int j = 0; j < sp.dofs_per_cell; ++j) vhat += local(j) * tab.value(q, j);
        out[q] = piola_value(g, vhat);
    }
    return out;
}

std::vector<double> eval_vector_divergence(const Field& u, int cell,
                                           const std::vector<Vec2>& ref) {
    const auto& sp = *u.space;
    if (!sp.is_vector()) throw InvalidArgument("eval_vector_divergence: not a vector field");
    auto tab = sp.vector_element->tabulate(ref);
    auto g = cell_geometry(*sp.mesh, cell);
    Eigen::VectorXd local = gather_cell(u, cell);
    std::vector<double> out(ref.size(), 0.0);
    for (std::size_t q = 0; q < ref.size(); ++q) {
        double dhat = 0.0;
        for (int j = 0; j < sp.dofs_per_cell; ++j) dhat += local(j) * tab.divergence(q, j);
        out[q] = piola_divergence(g, dhat);
    }
    return out;
}

std::vector<double> eval_vector_rot(const Field& u, int cell, const std::vector<Vec2>& ref) {
    const auto& sp = *u.space;
    if (!sp.is_vector()) throw InvalidArgument("eval_vector_rot: not a vector field");
    auto tab = sp.vector_element->tabulate(ref);
    auto g = cell_geometry(*sp.mesh, cell);
    Eigen::VectorXd local = gather_cell(u, cell);
    std::vector<double> out(ref.size(), 0.0);
    for (std::size_t q = 0; q < ref.size(); ++q) {
        Mat2 gh;
        for (int j = 0; j < sp.dofs_per_cell; ++j) {
            const Mat2& gj = tab.gradient(q, j);
            for (int p = 0; p < 2; ++p)
                for (int r = 0; r < 2; ++r) gh.a[p][r] += local(j) * gj.a[p][r];
        }
        Mat2 gp = piola_gradient(g, gh);
        out[q] = gp.a[1][0] - gp.a[0][1];
    }
    return out;
}

std::vector<double> eval_scalar(const Field& f, int cell, const std::vector<Vec2>& ref) {
    const auto& sp = *f.space;
    if (sp.is_vector()) throw InvalidArgument("eval_scalar: not a scalar field");
    auto tab = sp.scalar_element->tabulate(ref);
    Eigen::VectorXd local = gather_cell(f, cell);
    std::vector<double> out(ref.size(), 0.0);
    for (std::size_t q = 0; q < ref.size(); ++q) {
        double v = 0.0;
        for (int j = 0; j < sp.dofs_per_cell; ++j) v += local(j) * tab.value(q, j);
        out[q] = v;
    }
    return out;
}

std::vector<Vec2> eval_scalar_gradient(const Field& f, int cell,
                                       const std::vector<Vec2>& ref) {
    const auto& sp = *f.space;
    if (sp.is_vector()) throw InvalidArgument("eval_scalar_gradient: not a scalar field");
    auto tab = sp.scalar_element->tabulate(ref);
    auto g = cell_geometry(*sp.mesh, cell);
    Eigen::VectorXd local = gather_cell(f, cell);
    std::vector<Vec2> out(ref.size(), Vec2{0.0, 0.0});
    for (std::size_t q = 0; q < ref.size(); ++q) {
        Vec2 gh{0.0, 0.0};
        for (int j = 0; j < sp.dofs_per_cell; ++j) gh += local(j) * tab.gradient(q, j);
        out[q] = scalar_gradient(g, gh);
    }
    return out;
}

double max_normal_jump(const Field& u) {
    const auto& sp = *u.space;
    if (!sp.is_vector()) throw InvalidArgument("max_normal_jump: not a vector field");
    const Mesh& mesh = *sp.mesh;
    auto rule = edge_rule(2 * sp.order + 2);
    double worst = 0.0;
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.interior) continue;
        std::vector<Vec2> rp, rm;
        for (const auto& p : rule.points) {
            rp.push_back(edge_ref_point(fc.plus_local, p.x, true));
            rm.push_back(edge_ref_point(fc.minus_local, p.x, false));
        }
        auto vp = eval_vector(u, fc.plus_cell, rp);
        auto vm = eval_vector(u, fc.minus_cell, rm);
        for (std::size_t q = 0; q < rule.points.size(); ++q)
            worst = std::max(worst, std::abs(dot(vp[q] - vm[q], fc.normal)));
    }
    return worst;
}

std::vector<int> boundary_dofs(const FunctionSpace& space) {
    const Mesh& mesh = *space.mesh;
    std::vector<int> out;
    if (space.family == Family::DG) return out;
    if (space.is_vector()) {
        const int per_facet = space.order + 1;
        for (int f = 0; f < mesh.num_facets(); ++f)
            if (!mesh.facets[f].interior)
                for (int k = 0; k < per_facet; ++k) out.push_back(f * per_facet + k);
        return out;
    }
    // CG: vertices and edge nodes of boundary facets.
    const int per_facet = space.order - 1;
    std::vector<char> seen(space.dim, 0);
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        if (fc.interior) continue;
        for (int v : {fc.v0, fc.v1}) {
            if (!seen[v]) out.push_back(v);
            seen[v] = 1;
        }
        for (int k = 0; k < per_facet; ++k) {
            int d = mesh.num_vertices() + f * per_facet + k;
            if (!seen[d]) out.push_back(d);
            seen[d] = 1;
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace eulerfem
