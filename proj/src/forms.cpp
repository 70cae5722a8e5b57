#include "eulerfem/forms.hpp"

#include <cmath>
#include <vector>

namespace eulerfem {

namespace {

AssemblyBackend g_backend = AssemblyBackend::Parallel;

CellGeometry cell_geometry(const Mesh& mesh, int cell) {
    auto j = mesh.jacobian(cell);
    return CellGeometry::make(mesh.corner(cell, 0), j[0], j[1]);
}

int capped(int degree) { return std::min(degree, kMaxQuadDegree); }

// Reference points on local edge `le` at the canonical facet parameters of
// `rule`; orientation false walks the edge against the cell's traversal.
std::vector<Vec2> edge_ref_points(int le, const QuadratureRule& rule, bool aligned) {
    Vec2 tail = kReferenceVertices[kLocalEdgeVertices[le][0]];
    Vec2 head = kReferenceVertices[kLocalEdgeVertices[le][1]];
    std::vector<Vec2> pts;
    pts.reserve(rule.points.size());
    for (const auto& p : rule.points) {
        double t = aligned ? p.x : 1.0 - p.x;
        pts.push_back(tail + t * (head - tail));
    }
    return pts;
}

// tab[le][o]: o = 0 aligned with the canonical facet direction (plus side),
// o = 1 reversed (minus side); matched rows integrate against each other.
struct VectorTraceTabs {
    VectorTabulation tab[3][2];
};
struct ScalarTraceTabs {
    ScalarTabulation tab[3][2];
};

VectorTraceTabs vector_trace_tabs(const VectorElement& e, const QuadratureRule& rule) {
    VectorTraceTabs t;
    for (int le = 0; le < 3; ++le)
        for (int o = 0; o < 2; ++o) t.tab[le][o] = e.tabulate(edge_ref_points(le, rule, o == 0));
    return t;
}

ScalarTraceTabs scalar_trace_tabs(const ScalarElement& e, const QuadratureRule& rule) {
    ScalarTraceTabs t;
    for (int le = 0; le < 3; ++le)
        for (int o = 0; o < 2; ++o) t.tab[le][o] = e.tabulate(edge_ref_points(le, rule, o == 0));
    return t;
}

double upwind_cf(double wn) {
    if (std::abs(wn) < kUpwindEps) return 0.0;
    return wn > 0.0 ? 0.5 : -0.5;
}

void require_same_vector_space(const Field& u, const Field& a, const Field& v) {
    if (u.space == nullptr || u.space != a.space || u.space != v.space)
        throw InvalidArgument("momentum form: fields must share one space");
    if (!u.space->is_vector())
        throw InvalidArgument("momentum form: fields must be RT/BDM");
}

double div_l2_norm(const Field& beta) {
    const auto& sp = *beta.space;
    const Mesh& mesh = *sp.mesh;
    auto rule = triangle_rule(capped(2 * sp.order + 2));
    auto tab = sp.vector_element->tabulate(rule.points);
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd local = gather_cell(beta, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            double dhat = 0.0;
            for (int j = 0; j < sp.dofs_per_cell; ++j) dhat += local(j) * tab.divergence(q, j);
            double d = piola_divergence(g, dhat);
            acc += rule.weights[q] * g.det * d * d;
        }
    }
    return std::sqrt(acc);
}

// Physical trace values of a vector field on both sides of a facet.
struct FacetFieldTraces {
    std::vector<Vec2> plus, minus;
};

FacetFieldTraces facet_traces(const Field& w, const Facet& fc, const VectorTraceTabs& tabs,
                              int nq) {
    const auto& sp = *w.space;
    const Mesh& mesh = *sp.mesh;
    FacetFieldTraces out;
    out.plus.assign(nq, Vec2{0.0, 0.0});
    out.minus.assign(nq, Vec2{0.0, 0.0});
    auto side = [&](int cell, int le, int o, std::vector<Vec2>& dst) {
        auto g = cell_geometry(mesh, cell);
        Eigen::VectorXd local = gather_cell(w, cell);
        const auto& tab = tabs.tab[le][o];
        for (int q = 0; q < nq; ++q) {
            Vec2 vhat{0.0, 0.0};
            for (int j = 0; j < sp.dofs_per_cell; ++j) vhat += local(j) * tab.value(q, j);
            dst[q] = piola_value(g, vhat);
        }
    };
    side(fc.plus_cell, fc.plus_local, 0, out.plus);
    side(fc.minus_cell, fc.minus_local, 1, out.minus);
    return out;
}

}  // namespace

void set_assembly_backend(AssemblyBackend backend) { g_backend = backend; }
AssemblyBackend assembly_backend() { return g_backend; }

SparseMat scalar_advection_matrix(const Field& beta, const FunctionSpace& dg, FluxMode mode,
                                  const Field* indicator) {
    const auto& bsp = *beta.space;
    if (!bsp.is_vector()) throw InvalidArgument("scalar_advection_matrix: beta must be RT/BDM");
    if (dg.family != Family::DG)
        throw InvalidArgument("scalar_advection_matrix: scalar space must be DG");
    if (bsp.mesh != dg.mesh) throw InvalidArgument("scalar_advection_matrix: mesh mismatch");
    const Field& ind = indicator ? *indicator : beta;
    if (ind.space->mesh != dg.mesh)
        throw InvalidArgument("scalar_advection_matrix: indicator mesh mismatch");
    if (div_l2_norm(beta) >= 1e-10)
        throw InvalidArgument("scalar_advection_matrix: beta is not divergence-free");

    const Mesh& mesh = *dg.mesh;
    const int s = bsp.order;
    const int r = dg.order;
    const int nloc = dg.dofs_per_cell;

    auto vrule = triangle_rule(capped(std::max(3 * s + 2, 2 * r + s + 1)));
    // The facet rule must match the momentum forms' facet rule: the upwind
    // sign factor is not polynomial, so the operator-level identities between
    // the scalar and momentum forms hold exactly only when both sides sample
    // the same facet points.
    auto erule = edge_rule(capped(std::max(3 * s + 3, 2 * r + s + 1)));
    auto btab = bsp.vector_element->tabulate(vrule.points);
    auto atab = dg.scalar_element->tabulate(vrule.points);
    auto btr = vector_trace_tabs(*bsp.vector_element, erule);
    auto itr = vector_trace_tabs(*ind.space->vector_element, erule);
    auto str = scalar_trace_tabs(*dg.scalar_element, erule);
    const int nq = static_cast<int>(erule.points.size());

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_cells()) * nloc * nloc +
                  static_cast<std::size_t>(mesh.num_facets()) * 4 * nloc * nloc);

    // Volume: -(a, div(beta b))_K = -(a, (div beta) b + beta . grad b)_K.
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd bloc = gather_cell(beta, c);
        for (std::size_t q = 0; q < vrule.points.size(); ++q) {
            Vec2 bhat{0.0, 0.0};
            double dhat = 0.0;
            for (int j = 0; j < bsp.dofs_per_cell; ++j) {
                bhat += bloc(j) * btab.value(q, j);
                dhat += bloc(j) * btab.divergence(q, j);
            }
            Vec2 bval = piola_value(g, bhat);
            double bdiv = piola_divergence(g, dhat);
            double w = vrule.weights[q] * g.det;
            for (int i = 0; i < nloc; ++i) {
                Vec2 gi = scalar_gradient(g, atab.gradient(q, i));
                double rowfac = bdiv * atab.value(q, i) + dot(bval, gi);
                for (int j = 0; j < nloc; ++j)
                    trips.emplace_back(dg.dof(c, i), dg.dof(c, j),
                                       -w * atab.value(q, j) * rowfac);
            }
        }
    }

    // Interior facets: (beta.n {a}, [b])_f + (c_f beta.n [a], [b])_f.
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.interior) continue;
        auto bt = facet_traces(beta, fc, btr, nq);
        FacetFieldTraces it;
        if (mode == FluxMode::Upwind) it = facet_traces(ind, fc, itr, nq);

        const int cells[2] = {fc.plus_cell, fc.minus_cell};
        const int les[2] = {fc.plus_local, fc.minus_local};
        const double sgn[2] = {1.0, -1.0};
        for (int q = 0; q < nq; ++q) {
            double bn = 0.5 * (dot(bt.plus[q], fc.normal) + dot(bt.minus[q], fc.normal));
            double cf = 0.0;
            if (mode == FluxMode::Upwind) {
                double wn = 0.5 * (dot(it.plus[q], fc.normal) + dot(it.minus[q], fc.normal));
                cf = upwind_cf(wn);
            }
            double w = erule.weights[q] * fc.length;
            for (int sb = 0; sb < 2; ++sb) {
                const auto& tb = str.tab[les[sb]][sb];
                for (int sa = 0; sa < 2; ++sa) {
                    const auto& ta = str.tab[les[sa]][sa];
                    for (int i = 0; i < nloc; ++i) {
                        double bi = sgn[sb] * tb.value(q, i);
                        for (int j = 0; j < nloc; ++j) {
                            double aj = ta.value(q, j);
                            double avg = 0.5 * aj;           // {a} from one side
                            double jmp = sgn[sa] * aj;       // [a] from one side
                            trips.emplace_back(dg.dof(cells[sb], i), dg.dof(cells[sa], j),
                                               w * (bn * avg + cf * bn * jmp) * bi);
                        }
                    }
                }
            }
        }
    }

    SparseMat a(dg.dim, dg.dim);
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    return a;
}

double momentum_trilinear_gss(const Field& u, const Field& a, const Field& v, FluxMode mode) {
    require_same_vector_space(u, a, v);
    const auto& sp = *u.space;
    const Mesh& mesh = *sp.mesh;
    const int s = sp.order;
    const int nloc = sp.dofs_per_cell;

    auto vrule = triangle_rule(capped(3 * s + 2));
    auto erule = edge_rule(capped(3 * s + 3));
    auto tab = sp.vector_element->tabulate(vrule.points);
    auto tr = vector_trace_tabs(*sp.vector_element, erule);
    const int nq = static_cast<int>(erule.points.size());

    double acc = 0.0;
    // Volume: -(a, u . grad v)_K.
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd ul = gather_cell(u, c), al = gather_cell(a, c), vl = gather_cell(v, c);
        for (std::size_t q = 0; q < vrule.points.size(); ++q) {
            Vec2 uhat{0, 0}, ahat{0, 0};
            Mat2 gvhat;
            for (int j = 0; j < nloc; ++j) {
                uhat += ul(j) * tab.value(q, j);
                ahat += al(j) * tab.value(q, j);
                const Mat2& gj = tab.gradient(q, j);
                for (int p = 0; p < 2; ++p)
                    for (int r = 0; r < 2; ++r) gvhat.a[p][r] += vl(j) * gj.a[p][r];
            }
            Vec2 uval = piola_value(g, uhat), aval = piola_value(g, ahat);
            Mat2 gv = piola_gradient(g, gvhat);
            Vec2 ugradv{gv.a[0][0] * uval.x + gv.a[0][1] * uval.y,
                        gv.a[1][0] * uval.x + gv.a[1][1] * uval.y};
            acc -= vrule.weights[q] * g.det * dot(aval, ugradv);
        }
    }
    // Facets: (u.n {a}, [v])_f + upwind (c_f cross(n,[a]), [cross(u,v)])_f.
    // The sign of the upwind penalty is pinned by dissipativity: with this
    // orientation the form damps enstrophy (T(u;u,u) = 0 still holds, and
    // the induced scalar transport penalty is positive semi-definite).
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.interior) continue;
        auto ut = facet_traces(u, fc, tr, nq);
        auto at = facet_traces(a, fc, tr, nq);
        auto vt = facet_traces(v, fc, tr, nq);
        for (int q = 0; q < nq; ++q) {
            double w = erule.weights[q] * fc.length;
            double un = 0.5 * (dot(ut.plus[q], fc.normal) + dot(ut.minus[q], fc.normal));
            Vec2 avg_a = 0.5 * (at.plus[q] + at.minus[q]);
            Vec2 jump_v = vt.plus[q] - vt.minus[q];
            acc += w * un * dot(avg_a, jump_v);
            if (mode == FluxMode::Upwind) {
                double cf = upwind_cf(un);
                Vec2 jump_a = at.plus[q] - at.minus[q];
                double jump_cross =
                    cross(ut.plus[q], vt.plus[q]) - cross(ut.minus[q], vt.minus[q]);
                acc += w * cf * cross(fc.normal, jump_a) * jump_cross;
            }
        }
    }
    return acc;
}

double momentum_trilinear_rotational(const Field& u, const Field& a, const Field& v,
                                     FluxMode mode) {
    require_same_vector_space(u, a, v);
    const auto& sp = *u.space;
    const Mesh& mesh = *sp.mesh;
    const int s = sp.order;
    const int nloc = sp.dofs_per_cell;

    auto vrule = triangle_rule(capped(3 * s + 2));
    auto erule = edge_rule(capped(3 * s + 3));
    auto tab = sp.vector_element->tabulate(vrule.points);
    auto tr = vector_trace_tabs(*sp.vector_element, erule);
    const int nq = static_cast<int>(erule.points.size());

    double acc = 0.0;
    // Volume: (a, grad_perp cross(u,v) - u div v)_K.
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd ul = gather_cell(u, c), al = gather_cell(a, c), vl = gather_cell(v, c);
        for (std::size_t q = 0; q < vrule.points.size(); ++q) {
            Vec2 uhat{0, 0}, ahat{0, 0}, vhat{0, 0};
            Mat2 guhat, gvhat;
            double dvhat = 0.0;
            for (int j = 0; j < nloc; ++j) {
                uhat += ul(j) * tab.value(q, j);
                ahat += al(j) * tab.value(q, j);
                vhat += vl(j) * tab.value(q, j);
                dvhat += vl(j) * tab.divergence(q, j);
                const Mat2& gj = tab.gradient(q, j);
                for (int p = 0; p < 2; ++p)
                    for (int r = 0; r < 2; ++r) {
                        guhat.a[p][r] += ul(j) * gj.a[p][r];
                        gvhat.a[p][r] += vl(j) * gj.a[p][r];
                    }
            }
            Vec2 uval = piola_value(g, uhat), aval = piola_value(g, ahat),
                 vval = piola_value(g, vhat);
            Mat2 gu = piola_gradient(g, guhat), gv = piola_gradient(g, gvhat);
            double dv = piola_divergence(g, dvhat);
            // grad of psi = cross(u, v) by the product rule.
            Vec2 gpsi{gu.a[0][0] * vval.y + uval.x * gv.a[1][0] - gu.a[1][0] * vval.x -
                          uval.y * gv.a[0][0],
                      gu.a[0][1] * vval.y + uval.x * gv.a[1][1] - gu.a[1][1] * vval.x -
                          uval.y * gv.a[0][1]};
            Vec2 gperp = perp_cw(gpsi);  // (d2 psi, -d1 psi)
            acc += vrule.weights[q] * g.det * (dot(aval, gperp) - dot(aval, uval) * dv);
        }
    }
    // Facets: (cross(n,{a}), [cross(u,v)])_f + upwind (c_f cross(n,[a]), [cross(u,v)])_f,
    // with the same upwind sign convention as the flux form.
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.interior) continue;
        auto ut = facet_traces(u, fc, tr, nq);
        auto at = facet_traces(a, fc, tr, nq);
        auto vt = facet_traces(v, fc, tr, nq);
        for (int q = 0; q < nq; ++q) {
            double w = erule.weights[q] * fc.length;
            Vec2 avg_a = 0.5 * (at.plus[q] + at.minus[q]);
            double jump_cross =
                cross(ut.plus[q], vt.plus[q]) - cross(ut.minus[q], vt.minus[q]);
            acc += w * cross(fc.normal, avg_a) * jump_cross;
            if (mode == FluxMode::Upwind) {
                double un = 0.5 * (dot(ut.plus[q], fc.normal) + dot(ut.minus[q], fc.normal));
                Vec2 jump_a = at.plus[q] - at.minus[q];
                acc += w * upwind_cf(un) * cross(fc.normal, jump_a) * jump_cross;
            }
        }
    }
    return acc;
}

SparseMat divergence_matrix(const FunctionSpace& velocity, const FunctionSpace& pressure) {
    check_velocity_pressure_pairing(velocity, pressure);
    const Mesh& mesh = *velocity.mesh;
    auto rule = triangle_rule(capped(velocity.order + pressure.order + 1));
    auto wtab = velocity.vector_element->tabulate(rule.points);
    auto qtab = pressure.scalar_element->tabulate(rule.points);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_cells()) * velocity.dofs_per_cell *
                  pressure.dofs_per_cell);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto g = cell_geometry(mesh, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            double w = rule.weights[q] * g.det;
            for (int k = 0; k < pressure.dofs_per_cell; ++k)
                for (int j = 0; j < velocity.dofs_per_cell; ++j)
                    trips.emplace_back(pressure.dof(c, k), velocity.dof(c, j),
                                       w * qtab.value(q, k) * velocity.sign(c, j) *
                                           piola_divergence(g, wtab.divergence(q, j)));
        }
    }
    SparseMat d(pressure.dim, velocity.dim);
    d.setFromTriplets(trips.begin(), trips.end());
    d.makeCompressed();
    return d;
}

Eigen::VectorXd mean_vector(const FunctionSpace& pressure) {
    if (pressure.family != Family::DG) throw InvalidArgument("mean_vector: needs a DG space");
    const Mesh& mesh = *pressure.mesh;
    auto rule = triangle_rule(capped(pressure.order));
    auto qtab = pressure.scalar_element->tabulate(rule.points);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(pressure.dim);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        double det = mesh.det_jacobian(c);
        for (std::size_t q = 0; q < rule.points.size(); ++q)
            for (int k = 0; k < pressure.dofs_per_cell; ++k)
                e(pressure.dof(c, k)) += rule.weights[q] * det * qtab.value(q, k);
    }
    return e;
}

void check_velocity_pressure_pairing(const FunctionSpace& velocity,
                                     const FunctionSpace& pressure) {
    if (!velocity.is_vector() || pressure.family != Family::DG)
        throw InvalidArgument("pairing: velocity must be RT/BDM, pressure DG");
    if (velocity.mesh != pressure.mesh) throw InvalidArgument("pairing: mesh mismatch");
    int want = velocity.family == Family::RT ? velocity.order : velocity.order - 1;
    if (pressure.order != want)
        throw InvalidArgument("pairing: pressure order must match div(velocity) degree");
}

AssembledResidual assemble_step_residual(const Field& u_n, const Eigen::VectorXd& x_guess,
                                         const FunctionSpace& velocity,
                                         const FunctionSpace& pressure, double dt,
                                         double t_mid, FluxMode mode, const Forcing& forcing,
                                         bool with_jacobian) {
    check_velocity_pressure_pairing(velocity, pressure);
    if (u_n.space != &velocity)
        throw InvalidArgument("assemble_step_residual: u_n not in the velocity space");
    if (dt == 0.0) throw InvalidArgument("assemble_step_residual: dt must be nonzero");
    const int nu = velocity.dim, np = pressure.dim;
    const int ndim = nu + np + 1;
    if (x_guess.size() != ndim)
        throw InvalidArgument("assemble_step_residual: state size mismatch");

    const Mesh& mesh = *velocity.mesh;
    const int s = velocity.order;
    const int nw = velocity.dofs_per_cell;
    const int nq_ = pressure.dofs_per_cell;
    const int ncells = mesh.num_cells();
    const int nfacets = mesh.num_facets();
    const bool par = g_backend == AssemblyBackend::Parallel;
    const double lambda = x_guess(ndim - 1);

    Field u_g{&velocity, x_guess.head(nu)};
    Field u_m{&velocity, 0.5 * (u_n.coeffs + u_g.coeffs)};
    Field p{&pressure, x_guess.segment(nu, np)};

    auto vrule = triangle_rule(capped(3 * s + 2));
    auto erule = edge_rule(capped(3 * s + 3));
    auto wtab = velocity.vector_element->tabulate(vrule.points);
    auto qtab = pressure.scalar_element->tabulate(vrule.points);
    auto wtr = vector_trace_tabs(*velocity.vector_element, erule);
    const int nvq = static_cast<int>(vrule.points.size());
    const int neq = static_cast<int>(erule.points.size());

    // Per-entity buffers, filled in parallel, scattered in fixed order.
    std::vector<double> cell_ru(static_cast<std::size_t>(ncells) * nw, 0.0);
    std::vector<double> cell_rq(static_cast<std::size_t>(ncells) * nq_, 0.0);
    std::vector<double> cell_rl(ncells, 0.0);
    std::vector<double> facet_ru(static_cast<std::size_t>(nfacets) * 2 * nw, 0.0);

    const std::size_t cell_stride =
        with_jacobian ? static_cast<std::size_t>(nw) * nw + 2u * nw * nq_ + 2u * nq_ : 0;
    const std::size_t facet_stride = with_jacobian ? 4u * static_cast<std::size_t>(nw) * nw : 0;
    std::vector<Eigen::Triplet<double>> trips;
    if (with_jacobian)
        trips.resize(static_cast<std::size_t>(ncells) * cell_stride +
                     static_cast<std::size_t>(nfacets) * facet_stride);

    const int row_p0 = nu, row_l = nu + np;

#pragma omp parallel for schedule(static) if (par)
    for (int c = 0; c < ncells; ++c) {
        auto g = cell_geometry(mesh, c);
        Eigen::VectorXd unl = gather_cell(u_n, c);
        Eigen::VectorXd ugl = gather_cell(u_g, c);
        Eigen::VectorXd uml = 0.5 * (unl + ugl);
        Eigen::VectorXd pl = gather_cell(p, c);

        Eigen::MatrixXd juu, jup, jpu;
        Eigen::VectorXd jpl;
        if (with_jacobian) {
            juu = Eigen::MatrixXd::Zero(nw, nw);
            jup = Eigen::MatrixXd::Zero(nw, nq_);
            jpu = Eigen::MatrixXd::Zero(nq_, nw);
            jpl = Eigen::VectorXd::Zero(nq_);
        }
        std::vector<Vec2> val(nw);
        std::vector<Mat2> grd(nw);
        std::vector<double> dv(nw);

        for (int q = 0; q < nvq; ++q) {
            double w = vrule.weights[q] * g.det;
            for (int j = 0; j < nw; ++j) {
                val[j] = piola_value(g, wtab.value(q, j));
                grd[j] = piola_gradient(g, wtab.gradient(q, j));
                dv[j] = piola_divergence(g, wtab.divergence(q, j));
            }
            Vec2 umv{0, 0}, dudt{0, 0};
            double divug = 0.0;
            for (int j = 0; j < nw; ++j) {
                umv += uml(j) * val[j];
                dudt += ((ugl(j) - unl(j)) / dt) * val[j];
                divug += ugl(j) * dv[j];
            }
            double pv = 0.0;
            for (int k = 0; k < nq_; ++k) pv += pl(k) * qtab.value(q, k);
            Vec2 fv{0, 0};
            if (forcing) fv = forcing(mesh.map_to_physical(c, vrule.points[q]), t_mid);

            for (int i = 0; i < nw; ++i) {
                // (u . grad) Phi_i at u = u_m.
                Vec2 ugradi{grd[i].a[0][0] * umv.x + grd[i].a[0][1] * umv.y,
                            grd[i].a[1][0] * umv.x + grd[i].a[1][1] * umv.y};
                cell_ru[static_cast<std::size_t>(c) * nw + i] +=
                    w * (dot(dudt, val[i]) - dot(umv, ugradi) - pv * dv[i] - dot(fv, val[i]));
            }
            for (int k = 0; k < nq_; ++k)
                cell_rq[static_cast<std::size_t>(c) * nq_ + k] +=
                    w * qtab.value(q, k) * (divug + lambda);
            cell_rl[c] += w * pv;

            if (with_jacobian) {
                for (int i = 0; i < nw; ++i) {
                    Vec2 ugradi{grd[i].a[0][0] * umv.x + grd[i].a[0][1] * umv.y,
                                grd[i].a[1][0] * umv.x + grd[i].a[1][1] * umv.y};
                    for (int j = 0; j < nw; ++j) {
                        Vec2 jgradi{grd[i].a[0][0] * val[j].x + grd[i].a[0][1] * val[j].y,
                                    grd[i].a[1][0] * val[j].x + grd[i].a[1][1] * val[j].y};
                        juu(i, j) += w * (dot(val[j], val[i]) / dt -
                                          0.5 * (dot(umv, jgradi) + dot(val[j], ugradi)));
                    }
                    for (int k = 0; k < nq_; ++k) jup(i, k) -= w * qtab.value(q, k) * dv[i];
                }
                for (int k = 0; k < nq_; ++k) {
                    for (int j = 0; j < nw; ++j) jpu(k, j) += w * qtab.value(q, k) * dv[j];
                    jpl(k) += w * qtab.value(q, k);
                }
            }
        }

        if (with_jacobian) {
            std::size_t base = static_cast<std::size_t>(c) * cell_stride;
            for (int i = 0; i < nw; ++i)
                for (int j = 0; j < nw; ++j)
                    trips[base + static_cast<std::size_t>(i) * nw + j] =
                        {velocity.dof(c, i), velocity.dof(c, j),
                         velocity.sign(c, i) * velocity.sign(c, j) * juu(i, j)};
            base += static_cast<std::size_t>(nw) * nw;
            for (int i = 0; i < nw; ++i)
                for (int k = 0; k < nq_; ++k)
                    trips[base + static_cast<std::size_t>(i) * nq_ + k] =
                        {velocity.dof(c, i), row_p0 + pressure.dof(c, k),
                         velocity.sign(c, i) * jup(i, k)};
            base += static_cast<std::size_t>(nw) * nq_;
            for (int k = 0; k < nq_; ++k)
                for (int j = 0; j < nw; ++j)
                    trips[base + static_cast<std::size_t>(k) * nw + j] =
                        {row_p0 + pressure.dof(c, k), velocity.dof(c, j),
                         velocity.sign(c, j) * jpu(k, j)};
            base += static_cast<std::size_t>(nq_) * nw;
            for (int k = 0; k < nq_; ++k)
                trips[base + k] = {row_p0 + pressure.dof(c, k), row_l, jpl(k)};
            base += nq_;
            for (int k = 0; k < nq_; ++k)
                trips[base + k] = {row_l, row_p0 + pressure.dof(c, k), jpl(k)};
        }
    }

#pragma omp parallel for schedule(static) if (par)
    for (int f = 0; f < nfacets; ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.interior) continue;
        const int cells[2] = {fc.plus_cell, fc.minus_cell};
        const int les[2] = {fc.plus_local, fc.minus_local};
        const double sgn[2] = {1.0, -1.0};
        CellGeometry gg[2] = {cell_geometry(mesh, cells[0]), cell_geometry(mesh, cells[1])};
        Eigen::VectorXd uml[2] = {Eigen::VectorXd(), Eigen::VectorXd()};
        for (int sd = 0; sd < 2; ++sd) {
            Eigen::VectorXd unl = gather_cell(u_n, cells[sd]);
            Eigen::VectorXd ugl = gather_cell(u_g, cells[sd]);
            uml[sd] = 0.5 * (unl + ugl);
        }

        Eigen::MatrixXd jblk[2][2];
        if (with_jacobian)
            for (int sb = 0; sb < 2; ++sb)
                for (int sa = 0; sa < 2; ++sa) jblk[sb][sa] = Eigen::MatrixXd::Zero(nw, nw);

        std::vector<Vec2> tval[2];
        tval[0].resize(nw);
        tval[1].resize(nw);
        for (int q = 0; q < neq; ++q) {
            double w = erule.weights[q] * fc.length;
            Vec2 umv[2];
            for (int sd = 0; sd < 2; ++sd) {
                const auto& tab = wtr.tab[les[sd]][sd];
                // Sum on the reference cell, then push forward: the same
                // evaluation order as facet_traces, so the upwind sign seen
                // here agrees bitwise with the standalone forms.
                Vec2 acc{0, 0};
                for (int j = 0; j < nw; ++j) {
                    tval[sd][j] = piola_value(gg[sd], tab.value(q, j));
                    acc += uml[sd](j) * tab.value(q, j);
                }
                umv[sd] = piola_value(gg[sd], acc);
            }
            const Vec2& n = fc.normal;
            double un = 0.5 * (dot(umv[0], n) + dot(umv[1], n));
            Vec2 avg_um = 0.5 * (umv[0] + umv[1]);
            Vec2 jump_um = umv[0] - umv[1];
            double cf = mode == FluxMode::Upwind ? upwind_cf(un) : 0.0;
            double cnj_um = cross(n, jump_um);

            for (int sb = 0; sb < 2; ++sb) {
                for (int i = 0; i < nw; ++i) {
                    double term = un * dot(avg_um, tval[sb][i]) * sgn[sb];
                    if (cf != 0.0)
                        term += cf * cnj_um * sgn[sb] * cross(umv[sb], tval[sb][i]);
                    facet_ru[(static_cast<std::size_t>(f) * 2 + sb) * nw + i] += w * term;
                }
            }

            if (with_jacobian) {
                for (int sb = 0; sb < 2; ++sb) {
                    for (int sa = 0; sa < 2; ++sa) {
                        auto& blk = jblk[sb][sa];
                        for (int i = 0; i < nw; ++i) {
                            Vec2 vi = tval[sb][i];
                            double avg_um_jump_i = dot(avg_um, vi) * sgn[sb];  // {u_m}.[Phi_i]
                            double umcross = cross(umv[sb], vi) * sgn[sb];
                            for (int j = 0; j < nw; ++j) {
                                Vec2 vj = tval[sa][j];
                                // A: ({Phi_j.n} {u_m}, [Phi_i]) ; B: (u.n {Phi_j}, [Phi_i])
                                double t = 0.5 * dot(vj, n) * avg_um_jump_i +
                                           un * 0.5 * dot(vj, vi) * sgn[sb];
                                if (cf != 0.0) {
                                    if (sa == sb)
                                        t += cf * cnj_um * sgn[sa] * cross(vj, vi);
                                    t += cf * sgn[sa] * cross(n, vj) * umcross;
                                }
                                blk(i, j) += 0.5 * w * t;
                            }
                        }
                    }
                }
            }
        }

        if (with_jacobian) {
            std::size_t base = static_cast<std::size_t>(ncells) * cell_stride +
                               static_cast<std::size_t>(f) * facet_stride;
            for (int sb = 0; sb < 2; ++sb)
                for (int sa = 0; sa < 2; ++sa) {
                    for (int i = 0; i < nw; ++i)
                        for (int j = 0; j < nw; ++j)
                            trips[base + static_cast<std::size_t>(i) * nw + j] = {
                                velocity.dof(cells[sb], i), velocity.dof(cells[sa], j),
                                velocity.sign(cells[sb], i) * velocity.sign(cells[sa], j) *
                                    jblk[sb][sa](i, j)};
                    base += static_cast<std::size_t>(nw) * nw;
                }
        }
    }

    // Fixed-order scatter of the residual buffers.
    Eigen::VectorXd r = Eigen::VectorXd::Zero(ndim);
    for (int c = 0; c < ncells; ++c) {
        for (int i = 0; i < nw; ++i)
            r(velocity.dof(c, i)) +=
                velocity.sign(c, i) * cell_ru[static_cast<std::size_t>(c) * nw + i];
        for (int k = 0; k < nq_; ++k)
            r(row_p0 + pressure.dof(c, k)) += cell_rq[static_cast<std::size_t>(c) * nq_ + k];
        r(row_l) += cell_rl[c];
    }
    for (int f = 0; f < nfacets; ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.interior) continue;
        const int cells[2] = {fc.plus_cell, fc.minus_cell};
        for (int sd = 0; sd < 2; ++sd)
            for (int i = 0; i < nw; ++i)
                r(velocity.dof(cells[sd], i)) +=
                    velocity.sign(cells[sd], i) *
                    facet_ru[(static_cast<std::size_t>(f) * 2 + sd) * nw + i];
    }

    // Slip condition: identity rows on boundary normal moments.
    auto bdofs = boundary_dofs(velocity);
    if (!bdofs.empty()) {
        std::vector<char> fixed(nu, 0);
        for (int d : bdofs) fixed[d] = 1;
        for (int d : bdofs) r(d) = u_g.coeffs(d);
        if (with_jacobian) {
            for (auto& t : trips)
                if (t.row() < nu && fixed[t.row()])
                    t = Eigen::Triplet<double>(t.row(), t.col(), 0.0);
            for (int d : bdofs) trips.emplace_back(d, d, 1.0);
        }
    }

    AssembledResidual out;
    out.residual = std::move(r);
    if (with_jacobian) {
        SparseMat j(ndim, ndim);
        j.setFromTriplets(trips.begin(), trips.end());
        j.makeCompressed();
        out.jacobian = std::move(j);
        out.has_jacobian = true;
    }
    return out;
}

}  // namespace eulerfem
