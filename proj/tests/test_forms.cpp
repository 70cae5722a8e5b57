#include <cmath>
#include <random>

#include "doctest.h"
#include "eulerfem/diagnostics.hpp"
#include "eulerfem/forms.hpp"
#include "eulerfem/spaces.hpp"
#include "support/oracles.hpp"

using namespace eulerfem;

namespace {

struct BackendGuard {
    AssemblyBackend saved = assembly_backend();
    ~BackendGuard() { set_assembly_backend(saved); }
};

Field tangent_field(const Mesh& mesh, const FunctionSpace& w, unsigned seed) {
    FunctionSpace cg = build_space(mesh, Family::CG, w.order + 1);
    return div_free_from_stream(seeded_stream(cg, seed), w);
}

}  // namespace

TEST_CASE("scalar advection matrix matches the hand-computed two-cell facet oracle") {
    Mesh mesh = oracles::two_cell_square();
    FunctionSpace rt0 = build_space(mesh, Family::RT, 0);
    FunctionSpace dg0 = build_space(mesh, Family::DG, 0);
    Field beta = interpolate(rt0, [](const Vec2&) { return Vec2{1.0, 0.0}; });

    int fid = -1;
    for (int f = 0; f < mesh.num_facets(); ++f)
        if (mesh.facets[f].interior) fid = f;
    REQUIRE(fid >= 0);
    const Facet& fc = mesh.facets[fid];
    const int P = fc.plus_cell, M = fc.minus_cell;
    const double bn = fc.normal.x;  // beta . n for beta = (1, 0)
    const double len = fc.length;

    // P0 dofs are cell-contiguous, so global dof of cell c is c. With
    // (X a, b) = b^T A a, only the interior facet contributes:
    //   A[i][j] = len * bn * ({e_j}[e_i] + c_f [e_j][e_i]).
    auto jump = [&](int c) { return c == P ? 1.0 : -1.0; };
    for (FluxMode mode : {FluxMode::Centred, FluxMode::Upwind}) {
        double cf = mode == FluxMode::Upwind ? (bn > 0 ? 0.5 : -0.5) : 0.0;
        Eigen::MatrixXd expected(2, 2);
        for (int i : {P, M})
            for (int j : {P, M})
                expected(i, j) = len * bn * (0.5 * jump(i) + cf * jump(j) * jump(i));
        Eigen::MatrixXd got(scalar_advection_matrix(beta, dg0, mode));
        CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("scalar advection matrix matches the single-cell volume oracle") {
    Mesh mesh = build_raw_mesh({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {{{0, 1, 2}}});
    FunctionSpace rt0 = build_space(mesh, Family::RT, 0);
    FunctionSpace dg1 = build_space(mesh, Family::DG, 1);
    Field beta = interpolate(rt0, [](const Vec2&) { return Vec2{1.0, 0.0}; });

    // No interior facets: A[i][j] = -(phi_j, d/dx phi_i). On the reference
    // cell the P1 nodal shapes are barycentric, so d/dx is -1, 1, or 0 by
    // node location, and every integral of phi_j is 1/6.
    auto dx_shape = [&](int i) {
        Vec2 node = dg1.scalar_element->nodes()[i].point;
        if (node.x == 0.0 && node.y == 0.0) return -1.0;
        return node.x == 1.0 ? 1.0 : 0.0;
    };
    Eigen::MatrixXd got(scalar_advection_matrix(beta, dg1, FluxMode::Centred));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(got(i, j) + dx_shape(i) / 6.0) < 1e-14);
}

TEST_CASE("scalar advection invariants on seeded divergence-free fields") {
    Mesh mesh = build_structured_mesh(4, false);
    FunctionSpace w = build_space(mesh, Family::RT, 1);
    FunctionSpace dg = build_space(mesh, Family::DG, 1);

    for (unsigned seed : {1u, 2u, 3u}) {
        Field beta = tangent_field(mesh, w, seed);
        SparseMat a_c = scalar_advection_matrix(beta, dg, FluxMode::Centred);
        SparseMat a_u = scalar_advection_matrix(beta, dg, FluxMode::Upwind);

        // Centred antisymmetry.
        CHECK(oracles::max_abs(SparseMat(a_c + SparseMat(a_c.transpose()))) < 1e-12);

        // Constants are annihilated (advection) and conserved (adjoint).
        Field one = interpolate(dg, [](const Vec2&) { return 1.0; });
        Eigen::VectorXd ones = one.coeffs;
        for (const SparseMat* a : {&a_c, &a_u}) {
            CHECK(((*a) * ones).cwiseAbs().maxCoeff() < 1e-13);
            CHECK((a->transpose() * ones).cwiseAbs().maxCoeff() < 1e-13);
        }

        // Upwind dissipativity for arbitrary scalars.
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (int trial = 0; trial < 5; ++trial) {
            Eigen::VectorXd a(dg.dim);
            for (int i = 0; i < dg.dim; ++i) a(i) = dist(rng);
            CHECK(a.dot(a_u * a) >= -1e-13);
        }
    }
}

TEST_CASE("scalar advection rejects invalid inputs") {
    Mesh mesh = build_structured_mesh(3, false);
    FunctionSpace w = build_space(mesh, Family::RT, 1);
    FunctionSpace dg = build_space(mesh, Family::DG, 1);
    Field not_div_free = interpolate(w, [](const Vec2& p) { return Vec2{p.x, 0.0}; });
    CHECK_THROWS_AS(scalar_advection_matrix(not_div_free, dg, FluxMode::Centred),
                    InvalidArgument);

    Field ok = tangent_field(mesh, w, 9);
    CHECK_THROWS_AS(scalar_advection_matrix(ok, w, FluxMode::Centred), InvalidArgument);

    Mesh other = build_structured_mesh(4, false);
    FunctionSpace dg_other = build_space(other, Family::DG, 1);
    CHECK_THROWS_AS(scalar_advection_matrix(ok, dg_other, FluxMode::Centred), InvalidArgument);
}

TEST_CASE("momentum trilinear forms satisfy the scheme's structural identities") {
    for (bool periodic : {false, true}) {
        Mesh mesh = build_structured_mesh(4, periodic);
        for (auto [family, s] :
             std::vector<std::pair<Family, int>>{{Family::RT, 1}, {Family::BDM, 2}}) {
            FunctionSpace w = build_space(mesh, family, s);
            Field u = tangent_field(mesh, w, 21);
            Field a = tangent_field(mesh, w, 22);
            Field v = tangent_field(mesh, w, 23);
            double scale = std::max(1.0, kinetic_energy(u));

            for (FluxMode mode : {FluxMode::Centred, FluxMode::Upwind}) {
                // Flux form and rotational form agree when the advected slot
                // carries the transporting velocity (a = u) and the test
                // field is pointwise divergence-free; for independent a the
                // forms differ by a gradient absorbed into the pressure.
                double t_gss = momentum_trilinear_gss(u, u, v, mode);
                double t_rot = momentum_trilinear_rotational(u, u, v, mode);
                CHECK(std::abs(t_gss - t_rot) <
                      1e-11 * std::max({1.0, std::abs(t_gss), std::abs(t_rot)}));

                // Self-advection produces no energy in either mode.
                CHECK(std::abs(momentum_trilinear_gss(u, u, u, mode)) < 1e-12 * scale);
            }

            // Centred flux form is antisymmetric in the advected/test slots.
            double fwd = momentum_trilinear_gss(u, a, v, FluxMode::Centred);
            double rev = momentum_trilinear_gss(u, v, a, FluxMode::Centred);
            CHECK(std::abs(fwd + rev) < 1e-11 * std::max(1.0, std::abs(fwd)));
        }
    }
}

TEST_CASE("velocity-pressure pairing guard") {
    Mesh mesh = build_structured_mesh(3, false);
    FunctionSpace rt1 = build_space(mesh, Family::RT, 1);
    FunctionSpace bdm2 = build_space(mesh, Family::BDM, 2);
    FunctionSpace dg0 = build_space(mesh, Family::DG, 0);
    FunctionSpace dg1 = build_space(mesh, Family::DG, 1);
    CHECK_NOTHROW(check_velocity_pressure_pairing(rt1, dg1));
    CHECK_NOTHROW(check_velocity_pressure_pairing(bdm2, dg1));
    CHECK_THROWS_AS(check_velocity_pressure_pairing(rt1, dg0), InvalidArgument);
    CHECK_THROWS_AS(check_velocity_pressure_pairing(bdm2, dg0), InvalidArgument);
    CHECK_THROWS_AS(check_velocity_pressure_pairing(dg1, dg1), InvalidArgument);
}

TEST_CASE("divergence matrix ties velocity divergence to pressure moments") {
    // Interpolating a non-periodic polynomial only makes sense on the
    // non-periodic mesh; there BDM_1 reproduces it exactly and div lin = -1.
    Mesh plain = build_structured_mesh(4, false);
    FunctionSpace wp = build_space(plain, Family::BDM, 1);
    FunctionSpace qp = build_space(plain, Family::DG, 0);
    Field lin = interpolate(wp, [](const Vec2& p) { return Vec2{p.x, -2.0 * p.y}; });
    Eigen::VectorXd moments = divergence_matrix(wp, qp) * lin.coeffs;
    Eigen::VectorXd expected = mass_matrix(qp) * Eigen::VectorXd::Constant(qp.dim, -1.0);
    CHECK((moments - expected).cwiseAbs().maxCoeff() < 1e-12);

    // On the torus every facet dof appears once with each orientation, so the
    // total divergence of any coefficient vector vanishes.
    Mesh mesh = build_structured_mesh(4, true);
    FunctionSpace w = build_space(mesh, Family::BDM, 1);
    FunctionSpace q = build_space(mesh, Family::DG, 0);
    SparseMat d = divergence_matrix(w, q);
    Eigen::VectorXd any = Eigen::VectorXd::LinSpaced(w.dim, -1.0, 2.0);
    CHECK(std::abs(mean_vector(q).sum() - 4.0 * 3.14159265358979323846 * 3.14159265358979323846) <
          1e-10);
    CHECK(std::abs(mean_vector(q).dot(d * any)) < 1e-10);
}

TEST_CASE("step residual vanishes at the trivial state and sees forcing linearly") {
    Mesh mesh = build_structured_mesh(3, true);
    FunctionSpace w = build_space(mesh, Family::RT, 1);
    FunctionSpace q = build_space(mesh, Family::DG, 1);
    Field zero = zero_field(w);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(w.dim + q.dim + 1);
    auto r0 = assemble_step_residual(zero, x, w, q, 0.1, 0.05, FluxMode::Centred, {}, false);
    CHECK(r0.residual.cwiseAbs().maxCoeff() < 1e-15);
    CHECK_FALSE(r0.has_jacobian);

    // Forcing enters as -(f, v) on the velocity rows only: assembling with
    // and without an in-space forcing at the same state differs by -M fhat.
    Field u = tangent_field(mesh, w, 4);
    Eigen::VectorXd xs = Eigen::VectorXd::Zero(w.dim + q.dim + 1);
    xs.head(w.dim) = 0.9 * u.coeffs;
    Forcing forcing = [](const Vec2&, double) { return Vec2{0.3, 0.7}; };
    Field fhat = interpolate(w, [](const Vec2&) { return Vec2{0.3, 0.7}; });
    auto with = assemble_step_residual(u, xs, w, q, 0.1, 0.05, FluxMode::Upwind, forcing, false);
    auto without = assemble_step_residual(u, xs, w, q, 0.1, 0.05, FluxMode::Upwind, {}, false);
    Eigen::VectorXd diff = with.residual - without.residual;
    CHECK((diff.head(w.dim) + mass_matrix(w) * fhat.coeffs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(diff.tail(q.dim + 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("step Jacobian matches central finite differences") {
    struct Setup {
        bool periodic;
        Family family;
        int s;
        FluxMode mode;
    };
    for (const auto& setup : std::vector<Setup>{{false, Family::RT, 1, FluxMode::Centred},
                                                {false, Family::RT, 1, FluxMode::Upwind},
                                                {true, Family::BDM, 1, FluxMode::Upwind}}) {
        Mesh mesh = build_structured_mesh(3, setup.periodic);
        FunctionSpace w = build_space(mesh, setup.family, setup.s);
        FunctionSpace q = build_space(mesh, Family::DG,
                                      setup.family == Family::RT ? setup.s : setup.s - 1);
        Field u = tangent_field(mesh, w, 17);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(w.dim + q.dim + 1);
        x.head(w.dim) = 1.1 * u.coeffs;
        for (int k = 0; k < q.dim; ++k) x(w.dim + k) = 0.01 * std::sin(1.0 + k);
        x(w.dim + q.dim) = 0.02;

        const double dt = 0.05, t_mid = 0.0;
        auto residual_at = [&](const Eigen::VectorXd& xx) {
            return assemble_step_residual(u, xx, w, q, dt, t_mid, setup.mode, {}, false).residual;
        };
        auto sys = assemble_step_residual(u, x, w, q, dt, t_mid, setup.mode, {}, true);
        REQUIRE(sys.has_jacobian);
        Eigen::MatrixXd fd = oracles::fd_jacobian(residual_at, x, 1e-6);
        double scale = std::max(1.0, Eigen::MatrixXd(sys.jacobian).cwiseAbs().maxCoeff());
        CHECK((Eigen::MatrixXd(sys.jacobian) - fd).cwiseAbs().maxCoeff() < 1e-6 * scale);
    }
}

TEST_CASE("slip boundary rows pin the normal trace") {
    Mesh mesh = build_structured_mesh(3, false);
    FunctionSpace w = build_space(mesh, Family::RT, 1);
    FunctionSpace q = build_space(mesh, Family::DG, 1);
    Field u = tangent_field(mesh, w, 5);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(w.dim + q.dim + 1);
    x.head(w.dim) = u.coeffs;
    auto bdofs = boundary_dofs(w);
    REQUIRE_FALSE(bdofs.empty());
    const int d = bdofs[bdofs.size() / 2];
    x(d) = 0.7;
    auto sys = assemble_step_residual(u, x, w, q, 0.1, 0.0, FluxMode::Centred, {}, true);
    CHECK(sys.residual(d) == 0.7);
    // The Jacobian row is the identity row e_d.
    Eigen::VectorXd row = Eigen::MatrixXd(sys.jacobian).row(d).transpose();
    CHECK(row(d) == 1.0);
    row(d) = 0.0;
    CHECK(row.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("serial and parallel assembly agree bitwise") {
    BackendGuard guard;
    Mesh mesh = build_structured_mesh(6, true);
    FunctionSpace w = build_space(mesh, Family::BDM, 2);
    FunctionSpace q = build_space(mesh, Family::DG, 1);
    FunctionSpace dg = build_space(mesh, Family::DG, 2);
    Field u = tangent_field(mesh, w, 8);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(w.dim + q.dim + 1);
    x.head(w.dim) = 1.05 * u.coeffs;

    set_assembly_backend(AssemblyBackend::Serial);
    auto sys_s = assemble_step_residual(u, x, w, q, 0.02, 0.01, FluxMode::Upwind, {}, true);
    SparseMat adv_s = scalar_advection_matrix(u, dg, FluxMode::Upwind);
    set_assembly_backend(AssemblyBackend::Parallel);
    auto sys_p = assemble_step_residual(u, x, w, q, 0.02, 0.01, FluxMode::Upwind, {}, true);
    SparseMat adv_p = scalar_advection_matrix(u, dg, FluxMode::Upwind);

    CHECK((sys_s.residual - sys_p.residual).cwiseAbs().maxCoeff() == 0.0);
    CHECK(oracles::max_abs(SparseMat(sys_s.jacobian - sys_p.jacobian)) == 0.0);
    CHECK(oracles::max_abs(SparseMat(adv_s - adv_p)) == 0.0);
}
