#include <cmath>
#include <random>

#include "doctest.h"
#include "eulerfem/elements.hpp"
#include "support/oracles.hpp"

using namespace eulerfem;

namespace {

std::vector<Vec2> random_interior_points(int count, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    std::vector<Vec2> pts;
    while (static_cast<int>(pts.size()) < count) {
        double x = dist(rng), y = dist(rng);
        if (x + y < 0.95) pts.push_back({x, y});
    }
    return pts;
}

}  // namespace

TEST_CASE("shifted Legendre polynomials are orthogonal on [0,1]") {
    for (int j = 0; j <= 4; ++j)
        for (int k = 0; k <= 4; ++k) {
            double val = oracles::composite_gauss(
                [&](double t) { return legendre_shifted(j, t) * legendre_shifted(k, t); }, 0.0,
                1.0, 64);
            double exact = j == k ? 1.0 / (2 * k + 1) : 0.0;
            CHECK(std::abs(val - exact) < 1e-12);
        }
}

TEST_CASE("scalar elements are nodal and reproduce polynomials") {
    for (int r = 0; r <= 3; ++r) {
        ScalarElement elem(r);
        CHECK(elem.ndofs() == (r + 1) * (r + 2) / 2);
        CHECK(static_cast<int>(lattice_points(r).size()) == elem.ndofs());

        std::vector<Vec2> node_points;
        for (const auto& node : elem.nodes()) node_points.push_back(node.point);
        auto tab = elem.tabulate(node_points);
        for (int i = 0; i < elem.ndofs(); ++i)
            for (int j = 0; j < elem.ndofs(); ++j)
                CHECK(std::abs(tab.value(i, j) - (i == j ? 1.0 : 0.0)) < 1e-11);

        // Partition of unity and an exactly representable polynomial.
        auto pts = random_interior_points(6, 100 + r);
        auto t2 = elem.tabulate(pts);
        auto poly = [r](const Vec2& p) {
            return r == 0 ? 2.5 : 1.0 + 2.0 * p.x - 3.0 * p.y + (r >= 2 ? p.x * p.y : 0.0);
        };
        for (std::size_t q = 0; q < pts.size(); ++q) {
            double unity = 0.0, val = 0.0;
            Vec2 grad{0.0, 0.0};
            for (int j = 0; j < elem.ndofs(); ++j) {
                unity += t2.value(q, j);
                val += poly(elem.nodes()[j].point) * t2.value(q, j);
                grad += poly(elem.nodes()[j].point) * t2.gradient(q, j);
            }
            CHECK(std::abs(unity - 1.0) < 1e-12);
            CHECK(std::abs(val - poly(pts[q])) < 1e-12);
            if (r >= 1) {
                Vec2 exact_grad{2.0 + (r >= 2 ? pts[q].y : 0.0),
                                -3.0 + (r >= 2 ? pts[q].x : 0.0)};
                CHECK(norm(grad - exact_grad) < 1e-11);
            }
        }
    }
}

TEST_CASE("scalar gradients agree with finite differences") {
    ScalarElement elem(3);
    auto pts = random_interior_points(4, 7);
    auto tab = elem.tabulate(pts);
    const double eps = 1e-6;
    for (std::size_t q = 0; q < pts.size(); ++q) {
        auto xp = elem.tabulate({{pts[q].x + eps, pts[q].y}});
        auto xm = elem.tabulate({{pts[q].x - eps, pts[q].y}});
        auto yp = elem.tabulate({{pts[q].x, pts[q].y + eps}});
        auto ym = elem.tabulate({{pts[q].x, pts[q].y - eps}});
        for (int j = 0; j < elem.ndofs(); ++j) {
            CHECK(std::abs(tab.gradient(q, j).x - (xp.value(0, j) - xm.value(0, j)) / (2 * eps)) <
                  1e-8);
            CHECK(std::abs(tab.gradient(q, j).y - (yp.value(0, j) - ym.value(0, j)) / (2 * eps)) <
                  1e-8);
        }
    }
}

TEST_CASE("vector elements are nodal with the documented dimensions") {
    struct Case {
        Family family;
        int order;
        int ndofs;
    };
    for (const auto& c : std::vector<Case>{{Family::RT, 0, 3},
                                           {Family::RT, 1, 8},
                                           {Family::RT, 2, 15},
                                           {Family::BDM, 1, 6},
                                           {Family::BDM, 2, 12}}) {
        VectorElement elem(c.family, c.order);
        CHECK(elem.ndofs() == c.ndofs);
        CHECK(elem.facet_moments() == c.order + 1);
        CHECK(elem.interior_dofs() == c.ndofs - 3 * (c.order + 1));

        for (int j = 0; j < elem.ndofs(); ++j) {
            Eigen::VectorXd dofs = elem.apply_dofs(
                [&](const Vec2& p) { return elem.tabulate({p}).value(0, j); });
            for (int i = 0; i < elem.ndofs(); ++i)
                CHECK(std::abs(dofs(i) - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
    }
}

TEST_CASE("vector shape divergences agree with finite differences") {
    for (auto [family, order] : std::vector<std::pair<Family, int>>{
             {Family::RT, 1}, {Family::RT, 2}, {Family::BDM, 2}}) {
        VectorElement elem(family, order);
        auto pts = random_interior_points(3, 11 + order);
        auto tab = elem.tabulate(pts);
        const double eps = 1e-6;
        for (std::size_t q = 0; q < pts.size(); ++q) {
            auto xp = elem.tabulate({{pts[q].x + eps, pts[q].y}});
            auto xm = elem.tabulate({{pts[q].x - eps, pts[q].y}});
            auto yp = elem.tabulate({{pts[q].x, pts[q].y + eps}});
            auto ym = elem.tabulate({{pts[q].x, pts[q].y - eps}});
            for (int j = 0; j < elem.ndofs(); ++j) {
                double fd = (xp.value(0, j).x - xm.value(0, j).x) / (2 * eps) +
                            (yp.value(0, j).y - ym.value(0, j).y) / (2 * eps);
                CHECK(std::abs(tab.divergence(q, j) - fd) < 1e-7);
                Mat2 g = tab.gradient(q, j);
                CHECK(std::abs(g.a[0][0] + g.a[1][1] - tab.divergence(q, j)) < 1e-12);
                CHECK(std::abs(g.a[0][1] - (yp.value(0, j).x - ym.value(0, j).x) / (2 * eps)) <
                      1e-7);
                CHECK(std::abs(g.a[1][0] - (xp.value(0, j).y - xm.value(0, j).y) / (2 * eps)) <
                      1e-7);
            }
        }
    }
}

TEST_CASE("Piola maps push values, divergences, and gradients consistently") {
    CellGeometry g = CellGeometry::make({0.2, 0.1}, {0.8, 0.15}, {0.25, 0.9});
    auto vhat = [](const Vec2& p) { return Vec2{p.x * p.x + p.y, p.x * p.y - 0.5}; };
    auto vhat_div = [](const Vec2& p) { return 2.0 * p.x + p.x; };
    auto to_ref = [&](const Vec2& x) {
        double det = cross(g.j0, g.j1);
        Vec2 d = x - g.origin;
        return Vec2{(g.j1.y * d.x - g.j1.x * d.y) / det, (-g.j0.y * d.x + g.j0.x * d.y) / det};
    };
    auto v_phys = [&](const Vec2& x) { return piola_value(g, vhat(to_ref(x))); };

    Vec2 ref{0.3, 0.25};
    Vec2 x = g.origin + ref.x * g.j0 + ref.y * g.j1;
    CHECK(norm(to_ref(x) - ref) < 1e-13);

    const double eps = 1e-6;
    double fd_div = (v_phys({x.x + eps, x.y}).x - v_phys({x.x - eps, x.y}).x) / (2 * eps) +
                    (v_phys({x.x, x.y + eps}).y - v_phys({x.x, x.y - eps}).y) / (2 * eps);
    CHECK(std::abs(piola_divergence(g, vhat_div(ref)) - fd_div) < 1e-7);

    Mat2 gradhat;
    gradhat.a[0][0] = 2.0 * ref.x;
    gradhat.a[0][1] = 1.0;
    gradhat.a[1][0] = ref.y;
    gradhat.a[1][1] = ref.x;
    Mat2 grad = piola_gradient(g, gradhat);
    double fd00 = (v_phys({x.x + eps, x.y}).x - v_phys({x.x - eps, x.y}).x) / (2 * eps);
    double fd01 = (v_phys({x.x, x.y + eps}).x - v_phys({x.x, x.y - eps}).x) / (2 * eps);
    double fd10 = (v_phys({x.x + eps, x.y}).y - v_phys({x.x - eps, x.y}).y) / (2 * eps);
    double fd11 = (v_phys({x.x, x.y + eps}).y - v_phys({x.x, x.y - eps}).y) / (2 * eps);
    CHECK(std::abs(grad.a[0][0] - fd00) < 1e-7);
    CHECK(std::abs(grad.a[0][1] - fd01) < 1e-7);
    CHECK(std::abs(grad.a[1][0] - fd10) < 1e-7);
    CHECK(std::abs(grad.a[1][1] - fd11) < 1e-7);

    // Scalar push-forward: f(x) = fhat(ref(x)), grad f = J^{-T} gradhat.
    auto fhat = [](const Vec2& p) { return p.x * p.x - 2.0 * p.y; };
    auto f_phys = [&](const Vec2& xx) { return fhat(to_ref(xx)); };
    Vec2 sg = scalar_gradient(g, {2.0 * ref.x, -2.0});
    CHECK(std::abs(sg.x - (f_phys({x.x + eps, x.y}) - f_phys({x.x - eps, x.y})) / (2 * eps)) <
          1e-7);
    CHECK(std::abs(sg.y - (f_phys({x.x, x.y + eps}) - f_phys({x.x, x.y - eps})) / (2 * eps)) <
          1e-7);
}

TEST_CASE("vector element normal traces are single moments on each edge") {
    // RT_0 shapes have constant normal component 1 on their own edge and 0
    // on the others (with the reference edge lengths absorbed in the dofs).
    VectorElement rt0(Family::RT, 0);
    for (int le = 0; le < 3; ++le) {
        Vec2 a = kReferenceVertices[kLocalEdgeVertices[le][0]];
        Vec2 b = kReferenceVertices[kLocalEdgeVertices[le][1]];
        Vec2 n = perp_cw(b - a);  // scaled outward normal, |n| = edge length
        for (double t : {0.2, 0.5, 0.9}) {
            Vec2 p = a + t * (b - a);
            auto tab = rt0.tabulate({p});
            for (int j = 0; j < 3; ++j) {
                double flux = dot(tab.value(0, j), n);  // length-weighted
                CHECK(std::abs(flux - (j == le ? 1.0 : 0.0)) < 1e-12);
            }
        }
    }
}
