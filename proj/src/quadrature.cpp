#include "eulerfem/quadrature.hpp"

#include <cmath>

namespace eulerfem {

namespace {

// Legendre P_n(x) and derivative on [-1,1] by recurrence.
std::pair<double, double> legendre(int n, double x) {
    double p0 = 1.0, p1 = x;
    if (n == 0) return {1.0, 0.0};
    for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    double dp = n * (x * p1 - p0) / (x * x - 1.0);
    return {p1, dp};
}

// n-point Gauss-Legendre nodes/weights on [-1,1]; Newton from the Chebyshev
// initial guess converges to machine precision in a few steps.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            auto [p, dp] = legendre(n, x);
            double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        auto [p, dp] = legendre(n, x);
        (void)p;
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

}  // namespace

QuadratureRule edge_rule(int degree) {
    if (degree < 0 || degree > kMaxQuadDegree)
        throw InvalidArgument("edge_rule: degree out of supported range [0, 12]");
    int n = degree / 2 + 1;  // n points exact to degree 2n-1
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    QuadratureRule rule;
    rule.points.reserve(n);
    rule.weights.reserve(n);
    for (int i = 0; i < n; ++i) {
        rule.points.push_back({0.5 * (x[i] + 1.0), 0.0});
        rule.weights.push_back(0.5 * w[i]);
    }
    return rule;
}

QuadratureRule triangle_rule(int degree) {
    if (degree < 0 || degree > kMaxQuadDegree)
        throw InvalidArgument("triangle_rule: degree out of supported range [0, 12]");
    if (degree <= 1) {
        QuadratureRule rule;
        rule.points = {{1.0 / 3.0, 1.0 / 3.0}};
        rule.weights = {0.5};
        return rule;
    }
    // Collapsed coordinates: (xi, eta) in [0,1]^2 -> (xi (1 - eta), eta) with
    // Jacobian (1 - eta). The eta integrand gains one degree from the
    // Jacobian, so it gets the larger Gauss rule.
    int nxi = degree / 2 + 1;
    int neta = (degree + 1) / 2 + 1;
    std::vector<double> xg, xw, yg, yw;
    gauss_legendre(nxi, xg, xw);
    gauss_legendre(neta, yg, yw);
    QuadratureRule rule;
    rule.points.reserve(nxi * neta);
    rule.weights.reserve(nxi * neta);
    for (int j = 0; j < neta; ++j) {
        double eta = 0.5 * (yg[j] + 1.0);
        double weta = 0.5 * yw[j];
        for (int i = 0; i < nxi; ++i) {
            double xi = 0.5 * (xg[i] + 1.0);
            double wxi = 0.5 * xw[i];
            rule.points.push_back({xi * (1.0 - eta), eta});
            rule.weights.push_back(wxi * weta * (1.0 - eta));
        }
    }
    return rule;
}

}  // namespace eulerfem
