#pragma once

// Quadrature rules: symmetric-enough triangle rules (collapsed-coordinate
// tensor Gauss) and Gauss-Legendre edge rules, exact to a requested
// polynomial degree. Cell rules integrate over the reference triangle
// (0,0)-(1,0)-(0,1); edge rules over [0,1].

#include <vector>

#include "eulerfem/core.hpp"

namespace eulerfem {

struct QuadratureRule {
    std::vector<Vec2> points;     // reference coordinates; edge rules use x, y = 0
    std::vector<double> weights;  // sum to 1/2 (cell) or 1 (edge)
};

inline constexpr int kMaxQuadDegree = 12;

// Exact for all bivariate monomials of total degree <= degree on the
// reference triangle. degree outside [0, 12] is an error.
QuadratureRule triangle_rule(int degree);

// Gauss-Legendre on [0,1], exact for 1D monomials of degree <= degree.
QuadratureRule edge_rule(int degree);

}  // namespace eulerfem
