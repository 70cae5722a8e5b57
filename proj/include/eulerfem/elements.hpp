#pragma once

// Reference-element bases and push-forward maps: RT_s / BDM_s vector
// elements (H(div)-conforming), DG P_r scalar elements, CG P_k scalar
// elements (the latter only to manufacture divergence-free fields).
// All bases are nodal with respect to their dof functionals.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "eulerfem/core.hpp"
#include "eulerfem/quadrature.hpp"

namespace eulerfem {

enum class Family { RT, BDM, DG, CG };

// Reference triangle corners; local edge le runs (le+1)%3 -> (le+2)%3 (the
// same convention as the mesh connectivity tables).
inline const std::array<Vec2, 3> kReferenceVertices = {
    {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}};

struct Mat2 {
    // Row p, column q holds d v_p / d x_q.
    double a[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
};

// Shifted Legendre polynomial P_k(2t - 1) on [0, 1]; the facet moment
// weights. Orthogonal family, so facet dofs are moment-diagonal.
double legendre_shifted(int k, double t);

// Affine cell geometry x = origin + J xhat with the two columns of J.
struct CellGeometry {
    Vec2 origin;
    Vec2 j0, j1;   // columns of J
    double det;    // cross(j0, j1) > 0

    static CellGeometry make(const Vec2& origin, const Vec2& j0, const Vec2& j1);
};

// Contravariant Piola map: v = J vhat / det J; preserves facet normal moments.
Vec2 piola_value(const CellGeometry& g, const Vec2& vhat);
double piola_divergence(const CellGeometry& g, double divhat);
Mat2 piola_gradient(const CellGeometry& g, const Mat2& gradhat);
// Scalar push-forward: value is the identity; gradient maps by J^{-T}.
Vec2 scalar_gradient(const CellGeometry& g, const Vec2& gradhat);

struct ScalarTabulation {
    int num_points = 0, num_shapes = 0;
    std::vector<double> values;  // [point * num_shapes + shape]
    std::vector<Vec2> gradients;
    double value(int q, int j) const { return values[q * num_shapes + j]; }
    const Vec2& gradient(int q, int j) const { return gradients[q * num_shapes + j]; }
};

struct VectorTabulation {
    int num_points = 0, num_shapes = 0;
    std::vector<Vec2> values;
    std::vector<Mat2> gradients;
    std::vector<double> divergences;
    const Vec2& value(int q, int j) const { return values[q * num_shapes + j]; }
    const Mat2& gradient(int q, int j) const { return gradients[q * num_shapes + j]; }
    double divergence(int q, int j) const { return divergences[q * num_shapes + j]; }
};

// Scalar Lagrange element of degree r on the reference triangle, nodal at
// the principal lattice (the centroid for r = 0). Serves DG (no coupling)
// and CG (lattice nodes classified by vertex/edge/interior below).
class ScalarElement {
  public:
    enum class NodeKind { Vertex, Edge, Interior };
    struct Node {
        Vec2 point;
        NodeKind kind;
        int entity;  // vertex id 0-2, local edge id 0-2, or interior ordinal
        int slot;    // position 0..r-2 along the local edge direction
    };

    explicit ScalarElement(int order);

    int order() const { return order_; }
    int ndofs() const { return ndofs_; }
    const std::vector<Node>& nodes() const { return nodes_; }

    ScalarTabulation tabulate(const std::vector<Vec2>& points) const;

  private:
    int order_;
    int ndofs_;
    std::vector<Node> nodes_;
    Eigen::MatrixXd coeff_;  // column j: monomial coefficients of shape j
};

// H(div) vector element. Local dofs: edges 0,1,2 with moments k = 0..s
// against shifted Legendre weights (in the cell's own traversal direction),
// then interior moments. RT_s spans (P_s)^2 + x H_s, BDM_s spans (P_s)^2.
class VectorElement {
  public:
    VectorElement(Family family, int order);

    Family family() const { return family_; }
    int order() const { return order_; }
    int ndofs() const { return ndofs_; }
    int facet_moments() const { return order_ + 1; }  // dofs per edge
    int interior_dofs() const { return ndofs_ - 3 * facet_moments(); }

    VectorTabulation tabulate(const std::vector<Vec2>& points) const;

    // All reference dof functionals applied to an arbitrary reference-cell
    // vector field (quadrature exact for the element's own shape degree).
    Eigen::VectorXd apply_dofs(const std::function<Vec2(const Vec2&)>& vhat) const;

  private:
    Family family_;
    int order_;
    int ndofs_;
    // Prime basis: component polynomials and divergences over a monomial
    // table; the nodal transform sits in coeff_.
    std::vector<std::vector<double>> prime_x_, prime_y_, prime_div_;
    std::vector<std::pair<int, int>> exps_;  // monomial exponents (degree <= s+1)
    Eigen::MatrixXd coeff_;
    // Per-dof functional as a list of (reference point, weight vector):
    // dof_i(v) = sum over the list of dot(v(point), weight).
    std::vector<std::vector<std::pair<Vec2, Vec2>>> dof_quadrature_;

    Eigen::VectorXd apply_dofs_poly(int prime_index) const;
};

// Principal lattice interior to no entity: reference coordinates of the
// degree-r lattice, for tests and DG interpolation.
std::vector<Vec2> lattice_points(int order);

}  // namespace eulerfem
