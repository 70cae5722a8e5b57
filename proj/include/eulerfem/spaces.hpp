#pragma once

// Global finite element spaces on a mesh: dof numbering, facet-orientation
// signs giving single-valued normal components for RT/BDM, interpolation,
// L2 projection, and construction of exactly divergence-free fields from
// stream functions.

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eulerfem/elements.hpp"
#include "eulerfem/mesh.hpp"

namespace eulerfem {

// Row-major so assembled operators iterate cache-friendly by row; solvers
// convert to column-major where a factorization requires it.
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Dof layout. Vector spaces: facet dofs first (facet f, moment k -> global
// f*(s+1)+k), then cell interiors. DG: cell-contiguous. CG: vertices, then
// facet interiors, then cell interiors. Members are public so tests can
// corrupt a copy (negative controls for the sign convention).
struct FunctionSpace {
    const Mesh* mesh = nullptr;
    Family family = Family::DG;
    int order = 0;
    std::shared_ptr<const VectorElement> vector_element;  // RT/BDM
    std::shared_ptr<const ScalarElement> scalar_element;  // DG/CG
    int dim = 0;
    int dofs_per_cell = 0;
    std::vector<int> cell_dofs;      // [cell * dofs_per_cell + local]
    std::vector<double> cell_signs;  // same layout; +/-1, all +1 for scalars

    bool is_vector() const { return family == Family::RT || family == Family::BDM; }
    int dof(int cell, int local) const { return cell_dofs[cell * dofs_per_cell + local]; }
    double sign(int cell, int local) const { return cell_signs[cell * dofs_per_cell + local]; }
};

struct Field {
    const FunctionSpace* space = nullptr;
    Eigen::VectorXd coeffs;
};

// family/order in scope: RT 0-2, BDM 1-2, DG 0-3, CG 1-3.
FunctionSpace build_space(const Mesh& mesh, Family family, int order);

Field zero_field(const FunctionSpace& space);

// Signed local coefficients of one cell (length dofs_per_cell).
Eigen::VectorXd gather_cell(const Field& field, int cell);

// Consistent mass matrix (exact quadrature for the element's degree).
Eigen::SparseMatrix<double, Eigen::RowMajor> mass_matrix(const FunctionSpace& space);

// L2 projection of an analytic function (quadrature boosted over the
// element degree; SPD mass solve).
Field l2_project(const FunctionSpace& space, const std::function<Vec2(const Vec2&)>& f);
Field l2_project(const FunctionSpace& space, const std::function<double(const Vec2&)>& f);

// Nodal interpolation of an analytic function (vector version applies the
// element's dof functionals to the Piola pullback per cell).
Field interpolate(const FunctionSpace& space, const std::function<Vec2(const Vec2&)>& f);
Field interpolate(const FunctionSpace& space, const std::function<double(const Vec2&)>& f);

// Nodal interpolation against a per-cell evaluator in reference coordinates
// (physical field values); shared facet dofs are written from the plus cell.
Field interpolate_cellwise(const FunctionSpace& space,
                           const std::function<Vec2(int cell, const Vec2& ref)>& eval);

// Nodal re-interpolation of a discrete field into another space on the same
// mesh; exact when the target contains the source cellwise (e.g. RT_0 into
// BDM_1, or vector components into DG P_r).
Field embed(const Field& src, const FunctionSpace& target);

// Cartesian components of a vector field interpolated into a scalar DG
// space; exact when the components are cellwise polynomials of the DG degree.
std::array<Field, 2> interpolate_components(const Field& u, const FunctionSpace& dg);

// u = grad-perp(psi) = (d2 psi, -d1 psi) interpolated into the target RT/BDM
// space. Requires stream in CG of order s+1 (target order s); on
// non-periodic meshes the stream must be constant on the boundary so the
// result is tangent to it. The result is pointwise divergence-free.
Field div_free_from_stream(const Field& stream, const FunctionSpace& target);

// The same map as a sparse matrix: column j holds the velocity-space
// interpolation coefficients of grad-perp of the j-th stream basis function,
// so stream_curl_matrix(cg, w) * psi.coeffs matches
// div_free_from_stream(psi, w).coeffs for every stream psi.  The local
// interpolation block is cell-independent: the contravariant pullback of
// grad-perp(psi) equals grad-perp of the reference restriction of psi.
SparseMat stream_curl_matrix(const FunctionSpace& stream_cg, const FunctionSpace& velocity);

// Random CG stream function: iid uniform(-1,1) coefficients from a seeded
// generator, boundary dofs zeroed on non-periodic meshes.
Field seeded_stream(const FunctionSpace& cg, unsigned seed);

// Point evaluation on one cell at reference points (physical values).
std::vector<Vec2> eval_vector(const Field& u, int cell, const std::vector<Vec2>& ref);
std::vector<double> eval_vector_divergence(const Field& u, int cell,
                                           const std::vector<Vec2>& ref);
// rot u = d1 u2 - d2 u1.
std::vector<double> eval_vector_rot(const Field& u, int cell, const std::vector<Vec2>& ref);
std::vector<double> eval_scalar(const Field& f, int cell, const std::vector<Vec2>& ref);
std::vector<Vec2> eval_scalar_gradient(const Field& f, int cell,
                                       const std::vector<Vec2>& ref);

// Max over interior facets and edge quadrature points of |[u . n_f]|; the
// normal-continuity certificate for RT/BDM coefficient vectors.
double max_normal_jump(const Field& u);

// Global dof ids of boundary-facet normal moments (vector spaces) or
// boundary nodes (CG); empty on periodic meshes.
std::vector<int> boundary_dofs(const FunctionSpace& space);

}  // namespace eulerfem
