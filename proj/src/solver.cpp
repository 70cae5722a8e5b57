#include "eulerfem/solver.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "eulerfem/spaces.hpp"

namespace eulerfem {

namespace {

Eigen::SparseMatrix<double> to_column_major(const SparseMat& a) {
    return Eigen::SparseMatrix<double>(a);
}

// Preconditioner adapter for Eigen's Krylov solvers that leaves a
// caller-owned incomplete factorization untouched when the solver installs
// a new matrix, so one factorization can serve many nearby systems.
struct FrozenPreconditioner {
    using StorageIndex = int;
    const Eigen::IncompleteLUT<double>* ilut = nullptr;

    FrozenPreconditioner() = default;
    template <typename Mat>
    explicit FrozenPreconditioner(const Mat&) {}
    template <typename Mat>
    FrozenPreconditioner& analyzePattern(const Mat&) {
        return *this;
    }
    template <typename Mat>
    FrozenPreconditioner& factorize(const Mat&) {
        return *this;
    }
    template <typename Mat>
    FrozenPreconditioner& compute(const Mat&) {
        return *this;
    }
    template <typename Rhs>
    Eigen::VectorXd solve(const Rhs& b) const {
        return ilut->solve(b);
    }
    Eigen::ComputationInfo info() const { return Eigen::Success; }
};

}  // namespace

// Solves the reduced Newton systems (B^T J_uu B) d = r.  The matrix changes
// every Newton refresh; the incomplete-LU preconditioner is rebuilt only
// when the Krylov iteration starts straining against it, and a one-shot
// direct solve backs up the rare case where a fresh preconditioner still
// fails.  Every returned solution is converged against the CURRENT matrix,
// so preconditioner staleness never leaks into the Newton iterates.
class ReducedLinearSolver {
public:
    void set_matrix(const SparseMat& reduced) {
        mat_ = to_column_major(reduced);
        solver_.setTolerance(1e-12);
        solver_.setMaxIterations(400);
        solver_.compute(mat_);  // frozen preconditioner: records the matrix only
    }

    bool has_matrix() const { return mat_.rows() > 0; }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) {
        if (!precond_ready_) rebuild_preconditioner();
        solver_.preconditioner().ilut = &ilut_;
        Eigen::VectorXd x = solver_.solve(rhs);
        if (solver_.info() != Eigen::Success) {
            // Stale preconditioner: rebuild from the current matrix and retry.
            rebuild_preconditioner();
            x = solver_.solve(rhs);
        }
        if (solver_.info() != Eigen::Success) {
            // Fresh preconditioner and still no convergence: direct fallback.
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(mat_);
            if (lu.info() != Eigen::Success)
                throw SolverError("reduced step system: factorization failed: " +
                                  lu.lastErrorMessage());
            x = lu.solve(rhs);
            precond_ready_ = false;
            return x;
        }
        if (solver_.iterations() > kRebuildAbove) precond_ready_ = false;
        return x;
    }

private:
    // Krylov sweeps tolerated before the preconditioner is declared stale;
    // a fresh build runs the measured systems in ~25 sweeps.
    static constexpr int kRebuildAbove = 80;

    void rebuild_preconditioner() {
        ilut_.setDroptol(1e-3);
        ilut_.setFillfactor(10);
        ilut_.compute(mat_);
        if (ilut_.info() != Eigen::Success)
            throw SolverError("reduced step system: incomplete factorization failed");
        precond_ready_ = true;
    }

    Eigen::SparseMatrix<double> mat_;
    Eigen::IncompleteLUT<double> ilut_;
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, FrozenPreconditioner> solver_;
    bool precond_ready_ = false;
};

Eigen::VectorXd lu_solve(const SparseMat& a, const Eigen::VectorXd& rhs) {
    if (a.rows() != a.cols() || a.rows() != rhs.size())
        throw InvalidArgument("lu_solve: dimension mismatch");
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(to_column_major(a));
    if (lu.info() != Eigen::Success)
        throw SolverError("sparse LU factorization failed: " + lu.lastErrorMessage());
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverError("sparse LU back-substitution failed");
    return x;
}

void LuSolver::factorize(const SparseMat& a) {
    if (a.rows() != a.cols()) throw InvalidArgument("LuSolver: matrix must be square");
    lu_.compute(to_column_major(a));
    if (lu_.info() != Eigen::Success) {
        ready_ = false;
        throw SolverError("sparse LU factorization failed: " + lu_.lastErrorMessage());
    }
    ready_ = true;
}

Eigen::VectorXd LuSolver::solve(const Eigen::VectorXd& rhs) const {
    if (!ready_) throw SolverError("LuSolver: solve before factorize");
    Eigen::VectorXd x = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success) throw SolverError("sparse LU back-substitution failed");
    return x;
}

SparseMat divergence_free_basis(const FunctionSpace& velocity) {
    if (!velocity.is_vector())
        throw InvalidArgument("divergence_free_basis: needs an RT/BDM space");
    const Mesh& mesh = *velocity.mesh;
    FunctionSpace cg = build_space(mesh, Family::CG, velocity.order + 1);
    SparseMat curl = stream_curl_matrix(cg, velocity);

    // Drop the stream nullspace: constants on the torus (pin one dof), the
    // boundary dofs on a slip boundary (tangency needs psi constant there,
    // and dropping every boundary dof also removes the constants).
    std::vector<char> drop(cg.dim, 0);
    if (mesh.periodic) {
        drop[0] = 1;
    } else {
        for (int d : boundary_dofs(cg)) drop[d] = 1;
    }
    std::vector<int> col_of(cg.dim, -1);
    int kept = 0;
    for (int j = 0; j < cg.dim; ++j)
        if (!drop[j]) col_of[j] = kept++;

    const int extra = mesh.periodic ? 2 : 0;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(curl.nonZeros()) +
                  static_cast<std::size_t>(extra) * velocity.dim);
    for (int r = 0; r < curl.outerSize(); ++r)
        for (SparseMat::InnerIterator it(curl, r); it; ++it)
            if (col_of[it.col()] >= 0)
                trips.emplace_back(static_cast<int>(it.row()), col_of[it.col()], it.value());
    if (mesh.periodic) {
        // Harmonic part: the two constant fields, unreachable from streams.
        Field ex = interpolate(velocity, [](const Vec2&) { return Vec2{1.0, 0.0}; });
        Field ey = interpolate(velocity, [](const Vec2&) { return Vec2{0.0, 1.0}; });
        for (int i = 0; i < velocity.dim; ++i) {
            if (ex.coeffs(i) != 0.0) trips.emplace_back(i, kept, ex.coeffs(i));
            if (ey.coeffs(i) != 0.0) trips.emplace_back(i, kept + 1, ey.coeffs(i));
        }
    }
    SparseMat out(velocity.dim, kept + extra);
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

TimeStepper::TimeStepper(const FunctionSpace& velocity, const FunctionSpace& pressure,
                         FluxMode mode, double dt, Forcing forcing, NewtonOptions opts)
    : velocity_(velocity),
      pressure_(pressure),
      mode_(mode),
      dt_(dt),
      forcing_(std::move(forcing)),
      opts_(opts),
      basis_(divergence_free_basis(velocity)),
      basis_t_(basis_.transpose()),
      div_(divergence_matrix(velocity, pressure)),
      linear_(std::make_unique<ReducedLinearSolver>()),
      p_last_{&pressure, Eigen::VectorXd::Zero(pressure.dim)} {
    check_velocity_pressure_pairing(velocity, pressure);
    if (dt <= 0.0) throw InvalidArgument("TimeStepper: dt must be positive");
    x_ = Eigen::VectorXd::Zero(velocity.dim + pressure.dim + 1);
}

TimeStepper::~TimeStepper() = default;

Field TimeStepper::advance(const Field& u, double t, StepReport* report) {
    if (u.space != &velocity_) throw InvalidArgument("TimeStepper: field not in velocity space");
    const int nu = velocity_.dim;
    const double t_mid = t + 0.5 * dt_;

    // The reduced iteration keeps every iterate in u + range(B), so the
    // input must sit on the constraint manifold to begin with.
    const double uscale = std::max(1.0, u.coeffs.lpNorm<Eigen::Infinity>());
    if ((div_ * u.coeffs).lpNorm<Eigen::Infinity>() > 1e-8 * uscale)
        throw InvalidArgument(
            "TimeStepper: input velocity is not weakly divergence-free; project it first");

    // Warm start: extrapolate along the trajectory when the caller stepped
    // consecutively (the incoming coefficients are bitwise the previous
    // return value), otherwise start from the given level.
    const bool continues =
        have_prev_ && (u.coeffs - x_.head(nu)).lpNorm<Eigen::Infinity>() == 0.0;
    if (continues)
        x_.head(nu) = 2.0 * u.coeffs - u_prev_in_;
    else
        x_.head(nu) = u.coeffs;
    u_prev_in_ = u.coeffs;
    have_prev_ = true;
    p_valid_ = false;
    t_mid_last_ = t_mid;

    // The Jacobian is refreshed at the start of every step; within a step it
    // is reused while the iteration contracts by at least 4x per update and
    // refreshed at the current iterate otherwise.
    bool want_jacobian = true;
    double prev_norm = std::numeric_limits<double>::infinity();
    double norm = 0.0;
    double best_norm = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_u;
    int iters = 0;
    bool converged = false;
    bool fresh_update = false;  // last update used a Jacobian assembled at its own state

    for (int iter = 0; iter < opts_.max_iters; ++iter) {
        AssembledResidual sys = assemble_step_residual(u, x_, velocity_, pressure_, dt_, t_mid,
                                                       mode_, forcing_, want_jacobian);
        Eigen::VectorXd reduced = basis_t_ * sys.residual.head(nu);
        norm = reduced.norm();
        if (!std::isfinite(norm))
            throw SolverError("newton: residual is not finite at t = " + std::to_string(t));
        if (norm < best_norm) {
            best_norm = norm;
            best_u = x_.head(nu);
        }
        if (norm < opts_.abs_tol) {
            converged = true;
            iters = iter;
            break;
        }
        if (fresh_update && norm > 0.5 * prev_norm && best_norm < opts_.stall_tol) {
            // A true Newton update no longer contracts the residual: the
            // iteration has reached the round-off floor of the assembly,
            // which is deep enough to accept.
            x_.head(nu) = best_u;
            norm = best_norm;
            converged = true;
            iters = iter;
            break;
        }
        if (want_jacobian) {
            refresh_jacobian(sys.jacobian);
            want_jacobian = false;
            fresh_update = true;
        } else if (norm > 0.25 * prev_norm) {
            // The Jacobian from earlier in the step has gone stale; rebuild
            // at the current state and retry the update from here.
            sys = assemble_step_residual(u, x_, velocity_, pressure_, dt_, t_mid, mode_,
                                         forcing_, true);
            refresh_jacobian(sys.jacobian);
            fresh_update = true;
        } else {
            fresh_update = false;
        }
        x_.head(nu) += basis_ * linear_->solve(-reduced);
        prev_norm = norm;
        iters = iter + 1;
    }
    if (!converged)
        throw SolverError("newton: no convergence after " + std::to_string(opts_.max_iters) +
                          " iterations at t = " + std::to_string(t) +
                          " (residual = " + std::to_string(norm) + ")");

    if (report) {
        report->newton_iters = iters;
        report->residual_norm = norm;
    }
    return Field{&velocity_, x_.head(nu)};
}

void TimeStepper::refresh_jacobian(const SparseMat& jacobian) {
    const int nu = velocity_.dim;
    SparseMat top = jacobian.topRows(nu);
    SparseMat juu = top.leftCols(nu);
    SparseMat reduced = basis_t_ * SparseMat(juu * basis_);
    linear_->set_matrix(reduced);
}

const Field& TimeStepper::pressure_field() {
    if (p_valid_) return p_last_;
    if (!have_prev_) return p_last_;  // no step taken yet: zero pressure
    const int nu = velocity_.dim;
    const int np = pressure_.dim;

    if (!p_solver_ready_) {
        // Bordered normal equations for the momentum rows: recover the
        // mean-zero pressure from D D^T p = -D g.  Columns of D at
        // constrained velocity dofs are dropped (those momentum rows carry
        // boundary reactions, not equations).
        SparseMat d = div_;
        auto bdofs = boundary_dofs(velocity_);
        if (!bdofs.empty()) {
            std::vector<char> fixed(nu, 0);
            for (int dof : bdofs) fixed[dof] = 1;
            std::vector<Eigen::Triplet<double>> keep;
            keep.reserve(static_cast<std::size_t>(d.nonZeros()));
            for (int r = 0; r < d.outerSize(); ++r)
                for (SparseMat::InnerIterator it(d, r); it; ++it)
                    if (!fixed[it.col()])
                        keep.emplace_back(static_cast<int>(it.row()),
                                          static_cast<int>(it.col()), it.value());
            d = SparseMat(np, nu);
            d.setFromTriplets(keep.begin(), keep.end());
        }
        d_free_ = d;
        SparseMat ddt = d * SparseMat(d.transpose());
        Eigen::VectorXd e = mean_vector(pressure_);
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(ddt.nonZeros()) + 2u * np);
        for (int r = 0; r < ddt.outerSize(); ++r)
            for (SparseMat::InnerIterator it(ddt, r); it; ++it)
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                   it.value());
        for (int k = 0; k < np; ++k) {
            trips.emplace_back(k, np, e(k));
            trips.emplace_back(np, k, e(k));
        }
        SparseMat bordered(np + 1, np + 1);
        bordered.setFromTriplets(trips.begin(), trips.end());
        bordered.makeCompressed();
        p_lu_.factorize(bordered);
        p_solver_ready_ = true;
    }

    // Pressure-free momentum residual at the converged state.
    Field u_prev{&velocity_, u_prev_in_};
    Eigen::VectorXd xp = x_;
    xp.segment(nu, np + 1).setZero();
    AssembledResidual sys = assemble_step_residual(u_prev, xp, velocity_, pressure_, dt_,
                                                   t_mid_last_, mode_, forcing_, false);
    // Momentum rows read F_u0 - D^T p, so the recovered pressure solves
    // (D D^T) p = D F_u0 in the least-squares sense; the border pins the
    // mean.  Fixed velocity columns are dropped from D, which removes the
    // boundary-reaction rows from the normal equations.
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(np + 1);
    rhs.head(np) = d_free_ * sys.residual.head(nu);
    Eigen::VectorXd sol = p_lu_.solve(rhs);
    p_last_.coeffs = sol.head(np);
    x_.segment(nu, np) = p_last_.coeffs;
    x_(nu + np) = 0.0;
    p_valid_ = true;
    return p_last_;
}

Field constrained_projection(const std::function<Vec2(const Vec2&)>& exact,
                             const FunctionSpace& velocity, const FunctionSpace& pressure) {
    check_velocity_pressure_pairing(velocity, pressure);
    const Mesh& mesh = *velocity.mesh;
    const int nu = velocity.dim;

    // Load vector with boosted quadrature, matching the plain L2 projection.
    const int deg = std::min(kMaxQuadDegree, 2 * (velocity.order + 1) + 6);
    auto rule = triangle_rule(deg);
    auto tab = velocity.vector_element->tabulate(rule.points);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nu);
    for (int c = 0; c < mesh.num_cells(); ++c) {
        auto jac = mesh.jacobian(c);
        auto g = CellGeometry::make(mesh.corner(c, 0), jac[0], jac[1]);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            Vec2 f = exact(mesh.map_to_physical(c, rule.points[q]));
            double w = rule.weights[q] * g.det;
            for (int i = 0; i < velocity.dofs_per_cell; ++i)
                b(velocity.dof(c, i)) +=
                    w * velocity.sign(c, i) * dot(f, piola_value(g, tab.value(q, i)));
        }
    }

    // Minimize ||u - f||_M over the divergence-free subspace: the reduced
    // normal equations have the same minimizer as the saddle formulation
    // and a fraction of its factorization footprint.
    SparseMat basis = divergence_free_basis(velocity);
    SparseMat m = mass_matrix(velocity);
    Eigen::SparseMatrix<double> gram =
        Eigen::SparseMatrix<double>(SparseMat(basis.transpose()) * SparseMat(m * basis));
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(gram);
    if (ldlt.info() != Eigen::Success)
        throw SolverError("constrained_projection: reduced Gram factorization failed");
    Eigen::VectorXd y = ldlt.solve(SparseMat(basis.transpose()) * b);
    if (ldlt.info() != Eigen::Success)
        throw SolverError("constrained_projection: reduced Gram solve failed");
    return Field{&velocity, basis * y};
}

}  // namespace eulerfem
