#include "eulerfem/elements.hpp"

#include <cmath>

namespace eulerfem {

namespace {

constexpr std::array<std::array<int, 2>, 3> kEdgeVerts = {{{1, 2}, {2, 0}, {0, 1}}};

// Monomial exponent table for total degree <= d, graded order.
std::vector<std::pair<int, int>> monomial_exponents(int d) {
    std::vector<std::pair<int, int>> exps;
    for (int total = 0; total <= d; ++total)
        for (int i = total; i >= 0; --i) exps.emplace_back(i, total - i);
    return exps;
}

double eval_monomial(const std::pair<int, int>& e, const Vec2& p) {
    return std::pow(p.x, e.first) * std::pow(p.y, e.second);
}

Vec2 eval_monomial_grad(const std::pair<int, int>& e, const Vec2& p) {
    auto [i, j] = e;
    double gx = (i == 0) ? 0.0 : i * std::pow(p.x, i - 1) * std::pow(p.y, j);
    double gy = (j == 0) ? 0.0 : j * std::pow(p.x, i) * std::pow(p.y, j - 1);
    return {gx, gy};
}

}  // namespace

double legendre_shifted(int k, double t) {
    double x = 2.0 * t - 1.0;
    double p0 = 1.0, p1 = x;
    if (k == 0) return 1.0;
    for (int m = 2; m <= k; ++m) {
        double p2 = ((2 * m - 1) * x * p1 - (m - 1) * p0) / m;
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

CellGeometry CellGeometry::make(const Vec2& origin, const Vec2& j0, const Vec2& j1) {
    double det = cross(j0, j1);
    if (det <= 0.0) throw InvalidArgument("piola: degenerate cell (det J <= 0)");
    return {origin, j0, j1, det};
}

Vec2 piola_value(const CellGeometry& g, const Vec2& vhat) {
    return (vhat.x * g.j0 + vhat.y * g.j1) * (1.0 / g.det);
}

double piola_divergence(const CellGeometry& g, double divhat) { return divhat / g.det; }

Mat2 piola_gradient(const CellGeometry& g, const Mat2& gh) {
    // grad v = (1/det) J Ghat J^{-1}
    double J[2][2] = {{g.j0.x, g.j1.x}, {g.j0.y, g.j1.y}};
    double Jinv[2][2] = {{g.j1.y / g.det, -g.j1.x / g.det}, {-g.j0.y / g.det, g.j0.x / g.det}};
    double M[2][2];
    for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q) M[p][q] = J[p][0] * gh.a[0][q] + J[p][1] * gh.a[1][q];
    Mat2 out;
    for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q)
            out.a[p][q] = (M[p][0] * Jinv[0][q] + M[p][1] * Jinv[1][q]) / g.det;
    return out;
}

Vec2 scalar_gradient(const CellGeometry& g, const Vec2& gh) {
    // J^{-T} ghat
    double Jinv[2][2] = {{g.j1.y / g.det, -g.j1.x / g.det}, {-g.j0.y / g.det, g.j0.x / g.det}};
    return {Jinv[0][0] * gh.x + Jinv[1][0] * gh.y, Jinv[0][1] * gh.x + Jinv[1][1] * gh.y};
}

std::vector<Vec2> lattice_points(int order) {
    if (order == 0) return {{1.0 / 3.0, 1.0 / 3.0}};
    std::vector<Vec2> pts;
    for (int j = 0; j <= order; ++j)
        for (int i = 0; i + j <= order; ++i)
            pts.push_back({static_cast<double>(i) / order, static_cast<double>(j) / order});
    return pts;
}

ScalarElement::ScalarElement(int order) : order_(order) {
    if (order < 0 || order > 4) throw InvalidArgument("ScalarElement: order out of scope");
    ndofs_ = (order + 1) * (order + 2) / 2;
    auto exps = monomial_exponents(order);

    if (order == 0) {
        nodes_.push_back({{1.0 / 3.0, 1.0 / 3.0}, NodeKind::Interior, 0, 0});
    } else {
        int interior_count = 0;
        for (int j = 0; j <= order; ++j) {
            for (int i = 0; i + j <= order; ++i) {
                Vec2 p{static_cast<double>(i) / order, static_cast<double>(j) / order};
                Node n{p, NodeKind::Interior, 0, 0};
                if (i == 0 && j == 0) {
                    n = {p, NodeKind::Vertex, 0, 0};
                } else if (i == order && j == 0) {
                    n = {p, NodeKind::Vertex, 1, 0};
                } else if (i == 0 && j == order) {
                    n = {p, NodeKind::Vertex, 2, 0};
                } else if (j == 0) {
                    n = {p, NodeKind::Edge, 2, i - 1};  // v0 -> v1, param i/order
                } else if (i + j == order) {
                    n = {p, NodeKind::Edge, 0, j - 1};  // v1 -> v2, param j/order
                } else if (i == 0) {
                    n = {p, NodeKind::Edge, 1, order - j - 1};  // v2 -> v0, param (order-j)/order
                } else {
                    n = {p, NodeKind::Interior, interior_count++, 0};
                }
                nodes_.push_back(n);
            }
        }
    }

    Eigen::MatrixXd vander(ndofs_, ndofs_);
    for (int i = 0; i < ndofs_; ++i)
        for (int j = 0; j < ndofs_; ++j) vander(i, j) = eval_monomial(exps[j], nodes_[i].point);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(vander);
    if (!lu.isInvertible()) throw InvalidArgument("ScalarElement: singular nodal system");
    coeff_ = lu.inverse();
}

ScalarTabulation ScalarElement::tabulate(const std::vector<Vec2>& points) const {
    auto exps = monomial_exponents(order_);
    ScalarTabulation tab;
    tab.num_points = static_cast<int>(points.size());
    tab.num_shapes = ndofs_;
    tab.values.resize(points.size() * ndofs_);
    tab.gradients.resize(points.size() * ndofs_);
    for (std::size_t q = 0; q < points.size(); ++q) {
        for (int j = 0; j < ndofs_; ++j) {
            double v = 0.0;
            Vec2 g{0.0, 0.0};
            for (int k = 0; k < ndofs_; ++k) {
                double c = coeff_(k, j);
                if (c == 0.0) continue;
                v += c * eval_monomial(exps[k], points[q]);
                g += c * eval_monomial_grad(exps[k], points[q]);
            }
            tab.values[q * ndofs_ + j] = v;
            tab.gradients[q * ndofs_ + j] = g;
        }
    }
    return tab;
}

VectorElement::VectorElement(Family family, int order) : family_(family), order_(order) {
    const int s = order;
    if (family == Family::RT) {
        if (s < 0 || s > 2) throw InvalidArgument("VectorElement: RT order out of scope");
        ndofs_ = (s + 1) * (s + 3);
    } else if (family == Family::BDM) {
        if (s < 1 || s > 2) throw InvalidArgument("VectorElement: BDM order out of scope");
        ndofs_ = (s + 1) * (s + 2);
    } else {
        throw InvalidArgument("VectorElement: family must be RT or BDM");
    }

    exps_ = monomial_exponents(s + 1);
    const int nm = static_cast<int>(exps_.size());
    auto index_of = [&](int i, int j) {
        for (int k = 0; k < nm; ++k)
            if (exps_[k].first == i && exps_[k].second == j) return k;
        throw InvalidArgument("VectorElement: exponent outside table");
    };

    auto scalar_count = (s + 1) * (s + 2) / 2;  // monomials of degree <= s
    auto add_prime = [&](const std::vector<double>& px, const std::vector<double>& py) {
        std::vector<double> div(nm, 0.0);
        for (int k = 0; k < nm; ++k) {
            auto [i, j] = exps_[k];
            if (px[k] != 0.0 && i > 0) div[index_of(i - 1, j)] += i * px[k];
            if (py[k] != 0.0 && j > 0) div[index_of(i, j - 1)] += j * py[k];
        }
        prime_x_.push_back(px);
        prime_y_.push_back(py);
        prime_div_.push_back(std::move(div));
    };

    for (int comp = 0; comp < 2; ++comp) {
        for (int m = 0; m < scalar_count; ++m) {
            std::vector<double> px(nm, 0.0), py(nm, 0.0);
            (comp == 0 ? px : py)[m] = 1.0;
            add_prime(px, py);
        }
    }
    if (family == Family::RT) {
        // x h for homogeneous h of degree s: components x^{a+1} y^b, x^a y^{b+1}.
        for (int t = 0; t <= s; ++t) {
            int a = s - t, b = t;
            std::vector<double> px(nm, 0.0), py(nm, 0.0);
            px[index_of(a + 1, b)] = 1.0;
            py[index_of(a, b + 1)] = 1.0;
            add_prime(px, py);
        }
    }

    // Dof functionals as point/weight quadrature lists.
    std::vector<std::vector<std::pair<Vec2, Vec2>>> dofs;
    auto erule = edge_rule(2 * s + 2);
    for (int le = 0; le < 3; ++le) {
        Vec2 tail = kReferenceVertices[kEdgeVerts[le][0]];
        Vec2 head = kReferenceVertices[kEdgeVerts[le][1]];
        Vec2 m = perp_cw(head - tail);  // outward, length-scaled
        for (int k = 0; k <= s; ++k) {
            std::vector<std::pair<Vec2, Vec2>> dof;
            for (std::size_t q = 0; q < erule.points.size(); ++q) {
                double t = erule.points[q].x;
                Vec2 pt = tail + t * (head - tail);
                dof.emplace_back(pt, m * (erule.weights[q] * legendre_shifted(k, t)));
            }
            dofs.push_back(std::move(dof));
        }
    }
    auto trule = triangle_rule(2 * s + 2);
    if (family == Family::RT && s >= 1) {
        auto wexps = monomial_exponents(s - 1);
        for (int comp = 0; comp < 2; ++comp) {
            for (const auto& e : wexps) {
                std::vector<std::pair<Vec2, Vec2>> dof;
                for (std::size_t q = 0; q < trule.points.size(); ++q) {
                    double w = trule.weights[q] * eval_monomial(e, trule.points[q]);
                    dof.emplace_back(trule.points[q],
                                     comp == 0 ? Vec2{w, 0.0} : Vec2{0.0, w});
                }
                dofs.push_back(std::move(dof));
            }
        }
    }
    if (family == Family::BDM && s >= 2) {
        // Moments against grad q for q in P_{s-1} without constants, then
        // against grad-perp of the cubic bubble times P_{s-2}.
        auto qexps = monomial_exponents(s - 1);
        for (const auto& e : qexps) {
            if (e.first + e.second == 0) continue;
            std::vector<std::pair<Vec2, Vec2>> dof;
            for (std::size_t q = 0; q < trule.points.size(); ++q) {
                Vec2 g = eval_monomial_grad(e, trule.points[q]);
                dof.emplace_back(trule.points[q], g * trule.weights[q]);
            }
            dofs.push_back(std::move(dof));
        }
        auto bexps = monomial_exponents(s - 2);
        for (const auto& e : bexps) {
            // b m with the cubic bubble b = x y (1 - x - y), expanded to
            // monomials so grad-perp = (d/dy, -d/dx) is exact.
            std::vector<std::pair<std::pair<int, int>, double>> bm = {
                {{e.first + 1, e.second + 1}, 1.0},
                {{e.first + 2, e.second + 1}, -1.0},
                {{e.first + 1, e.second + 2}, -1.0}};
            std::vector<std::pair<Vec2, Vec2>> dof;
            for (std::size_t q = 0; q < trule.points.size(); ++q) {
                const Vec2& p = trule.points[q];
                Vec2 g{0.0, 0.0};
                for (const auto& [be, bc] : bm) g += bc * eval_monomial_grad(be, p);
                dof.emplace_back(p, Vec2{g.y, -g.x} * trule.weights[q]);
            }
            dofs.push_back(std::move(dof));
        }
    }
    if (static_cast<int>(dofs.size()) != ndofs_)
        throw InvalidArgument("VectorElement: dof count mismatch");
    dof_quadrature_ = std::move(dofs);

    Eigen::MatrixXd vander(ndofs_, ndofs_);
    for (int j = 0; j < ndofs_; ++j) {
        Eigen::VectorXd col = apply_dofs_poly(j);
        vander.col(j) = col;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(vander);
    if (!lu.isInvertible()) throw InvalidArgument("VectorElement: singular nodal system");
    coeff_ = lu.inverse();
}

Eigen::VectorXd VectorElement::apply_dofs(const std::function<Vec2(const Vec2&)>& vhat) const {
    Eigen::VectorXd out(ndofs_);
    for (int i = 0; i < ndofs_; ++i) {
        double acc = 0.0;
        for (const auto& [pt, wt] : dof_quadrature_[i]) acc += dot(vhat(pt), wt);
        out(i) = acc;
    }
    return out;
}

Eigen::VectorXd VectorElement::apply_dofs_poly(int prime_index) const {
    const auto& px = prime_x_[prime_index];
    const auto& py = prime_y_[prime_index];
    auto eval = [&](const Vec2& p) {
        Vec2 v{0.0, 0.0};
        for (std::size_t k = 0; k < exps_.size(); ++k) {
            if (px[k] == 0.0 && py[k] == 0.0) continue;
            double m = eval_monomial(exps_[k], p);
            v.x += px[k] * m;
            v.y += py[k] * m;
        }
        return v;
    };
    return apply_dofs(eval);
}

VectorTabulation VectorElement::tabulate(const std::vector<Vec2>& points) const {
    VectorTabulation tab;
    tab.num_points = static_cast<int>(points.size());
    tab.num_shapes = ndofs_;
    tab.values.resize(points.size() * ndofs_);
    tab.gradients.resize(points.size() * ndofs_);
    tab.divergences.resize(points.size() * ndofs_);
    const int nm = static_cast<int>(exps_.size());
    for (std::size_t q = 0; q < points.size(); ++q) {
        // Evaluate the prime basis once per point, then apply the nodal
        // transform.
        std::vector<double> mv(nm);
        std::vector<Vec2> mg(nm);
        for (int k = 0; k < nm; ++k) {
            mv[k] = eval_monomial(exps_[k], points[q]);
            mg[k] = eval_monomial_grad(exps_[k], points[q]);
        }
        for (int j = 0; j < ndofs_; ++j) {
            Vec2 val{0.0, 0.0};
            Mat2 grad;
            double dv = 0.0;
            for (int p = 0; p < ndofs_; ++p) {
                double c = coeff_(p, j);
                if (c == 0.0) continue;
                const auto& px = prime_x_[p];
                const auto& py = prime_y_[p];
                const auto& pd = prime_div_[p];
                for (int k = 0; k < nm; ++k) {
                    if (px[k] != 0.0) {
                        val.x += c * px[k] * mv[k];
                        grad.a[0][0] += c * px[k] * mg[k].x;
                        grad.a[0][1] += c * px[k] * mg[k].y;
                    }
                    if (py[k] != 0.0) {
                        val.y += c * py[k] * mv[k];
                        grad.a[1][0] += c * py[k] * mg[k].x;
                        grad.a[1][1] += c * py[k] * mg[k].y;
                    }
                    if (pd[k] != 0.0) dv += c * pd[k] * mv[k];
                }
            }
            tab.values[q * ndofs_ + j] = val;
            tab.gradients[q * ndofs_ + j] = grad;
            tab.divergences[q * ndofs_ + j] = dv;
        }
    }
    return tab;
}

}  // namespace eulerfem
