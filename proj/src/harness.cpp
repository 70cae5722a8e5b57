#include "eulerfem/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace eulerfem {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int pressure_order(Family family, int order) {
    return family == Family::RT ? order : order - 1;
}

std::string family_tag(Family f) { return f == Family::RT ? "rt" : "bdm"; }
std::string mode_tag(FluxMode m) { return m == FluxMode::Centred ? "centred" : "upwind"; }

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw ConfigError("trailing characters in value for " + key);
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("invalid numeric value for " + key + ": '" + value + "'");
    }
}

long parse_long(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long v = std::stol(value, &pos);
        if (pos != value.size()) throw ConfigError("trailing characters in value for " + key);
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer value for " + key + ": '" + value + "'");
    }
}

std::filesystem::path output_path(const SimulationConfig& config, const std::string& name) {
    std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);
    return dir / name;
}

void append_series_row(TimeSeries& series, double t, const Field& u, int iters) {
    series.t.push_back(t);
    series.energy.push_back(kinetic_energy(u));
    series.enstrophy.push_back(enstrophy(u));
    series.div_norm.push_back(divergence_l2(u));
    series.newton_iters.push_back(iters);
}

}  // namespace

void apply_config_key(SimulationConfig& config, const std::string& key,
                      const std::string& value) {
    if (key == "experiment") {
        if (value != "taylor-green" && value != "shear-layer" && value != "operator-check")
            throw ConfigError("unknown experiment: '" + value + "'");
        config.experiment = value;
    } else if (key == "family") {
        std::string v = lower(value);
        if (v == "rt")
            config.family = Family::RT;
        else if (v == "bdm")
            config.family = Family::BDM;
        else
            throw ConfigError("family must be RT or BDM, got '" + value + "'");
    } else if (key == "order") {
        config.order = static_cast<int>(parse_long(key, value));
    } else if (key == "mode") {
        std::string v = lower(value);
        if (v == "centred")
            config.mode = FluxMode::Centred;
        else if (v == "upwind")
            config.mode = FluxMode::Upwind;
        else
            throw ConfigError("mode must be centred or upwind, got '" + value + "'");
    } else if (key == "n") {
        config.n = static_cast<int>(parse_long(key, value));
    } else if (key == "dt") {
        config.dt = parse_double(key, value);
    } else if (key == "t_end") {
        config.t_end = parse_double(key, value);
    } else if (key == "sigma") {
        config.sigma = parse_double(key, value);
    } else if (key == "rho") {
        config.rho = parse_double(key, value);
    } else if (key == "delta") {
        config.delta = parse_double(key, value);
    } else if (key == "out_dir") {
        config.out_dir = value;
    } else if (key == "snapshot_stride") {
        config.snapshot_stride = static_cast<int>(parse_long(key, value));
    } else if (key == "seed") {
        config.seed = static_cast<unsigned>(parse_long(key, value));
    } else {
        throw ConfigError("unknown config key: '" + key + "'");
    }
}

SimulationConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    SimulationConfig config;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        apply_config_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

void write_csv(const TimeSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "t,energy,enstrophy,div_norm,newton_iters\n";
    for (std::size_t k = 0; k < series.t.size(); ++k)
        out << g17(series.t[k]) << ',' << g17(series.energy[k]) << ','
            << g17(series.enstrophy[k]) << ',' << g17(series.div_norm[k]) << ','
            << series.newton_iters[k] << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

TimeSeries read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "t,energy,enstrophy,div_norm,newton_iters")
        throw std::runtime_error("unexpected CSV header in " + path);
    TimeSeries series;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw std::runtime_error("bad CSV row in " + path);
        series.t.push_back(std::stod(cells[0]));
        series.energy.push_back(std::stod(cells[1]));
        series.enstrophy.push_back(std::stod(cells[2]));
        series.div_norm.push_back(std::stod(cells[3]));
        series.newton_iters.push_back(std::stoi(cells[4]));
    }
    return series;
}

void write_vtk(const Field& scalar_dg, const std::string& path, const std::string& field_name) {
    const FunctionSpace& sp = *scalar_dg.space;
    if (sp.family != Family::DG) throw InvalidArgument("write_vtk: needs a DG scalar field");
    const Mesh& mesh = *sp.mesh;
    const int nc = mesh.num_cells();
    const std::vector<Vec2> corners = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "# vtk DataFile Version 2.0\n";
    out << "eulerfem snapshot\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << 3 * nc << " double\n";
    for (int c = 0; c < nc; ++c)
        for (int k = 0; k < 3; ++k) {
            Vec2 p = mesh.corner(c, k);
            out << g17(p.x) << ' ' << g17(p.y) << " 0\n";
        }
    out << "CELLS " << nc << ' ' << 4 * nc << '\n';
    for (int c = 0; c < nc; ++c)
        out << "3 " << 3 * c << ' ' << 3 * c + 1 << ' ' << 3 * c + 2 << '\n';
    out << "CELL_TYPES " << nc << '\n';
    for (int c = 0; c < nc; ++c) out << "5\n";
    out << "POINT_DATA " << 3 * nc << '\n';
    out << "SCALARS " << field_name << " double 1\n";
    out << "LOOKUP_TABLE default\n";
    for (int c = 0; c < nc; ++c) {
        auto vals = eval_scalar(scalar_dg, c, corners);
        for (double v : vals) out << g17(v) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Vec2 taylor_green_velocity(const Vec2& p, double t, double sigma) {
    double decay = std::exp(-2.0 * t / sigma);
    return {std::sin(p.x) * std::cos(p.y) * decay, -std::cos(p.x) * std::sin(p.y) * decay};
}

Vec2 shear_layer_velocity(const Vec2& p, double rho, double delta) {
    double u1 = p.y <= kPi ? std::tanh((p.y - kPi / 2.0) / rho)
                           : std::tanh((3.0 * kPi / 2.0 - p.y) / rho);
    return {u1, delta * std::sin(p.x)};
}

TaylorGreenReport run_taylor_green(const SimulationConfig& config) {
    std::vector<int> ns = config.n > 0 ? std::vector<int>{config.n}
                                       : std::vector<int>{12, 24, 36, 48};
    const double dt = config.dt > 0.0 ? config.dt : 1e-2;
    const double t_end = config.t_end > 0.0 ? config.t_end : 1.0;
    const double sigma = config.sigma;
    const int nsteps = static_cast<int>(std::llround(t_end / dt));
    if (nsteps < 1 || std::abs(nsteps * dt - t_end) > 1e-9 * std::max(1.0, t_end))
        throw ConfigError("t_end must be an integer multiple of dt");

    TaylorGreenReport report;
    std::vector<double> errors;
    for (int n : ns) {
        auto tic = std::chrono::steady_clock::now();
        Mesh mesh = build_structured_mesh(n, false);
        FunctionSpace w = build_space(mesh, config.family, config.order);
        FunctionSpace q = build_space(mesh, Family::DG, pressure_order(config.family, config.order));

        Field u = constrained_projection(
            [&](const Vec2& p) { return taylor_green_velocity(p, 0.0, sigma); }, w, q);
        Forcing forcing = [sigma](const Vec2& p, double t) {
            return (-2.0 / sigma) * taylor_green_velocity(p, t, sigma);
        };
        TimeStepper stepper(w, q, config.mode, dt, forcing);

        TimeSeries series;
        append_series_row(series, 0.0, u, 0);
        SweepRow row;
        row.n = n;
        double k0 = series.energy.front();
        for (int step = 0; step < nsteps; ++step) {
            StepReport rep;
            u = stepper.advance(u, step * dt, &rep);
            append_series_row(series, (step + 1) * dt, u, rep.newton_iters);
            row.max_newton_iters = std::max(row.max_newton_iters, rep.newton_iters);
        }
        for (double k : series.energy)
            row.energy_drift = std::max(row.energy_drift, std::abs(k - k0) / k0);
        row.error = l2_error(u, [&](const Vec2& p) { return taylor_green_velocity(p, t_end, sigma); });
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
        report.rows.push_back(row);
        errors.push_back(row.error);

        if (!config.out_dir.empty()) {
            std::string name = "taylor_green_" + family_tag(config.family) +
                               std::to_string(config.order) + "_" + mode_tag(config.mode) + "_n" +
                               std::to_string(n) + ".csv";
            write_csv(series, output_path(config, name).string());
        }
    }
    if (ns.size() >= 2) report.orders = convergence_orders(errors, ns);
    return report;
}

ShearLayerReport run_shear_layer(const SimulationConfig& config) {
    const int n = config.n > 0 ? config.n : 48;
    const double dt = config.dt > 0.0 ? config.dt : 0.04;
    const double t_end = config.t_end > 0.0 ? config.t_end : 8.0;
    const int nsteps = static_cast<int>(std::llround(t_end / dt));
    if (nsteps < 1 || std::abs(nsteps * dt - t_end) > 1e-9 * std::max(1.0, t_end))
        throw ConfigError("t_end must be an integer multiple of dt");

    Mesh mesh = build_structured_mesh(n, true);
    FunctionSpace w = build_space(mesh, config.family, config.order);
    FunctionSpace q = build_space(mesh, Family::DG, pressure_order(config.family, config.order));
    FunctionSpace vort = build_space(mesh, Family::DG, config.order);

    const double rho = config.rho, delta = config.delta;
    Field u = constrained_projection(
        [&](const Vec2& p) { return shear_layer_velocity(p, rho, delta); }, w, q);
    TimeStepper stepper(w, q, config.mode, dt, {});

    auto snapshot_name = [&](double t) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", t);
        return "vorticity_" + family_tag(config.family) + std::to_string(config.order) + "_" +
               mode_tag(config.mode) + "_n" + std::to_string(n) + "_t" + buf + ".vtk";
    };
    auto want_snapshot = [&](int step) {
        if (config.out_dir.empty()) return false;
        if (config.snapshot_stride > 0)
            return step % config.snapshot_stride == 0 || step == nsteps;
        return step == 0 || step == nsteps / 2 || step == nsteps;
    };

    ShearLayerReport report;
    append_series_row(report.series, 0.0, u, 0);
    if (want_snapshot(0))
        write_vtk(vorticity_dg(u, vort), output_path(config, snapshot_name(0.0)).string());

    for (int step = 0; step < nsteps; ++step) {
        StepReport rep;
        u = stepper.advance(u, step * dt, &rep);
        double t = (step + 1) * dt;
        append_series_row(report.series, t, u, rep.newton_iters);
        if (want_snapshot(step + 1))
            write_vtk(vorticity_dg(u, vort), output_path(config, snapshot_name(t)).string());
    }

    const auto& e = report.series.energy;
    for (double k : e) report.energy_drift = std::max(report.energy_drift, std::abs(k - e[0]) / e[0]);

    const auto& z = report.series.enstrophy;
    const auto& ts = report.series.t;
    if (config.mode == FluxMode::Centred) {
        if (z.back() <= z.front())
            report.warnings.push_back(
                "centred run: enstrophy did not grow (Z(end) <= Z(0)); expected growth from "
                "unresolved small scales");
    } else {
        if (z.back() >= z.front())
            report.warnings.push_back(
                "upwind run: enstrophy did not decay (Z(end) >= Z(0)); expected dissipation");
        for (std::size_t k = 0; k + 1 < z.size(); ++k) {
            if (ts[k] >= 1.0 && z[k + 1] > z[k] * (1.0 + 1e-10)) {
                report.warnings.push_back("upwind run: enstrophy increased after t = 1 (at t = " +
                                          std::to_string(ts[k + 1]) + ")");
                break;
            }
        }
    }

    if (!config.out_dir.empty()) {
        std::string name = "shear_layer_" + family_tag(config.family) +
                           std::to_string(config.order) + "_" + mode_tag(config.mode) + "_n" +
                           std::to_string(n) + ".csv";
        write_csv(report.series, output_path(config, name).string());
    }
    return report;
}

OperatorCheckReport run_operator_check(const SimulationConfig& config) {
    const std::vector<int> ns = config.n > 0 ? std::vector<int>{config.n} : std::vector<int>{4, 6};
    const std::vector<int> orders = {1, 2};
    const int trials = 50;

    // Pinned thresholds for the operator property suite.
    const double tol_antisym = 1e-11;
    const double tol_const = 1e-12;
    const double tol_hat = 1e-11;
    const double tol_ep_rel = 1e-9;
    const double tol_equiv_rel = 1e-10;
    const double tol_self = 1e-11;
    const double tol_dissip = -1e-12;

    OperatorCheckReport report;
    for (int n : ns) {
        Mesh mesh = build_structured_mesh(n, false);
        for (int s : orders) {
            FunctionSpace w = build_space(mesh, config.family, s);
            FunctionSpace dg = build_space(mesh, Family::DG, s);
            FunctionSpace cg = build_space(mesh, Family::CG, s + 1);

            double max_antisym = 0.0, max_const = 0.0, max_hat = 0.0, max_ep = 0.0,
                   max_equiv = 0.0, max_self = 0.0, min_dissip = 0.0;

            for (int trial = 0; trial < trials; ++trial) {
                unsigned base = config.seed + 1000u * static_cast<unsigned>(100 * n + s) +
                                2u * static_cast<unsigned>(trial);
                Field u = div_free_from_stream(seeded_stream(cg, base), w);
                Field v = div_free_from_stream(seeded_stream(cg, base + 1), w);

                // (a) centred antisymmetry of the scalar operator matrix.
                SparseMat a_c = scalar_advection_matrix(u, dg, FluxMode::Centred);
                SparseMat a_up = scalar_advection_matrix(u, dg, FluxMode::Upwind);
                {
                    SparseMat at = SparseMat(a_c.transpose());
                    SparseMat sum = a_c + at;
                    for (int r = 0; r < sum.outerSize(); ++r)
                        for (SparseMat::InnerIterator it(sum, r); it; ++it)
                            max_antisym = std::max(max_antisym, std::abs(it.value()));
                }

                // (b) constants are annihilated (both flux modes).
                {
                    Field one = interpolate(dg, [](const Vec2&) { return 1.0; });
                    max_const = std::max(max_const,
                                         (a_c * one.coeffs).cwiseAbs().maxCoeff());
                    max_const = std::max(max_const,
                                         (a_up * one.coeffs).cwiseAbs().maxCoeff());
                }

                // (c) hat map recovers the velocity components.
                auto components = interpolate_components(u, dg);
                for (FluxMode mode : {FluxMode::Centred, FluxMode::Upwind}) {
                    AdvectionOperator op(u, dg, mode);
                    auto hat = hat_map(op);
                    for (int i = 0; i < 2; ++i)
                        max_hat = std::max(
                            max_hat,
                            (hat[i].coeffs - components[i].coeffs).cwiseAbs().maxCoeff());
                }

                for (FluxMode mode : {FluxMode::Centred, FluxMode::Upwind}) {
                    // (d) variational identity, relative defect.
                    EpResidual ep = ep_identity_residual(u, v, dg, mode);
                    max_ep = std::max(max_ep, ep.residual / std::max(ep.scale, 1e-12));

                    // (e) flux-form / rotational-form equivalence on div-free fields.
                    double t_gss = momentum_trilinear_gss(u, u, v, mode);
                    double t_rot = momentum_trilinear_rotational(u, u, v, mode);
                    double scale = std::max({std::abs(t_gss), std::abs(t_rot), 1e-12});
                    max_equiv = std::max(max_equiv, std::abs(t_gss - t_rot) / scale);

                    // (f) energy neutrality of self-advection.
                    double t_self = momentum_trilinear_gss(u, u, u, mode);
                    max_self = std::max(
                        max_self, std::abs(t_self) / std::max(1.0, kinetic_energy(u)));
                }

                // (g) upwind scalar dissipativity for a random DG function.
                {
                    std::mt19937 rng(base ^ 0x9e3779b9u);
                    std::uniform_real_distribution<double> dist(-1.0, 1.0);
                    Eigen::VectorXd a(dg.dim);
                    for (int i = 0; i < dg.dim; ++i) a(i) = dist(rng);
                    min_dissip = std::min(min_dissip, a.dot(a_up * a));
                }
                ++report.trials;
            }

            auto fmt = [](double v) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.2e", v);
                return std::string(buf);
            };
            int fails = 0;
            if (max_antisym >= tol_antisym) ++fails;
            if (max_const >= tol_const) ++fails;
            if (max_hat >= tol_hat) ++fails;
            if (max_ep >= tol_ep_rel) ++fails;
            if (max_equiv >= tol_equiv_rel) ++fails;
            if (max_self >= tol_self) ++fails;
            if (min_dissip <= tol_dissip) ++fails;
            report.failures += fails;
            report.lines.push_back(
                "n=" + std::to_string(n) + " s=" + std::to_string(s) + " " +
                family_tag(config.family) + ": antisym " + fmt(max_antisym) + ", const " +
                fmt(max_const) + ", hat " + fmt(max_hat) + ", identity(rel) " + fmt(max_ep) +
                ", equivalence(rel) " + fmt(max_equiv) + ", self-advection " + fmt(max_self) +
                ", dissipativity-min " + fmt(min_dissip) + ", trials " + std::to_string(trials) +
                (fails == 0 ? "" : "  [" + std::to_string(fails) + " CHECK(S) FAILED]"));
        }
    }
    return report;
}

}  // namespace eulerfem
