#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "eulerfem/harness.hpp"

namespace {

void print_taylor_green(const eulerfem::TaylorGreenReport& report) {
    std::printf("%4s  %-12s  %-6s  %-13s  %-10s  %-8s\n", "N", "L2 error", "order",
                "energy change", "max Newton", "seconds");
    for (std::size_t k = 0; k < report.rows.size(); ++k) {
        const auto& row = report.rows[k];
        std::string order = k == 0 ? std::string("--") : [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%.2f", report.orders[k - 1]);
            return std::string(buf);
        }();
        std::printf("%4d  %-12.4e  %-6s  %-13.2e  %-10d  %-8.1f\n", row.n, row.error,
                    order.c_str(), row.energy_drift, row.max_newton_iters, row.seconds);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structure-preserving H(div) finite element solver for incompressible Euler"};
    std::string experiment;
    app.add_option("experiment", experiment, "taylor-green | shear-layer | operator-check")
        ->required();
    std::string config_path, family, mode, out_dir;
    int order = 0, n = 0, snapshot_stride = 0;
    double dt = 0.0, t_end = 0.0;
    long long seed = 0;
    app.add_option("--config", config_path, "flat key=value config file");
    app.add_option("--family", family, "velocity element family: RT | BDM");
    app.add_option("--order", order, "velocity element order");
    app.add_option("--mode", mode, "flux mode: centred | upwind");
    app.add_option("--n", n, "squares per side of the structured mesh");
    app.add_option("--dt", dt, "time step");
    app.add_option("--t-end", t_end, "final time");
    app.add_option("--out", out_dir, "output directory for CSV/VTK files");
    app.add_option("--seed", seed, "base seed for randomized checks");
    app.add_option("--snapshot-stride", snapshot_stride, "steps between VTK snapshots");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    eulerfem::SimulationConfig config;
    try {
        if (!config_path.empty()) config = eulerfem::parse_config_file(config_path);
        eulerfem::apply_config_key(config, "experiment", experiment);
        if (app.count("--family")) eulerfem::apply_config_key(config, "family", family);
        if (app.count("--mode")) eulerfem::apply_config_key(config, "mode", mode);
        if (app.count("--order")) config.order = order;
        if (app.count("--n")) config.n = n;
        if (app.count("--dt")) config.dt = dt;
        if (app.count("--t-end")) config.t_end = t_end;
        if (app.count("--out")) config.out_dir = out_dir;
        if (app.count("--seed")) config.seed = static_cast<unsigned>(seed);
        if (app.count("--snapshot-stride")) config.snapshot_stride = snapshot_stride;
        if (config.order < 0 || (config.family == eulerfem::Family::BDM && config.order < 1))
            throw eulerfem::ConfigError("order must be >= 0 for RT and >= 1 for BDM");
    } catch (const eulerfem::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }

    try {
        if (config.experiment == "taylor-green") {
            std::printf("Taylor-Green, family %s, order %d, mode %s\n",
                        config.family == eulerfem::Family::RT ? "RT" : "BDM", config.order,
                        config.mode == eulerfem::FluxMode::Centred ? "centred" : "upwind");
            print_taylor_green(eulerfem::run_taylor_green(config));
        } else if (config.experiment == "shear-layer") {
            auto report = eulerfem::run_shear_layer(config);
            const auto& s = report.series;
            std::printf("shear layer: %zu steps, K(0) = %.12g, K(end) = %.12g\n", s.t.size() - 1,
                        s.energy.front(), s.energy.back());
            std::printf("relative energy drift: %.3e\n", report.energy_drift);
            std::printf("Z(0) = %.12g, Z(end) = %.12g\n", s.enstrophy.front(), s.enstrophy.back());
            for (const auto& w : report.warnings) std::printf("warning: %s\n", w.c_str());
        } else {
            auto report = eulerfem::run_operator_check(config);
            for (const auto& line : report.lines) std::printf("%s\n", line.c_str());
            std::printf("%d check failure(s) across %d trials\n", report.failures, report.trials);
            if (report.failures > 0) return 1;
        }
        if (!config.out_dir.empty())
            std::printf("outputs written to %s\n", config.out_dir.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
