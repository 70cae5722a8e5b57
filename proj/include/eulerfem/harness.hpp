#pragma once

#include <string>
#include <vector>

#include "eulerfem/algebra.hpp"
#include "eulerfem/diagnostics.hpp"
#include "eulerfem/solver.hpp"

namespace eulerfem {

// Flat experiment configuration.  Zero values for n / dt / t_end mean "use
// the experiment's default" (mesh sweep for the vortex decay study, n = 48,
// dt = 0.04, t_end = 8 for the shear layer).
struct SimulationConfig {
    std::string experiment = "taylor-green";  // taylor-green | shear-layer | operator-check
    Family family = Family::RT;
    int order = 1;
    FluxMode mode = FluxMode::Centred;
    int n = 0;
    double dt = 0.0;
    double t_end = 0.0;
    double sigma = 100.0;      // vortex decay time scale
    double rho = 0.20943951023931953;  // shear layer width (pi/15)
    double delta = 0.05;       // shear layer perturbation amplitude
    std::string out_dir;       // empty: no files written
    int snapshot_stride = 0;   // steps between VTK snapshots; 0 = start/middle/end
    unsigned seed = 42;
};

// Parse a flat key=value config file ('#' comments, blank lines allowed).
// Unknown keys or malformed values throw ConfigError.
SimulationConfig parse_config_file(const std::string& path);
// Apply one key=value pair; shared by the file parser and CLI overrides.
void apply_config_key(SimulationConfig& config, const std::string& key,
                      const std::string& value);

struct TimeSeries {
    std::vector<double> t, energy, enstrophy, div_norm;
    std::vector<int> newton_iters;
};

// CSV with header `t,energy,enstrophy,div_norm,newton_iters`, 17 significant
// digits; read_csv round-trips exactly.
void write_csv(const TimeSeries& series, const std::string& path);
TimeSeries read_csv(const std::string& path);

// Legacy ASCII VTK 2.0 unstructured grid; the scalar DG field is sampled at
// the three corners of every cell on a per-cell-vertex (discontinuous) point
// expansion.
void write_vtk(const Field& scalar_dg, const std::string& path,
               const std::string& field_name = "vorticity");

// Exact vortex-decay velocity (sin x1 cos x2, -cos x1 sin x2) e^{-2t/sigma}.
Vec2 taylor_green_velocity(const Vec2& p, double t, double sigma);
// Double-shear-layer initial velocity (tanh profile + sinusoidal transverse
// perturbation).
Vec2 shear_layer_velocity(const Vec2& p, double rho, double delta);

struct SweepRow {
    int n = 0;
    double error = 0.0;
    double energy_drift = 0.0;
    int max_newton_iters = 0;
    double seconds = 0.0;
};

struct TaylorGreenReport {
    std::vector<SweepRow> rows;
    std::vector<double> orders;  // one per refinement between consecutive rows
};

// Forced vortex-decay convergence study on a slip-boundary mesh; runs the
// standard sweep n in {12, 24, 36, 48} unless config.n pins one resolution.
TaylorGreenReport run_taylor_green(const SimulationConfig& config);

struct ShearLayerReport {
    TimeSeries series;
    double energy_drift = 0.0;  // max_n |K(t_n) - K(0)| / K(0)
    std::vector<std::string> warnings;
};

// Periodic double-shear-layer run; writes the time series CSV and vorticity
// snapshots when config.out_dir is set, and reports soft enstrophy-behavior
// warnings (growth expected for centred fluxes, decay for upwind).
ShearLayerReport run_shear_layer(const SimulationConfig& config);

struct OperatorCheckReport {
    int trials = 0;
    int failures = 0;
    std::vector<std::string> lines;  // one summary line per check
};

// Property suite for the discrete operator algebra on small slip-boundary
// meshes: antisymmetry, annihilation of constants, component recovery of the
// hat map, the variational identity, flux-form/rotational equivalence,
// energy neutrality of the trilinear form, and upwind dissipativity.
OperatorCheckReport run_operator_check(const SimulationConfig& config);

}  // namespace eulerfem
