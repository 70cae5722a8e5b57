#pragma once

// Structured simplicial triangulations of [0, 2pi]^2 with oriented facets,
// slip-boundary or fully periodic topology. Immutable after construction.

#include <array>
#include <string>
#include <vector>

#include "eulerfem/core.hpp"

namespace eulerfem {

// Local edge le of the reference triangle connects local vertices
// (le+1)%3 -> (le+2)%3, so edge le is opposite vertex le.
inline constexpr std::array<std::array<int, 2>, 3> kLocalEdgeVertices = {
    {{1, 2}, {2, 0}, {0, 1}}};

struct Facet {
    int v0 = -1, v1 = -1;        // vertex ids, canonical tail -> head
    int plus_cell = -1;          // cell whose CCW traversal runs v0 -> v1
    int minus_cell = -1;         // -1 on boundary facets
    int plus_local = -1;         // local edge index in plus cell
    int minus_local = -1;
    Vec2 normal;                 // unit, points out of the plus cell
    double length = 0.0;
    bool interior = false;
};

struct FacetAdjacency {
    int plus_cell;
    int minus_cell;  // -1 on boundary
    int plus_local;
    int minus_local;
};

struct Mesh {
    std::vector<Vec2> vertices;                   // representative coordinates
    std::vector<std::array<int, 3>> cells;        // vertex ids, CCW
    std::vector<std::array<Vec2, 3>> cell_coords; // per-cell realized corners
    std::vector<Facet> facets;
    std::vector<std::array<int, 3>> cell_facets;  // facet id per local edge
    std::vector<std::array<bool, 3>> cell_facet_aligned;  // cell traversal == canonical
    bool periodic = false;
    double h = 0.0;  // max cell diameter
    int grid_n = 0;  // N for structured meshes, 0 for raw meshes

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_cells() const { return static_cast<int>(cells.size()); }
    int num_facets() const { return static_cast<int>(facets.size()); }

    // Affine map data for cell c: x = corner0 + J xhat.
    const Vec2& corner(int cell, int local_vertex) const {
        return cell_coords[cell][local_vertex];
    }
    std::array<Vec2, 2> jacobian(int cell) const {
        const auto& cc = cell_coords[cell];
        return {cc[1] - cc[0], cc[2] - cc[0]};
    }
    double det_jacobian(int cell) const {
        auto j = jacobian(cell);
        return cross(j[0], j[1]);
    }
    double cell_area(int cell) const { return 0.5 * det_jacobian(cell); }
    Vec2 map_to_physical(int cell, const Vec2& ref) const {
        auto j = jacobian(cell);
        return cell_coords[cell][0] + ref.x * j[0] + ref.y * j[1];
    }
};

// N x N uniform grid of squares on [0, 2pi]^2, each split along the
// lower-left-to-upper-right diagonal; 2 N^2 cells. Periodic identification of
// opposite edges when requested. N < 2 is an error.
Mesh build_structured_mesh(int n, bool periodic);

// Arbitrary (non-periodic) triangle mesh from explicit vertex/cell lists;
// used by tests and debug tooling. Cells must be CCW.
Mesh build_raw_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> cells);

FacetAdjacency facet_adjacency(const Mesh& mesh, int facet_id);

// Plain-text dump (vertices, cells, facets) for debugging.
std::string dump_mesh(const Mesh& mesh);

}  // namespace eulerfem
