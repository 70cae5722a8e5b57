#include "eulerfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>

namespace eulerfem {

namespace {

// Registers cell/local-edge pairs under a facet key. Cells are scanned in
// ascending id order, so the first toucher (the plus cell, which owns the
// canonical direction) is always the lower-indexed adjacent cell.
void add_facet_side(Mesh& mesh, std::map<std::pair<std::int64_t, std::int64_t>, int>& index,
                    std::pair<std::int64_t, std::int64_t> key, int cell, int le) {
    const auto& cc = mesh.cell_coords[cell];
    Vec2 tail = cc[kLocalEdgeVertices[le][0]];
    Vec2 head = cc[kLocalEdgeVertices[le][1]];
    auto it = index.find(key);
    if (it == index.end()) {
        Facet f;
        f.v0 = mesh.cells[cell][kLocalEdgeVertices[le][0]];
        f.v1 = mesh.cells[cell][kLocalEdgeVertices[le][1]];
        f.plus_cell = cell;
        f.plus_local = le;
        Vec2 t = head - tail;
        f.length = norm(t);
        f.normal = perp_cw(t * (1.0 / f.length));
        f.interior = false;
        index.emplace(key, mesh.num_facets());
        mesh.cell_facets[cell][le] = mesh.num_facets();
        mesh.cell_facet_aligned[cell][le] = true;
        mesh.facets.push_back(f);
    } else {
        Facet& f = mesh.facets[it->second];
        if (f.minus_cell != -1)
            throw InvalidArgument("mesh: facet shared by more than two cells");
        f.minus_cell = cell;
        f.minus_local = le;
        f.interior = true;
        mesh.cell_facets[cell][le] = it->second;
        mesh.cell_facet_aligned[cell][le] = false;
    }
}

void finalize_h(Mesh& mesh) {
    double h = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto& cc = mesh.cell_coords[c];
        for (int e = 0; e < 3; ++e) {
            h = std::max(h, norm(cc[kLocalEdgeVertices[e][1]] - cc[kLocalEdgeVertices[e][0]]));
        }
        if (mesh.det_jacobian(c) <= 0.0)
            throw InvalidArgument("mesh: cell with non-positive signed area");
    }
    mesh.h = h;
}

}  // namespace

Mesh build_structured_mesh(int n, bool periodic) {
    if (n < 2) throw InvalidArgument("build_structured_mesh: N must be >= 2");
    Mesh mesh;
    mesh.periodic = periodic;
    mesh.grid_n = n;
    const double dx = kTwoPi / n;

    if (periodic) {
        mesh.vertices.resize(static_cast<std::size_t>(n) * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) mesh.vertices[j * n + i] = {i * dx, j * dx};
    } else {
        mesh.vertices.resize(static_cast<std::size_t>(n + 1) * (n + 1));
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i) mesh.vertices[j * (n + 1) + i] = {i * dx, j * dx};
    }
    auto vid = [&](int i, int j) {
        if (periodic) return (j % n) * n + (i % n);
        return j * (n + 1) + i;
    };

    // Square (i, j) splits along its lower-left-to-upper-right diagonal into
    // CCW triangles (a, b, c) and (a, c, d).
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            Vec2 p00{i * dx, j * dx}, p10{(i + 1) * dx, j * dx};
            Vec2 p11{(i + 1) * dx, (j + 1) * dx}, p01{i * dx, (j + 1) * dx};
            int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
            mesh.cells.push_back({a, b, c});
            mesh.cell_coords.push_back({p00, p10, p11});
            mesh.cells.push_back({a, c, d});
            mesh.cell_coords.push_back({p00, p11, p01});
        }
    }
    mesh.cell_facets.assign(mesh.num_cells(), {-1, -1, -1});
    mesh.cell_facet_aligned.assign(mesh.num_cells(), {false, false, false});

    // Facets are identified by their midpoint on the half-step lattice
    // (wrapped modulo 2pi when periodic): vertex-pair keys would collide on
    // small periodic grids where distinct diagonals join the same classes.
    std::map<std::pair<std::int64_t, std::int64_t>, int> index;
    for (int cell = 0; cell < mesh.num_cells(); ++cell) {
        for (int le = 0; le < 3; ++le) {
            const auto& cc = mesh.cell_coords[cell];
            Vec2 mid = (cc[kLocalEdgeVertices[le][0]] + cc[kLocalEdgeVertices[le][1]]) * 0.5;
            auto half = [&](double coord) {
                auto k = static_cast<std::int64_t>(std::llround(coord * n / M_PI));
                if (periodic) k = ((k % (2 * n)) + 2 * n) % (2 * n);
                return k;
            };
            add_facet_side(mesh, index, {half(mid.x), half(mid.y)}, cell, le);
        }
    }
    if (periodic) {
        for (const auto& f : mesh.facets)
            if (!f.interior) throw InvalidArgument("mesh: periodic mesh has a boundary facet");
    }
    finalize_h(mesh);
    return mesh;
}

Mesh build_raw_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> cells) {
    Mesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.cells = std::move(cells);
    mesh.cell_coords.reserve(mesh.cells.size());
    for (const auto& cv : mesh.cells) {
        mesh.cell_coords.push_back(
            {mesh.vertices[cv[0]], mesh.vertices[cv[1]], mesh.vertices[cv[2]]});
    }
    mesh.cell_facets.assign(mesh.num_cells(), {-1, -1, -1});
    mesh.cell_facet_aligned.assign(mesh.num_cells(), {false, false, false});
    std::map<std::pair<std::int64_t, std::int64_t>, int> index;
    for (int cell = 0; cell < mesh.num_cells(); ++cell) {
        for (int le = 0; le < 3; ++le) {
            int a = mesh.cells[cell][kLocalEdgeVertices[le][0]];
            int b = mesh.cells[cell][kLocalEdgeVertices[le][1]];
            add_facet_side(mesh, index, {std::min(a, b), std::max(a, b)}, cell, le);
        }
    }
    finalize_h(mesh);
    return mesh;
}

FacetAdjacency facet_adjacency(const Mesh& mesh, int facet_id) {
    if (facet_id < 0 || facet_id >= mesh.num_facets())
        throw InvalidArgument("facet_adjacency: invalid facet id");
    const Facet& f = mesh.facets[facet_id];
    return {f.plus_cell, f.minus_cell, f.plus_local, f.minus_local};
}

std::string dump_mesh(const Mesh& mesh) {
    std::ostringstream os;
    os << "mesh periodic=" << (mesh.periodic ? 1 : 0) << " h=" << mesh.h << "\n";
    os << "vertices " << mesh.num_vertices() << "\n";
    for (const auto& v : mesh.vertices) os << v.x << " " << v.y << "\n";
    os << "cells " << mesh.num_cells() << "\n";
    for (const auto& c : mesh.cells) os << c[0] << " " << c[1] << " " << c[2] << "\n";
    os << "facets " << mesh.num_facets() << "\n";
    for (const auto& f : mesh.facets) {
        os << f.v0 << " " << f.v1 << " cells " << f.plus_cell << " " << f.minus_cell
           << " n " << f.normal.x << " " << f.normal.y << "\n";
    }
    return os.str();
}

}  // namespace eulerfem
